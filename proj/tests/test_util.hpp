// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Shared fixtures for the unit tests: tiny model/synth configs that keep
// every test fast while exercising all architectural paths.
#pragma once

#include "saasr/config.hpp"
#include "saasr/synth.hpp"

namespace saasr::testutil {

inline ModelConfig tiny_model() {
    ModelConfig c;
    c.vocab_size = 16;
    c.feature_dim = 10;
    c.model_dim = 16;
    c.profile_dim = 8;
    c.attention_heads = 2;
    c.ffn_dim = 24;
    c.conv_kernel = 3;
    c.subsample_factor = 2;
    c.asr_enc_layers = 1;
    c.asr_dec_layers = 2;   // layer-1 injection case split needs >= 2
    c.spk_dec_layers = 3;   // first layer + 2 remaining
    c.context_enc_layers = 1;
    c.cd_scorer_layers = 1;
    return c;
}

inline SynthConfig tiny_synth() {
    SynthConfig c;
    c.vocab_size = 16;
    c.feature_dim = 10;
    c.profile_dim = 8;
    c.frames_per_token = 4;
    c.speakers_per_meeting = 2;
    c.profile_slots = 3;
    c.num_speakers = 8;
    c.noise_std = 0.2;
    c.profile_noise_std = 0.05;
    c.min_segments = 1;
    c.max_segments = 3;
    c.min_segment_len = 1;
    c.max_segment_len = 3;
    c.seed = 11;
    return c;
}

inline synth::Utterance make_utterance(const synth::SynthWorld& world, uint64_t seed) {
    synth::Corpus c = synth::generate_corpus(world, 2, 1);
    return c.utterances[seed % c.utterances.size()];
}

}  // namespace saasr::testutil
