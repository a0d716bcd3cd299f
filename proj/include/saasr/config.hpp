// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
#pragma once

#include "saasr/common.hpp"

#include <string>

namespace saasr {

// Reserved token IDs (1-based, members of the vocabulary).
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kScId = 3;   // speaker-change symbol
constexpr int kFirstContentId = 4;

// Architecture hyperparameters and ablation toggles.
struct ModelConfig {
    int vocab_size = 64;       // |V|, includes BOS/EOS/<sc>
    int feature_dim = 40;      // f^a
    int model_dim = 64;        // f^h
    int profile_dim = 32;      // f^d
    int attention_heads = 2;
    int ffn_dim = 128;
    int conv_kernel = 7;
    int subsample_factor = 4;
    int asr_enc_layers = 2;
    int asr_dec_layers = 2;
    int spk_dec_layers = 2;    // L^spk, counting the first cross-attention layer
    int context_enc_layers = 2;
    int cd_scorer_layers = 1;
    Real ctc_weight = 0.3;
    Real lambda_spk = 0.5;
    Real label_smoothing = 0.0;
    bool use_skip_connection = true;
    bool use_cd_scorer = true;
    bool use_context_enc = true;
    bool use_two_pass = true;
    bool mask_sc_in_spk_loss = false;  // exclude <sc> positions from the speaker loss
    bool normalize_profiles_for_cd = true;

    static ModelConfig desk();
    static ModelConfig paper();
    void validate() const;
};

struct SynthConfig {
    int vocab_size = 64;
    int feature_dim = 40;      // f^a
    int profile_dim = 32;      // f^d
    int frames_per_token = 8;  // r
    int speakers_per_meeting = 4;
    int profile_slots = 4;     // K
    int num_speakers = 24;     // global inventory size
    Real noise_std = 0.5;          // sigma, per feature entry
    Real profile_noise_std = 0.1;  // enrollment/test mismatch
    int min_segments = 1;
    int max_segments = 4;
    int min_segment_len = 2;
    int max_segment_len = 6;
    uint64_t seed = 1;

    static SynthConfig desk();
    void validate() const;
};

struct TrainConfig {
    Real lambda_spk = 0.5;
    Real ctc_weight = 0.3;
    int epochs = 12;
    int warmup_steps = 400;
    Real peak_lr = 2e-3;
    int batch_size = 8;
    Real grad_clip = 5.0;
    uint64_t seed = 1;
    bool spk_loss_token_averaged = true;  // alternative: sequence-summed
    int log_every = 25;
    int eval_every_epochs = 4;
    int eval_utterances = 64;  // dev subset decoded per evaluation

    static TrainConfig desk();
    static TrainConfig paper();
    void validate() const;
};

// Bundled run configuration, loadable from a JSON file with a `scale`
// preset ("desk" | "paper") and per-field overrides.
struct RunConfig {
    std::string scale = "desk";
    ModelConfig model;
    SynthConfig synth;
    TrainConfig train;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
    std::string config_hash() const;
};

}  // namespace saasr
