// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Synthetic multi-talker corpus: each speaker has a unit profile signature
// (d-vector stand-in) and a voice vector in feature space obtained through a
// fixed random linear map of the signature, so that profile matching remains
// learnable for speakers never seen in training. Tokens are rendered as
// frames_per_token consecutive frames of token embedding + voice + noise.
#pragma once

#include "saasr/config.hpp"
#include "saasr/sot.hpp"

#include <string>
#include <vector>

namespace saasr::synth {

// K profile vectors with identity bookkeeping and padding provenance.
struct SpeakerProfileSet {
    Mat profiles;                   // (K x f_d), one row per slot
    std::vector<int> speaker_ids;   // global inventory ids, unique
    std::vector<bool> padding_mask; // true when the slot was padded from another meeting

    int slots() const { return static_cast<int>(profiles.rows()); }
    void validate() const;
};

struct Utterance {
    std::string id;
    Mat features;            // (f_a x l_a)
    std::string source = "synthetic";
    sot::SOTSequence ref;    // speakers are 1-based profile-slot indices
    SpeakerProfileSet profiles;
};

struct Corpus {
    std::vector<Utterance> utterances;
};

// Global inventory of unit-norm signature vectors (f_d x num_speakers).
// Pairwise |cosine| is kept below 0.5 by resampling colliding vectors.
Mat make_speaker_inventory(int num_speakers, int f_d, uint64_t seed);

// Fixed corpus-level randomness: signatures, voice map, token embeddings.
class SynthWorld {
public:
    explicit SynthWorld(const SynthConfig& cfg);

    const SynthConfig& config() const { return cfg_; }
    const Mat& signatures() const { return signatures_; }   // f_d x num_speakers
    const Mat& voices() const { return voices_; }           // f_a x num_speakers
    Vec signature(int global_id) const;                     // 1-based
    Vec voice(int global_id) const;
    Vec token_embedding(int token_id) const;                // 1-based

    // transcript speakers are global inventory ids here.
    Mat render_utterance(const sot::AttributedTranscript& t, Rng& rng) const;

private:
    SynthConfig cfg_;
    Mat signatures_;
    Mat voices_;
    Mat token_embeds_;  // f_a x vocab_size
};

Corpus generate_corpus(const SynthWorld& world, int n_meetings, int utterances_per_meeting);

// Dataset directory layout: features/<id>.bin, profiles/<id>.bin,
// transcripts.txt (one line per utterance, manifest order), manifest.json.
void save_split(const std::string& dir, const Corpus& corpus, const std::string& config_hash);
Corpus load_split(const std::string& dir);

// Combined FNV hash over every file of a split (regeneration checks).
uint64_t split_hash(const std::string& dir);

}  // namespace saasr::synth
