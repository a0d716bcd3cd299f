// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Joint loss (speaker cross-entropy + attention/CTC ASR loss), optimizer,
// training loop and the pre-training/initialization protocol.
#pragma once

#include "saasr/model.hpp"
#include "saasr/synth.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace saasr::train {

// Loss^asr = (1 - ctc_weight) * CE + ctc_weight * CTC. The CTC branch reads a
// linear projection of H^asr; a reference longer than l_h cannot align and
// throws DataError. ctc_weight == 0 skips the CTC branch entirely.
ag::Var asr_loss(const ag::Var& logits, const ag::Var& ctc_logits,
                 const std::vector<int>& ref_tokens, Real ctc_weight, int vocab_size,
                 Real label_smoothing = 0.0);

// Mean (or sum, when token_averaged = false) over unmasked positions of
// -log beta[n, s_n]. ref_speakers are 1-based slot indices.
ag::Var speaker_loss(const ag::Var& beta, const std::vector<int>& ref_speakers,
                     const std::vector<Real>& weights, bool token_averaged = true);

// Position weights for the speaker loss: ones, with <sc> positions zeroed
// when mask_sc is set.
std::vector<Real> speaker_loss_weights(const std::vector<int>& ref_tokens, bool mask_sc);

ag::Var joint_loss(const ag::Var& spk, const ag::Var& asr, Real lambda_spk);

struct JointLossOut {
    ag::Var joint, asr, spk;
    Mat beta;
};
JointLossOut joint_loss_forward(const Model& m, const synth::Utterance& u, Real lambda_spk,
                                Real ctc_weight, bool mask_sc, bool token_averaged);

// SOT-only forward (no speaker branch; zero profile injection), used to
// pre-train a plain multi-talker ASR model for the initialization protocol.
ag::Var asr_only_loss(const Model& m, const synth::Utterance& u, Real ctc_weight);

// Noam schedule: linear warmup to peak_lr, then inverse-sqrt decay.
Real noam_lr(int64_t step, Real peak_lr, int64_t warmup_steps);

class Adam {
public:
    explicit Adam(const std::map<std::string, ag::Var>& params, Real beta1 = 0.9,
                  Real beta2 = 0.98, Real eps = 1e-9);

    // Applies accumulated gradients; optional global-norm clipping.
    void step(Real lr, Real grad_clip = 0.0);
    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    struct Slot {
        ag::Var param;
        Mat m, v;
    };
    std::vector<std::pair<std::string, Slot>> slots_;
    Real beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

struct EpochEval {
    Real si_cer = -1.0;
    Real sd_cer = -1.0;
};

struct TrainResult {
    std::vector<std::string> metrics_lines;
    EpochEval final_eval;
    int64_t steps = 0;
};

class Trainer {
public:
    Trainer(Model& m, const TrainConfig& tc);

    // One optimizer step over a batch; returns the mean joint loss.
    Real train_step(const std::vector<const synth::Utterance*>& batch);
    Real last_asr_loss() const { return last_asr_; }
    Real last_spk_loss() const { return last_spk_; }
    int64_t step() const { return adam_.step_count(); }
    Real lr_at(int64_t step) const;

    void save_state(const std::string& dir, const RunConfig& rc) const;
    void load_state(const std::string& dir, const RunConfig& rc);

private:
    Model& model_;
    TrainConfig tc_;
    Adam adam_;
    Real last_asr_ = 0.0, last_spk_ = 0.0;
};

// Full training loop. When out_dir is non-empty, writes metrics.log and a
// final checkpoint under out_dir/checkpoint. dev_corpus, when present, is
// decoded greedily every eval_every_epochs epochs for SI/SD-CER lines.
// resume_dir, when non-empty, restores parameters and optimizer state first.
TrainResult train(Model& m, const synth::Corpus& train_corpus, const synth::Corpus* dev_corpus,
                  const TrainConfig& tc, const RunConfig& rc, const std::string& out_dir,
                  std::ostream* log = nullptr, const std::string& resume_dir = "");

// Speaker-encoder pre-training: frame-level embeddings regress the speaker's
// profile signature on single-speaker synthetic utterances. Returns the final
// regression loss. Only spk_enc.stack.* parameters are updated.
Real pretrain_spk_encoder(Model& m, const synth::SynthWorld& world, int steps, int batch_utts,
                          uint64_t seed, std::ostream* log = nullptr);

}  // namespace saasr::train
