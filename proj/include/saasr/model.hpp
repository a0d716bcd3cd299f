// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Joint speaker-attributed ASR model.
//
// The forward pass is decomposed so that decoding can interleave the two
// branches at each step:
//   1. asr_dec_phase1: embeddings + causal layer-1 self-attention -> "tap"
//   2. spk_branch:     context encoder + cross-attention (keys H^asr,
//                      values H^spk) + speaker decoder layers -> queries q
//   3. scorer:         cosine (context-independent) + transformer
//                      (context-dependent) scores -> beta, weighted profile
//   4. asr_dec_phase2: layer-1 source attention + feed-forward with the
//                      weighted profile injected, remaining layers, logits.
//
// The speaker branch is always computed bidirectionally over whatever prefix
// it is given; step-level causality during first-pass decoding comes from
// rerunning it on the growing prefix, which makes the final-position result
// identical to the full-sequence (second-pass) computation.
#pragma once

#include "saasr/config.hpp"
#include "saasr/nn.hpp"

#include <string>
#include <vector>

namespace saasr {

struct EncoderOutputs {
    ag::Var h_asr;  // (f_h x l_h)
    ag::Var h_spk;  // (f_h x l_h)
};

class Model {
public:
    Model(const ModelConfig& cfg, uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ModelConfig& config_mut() { return cfg_; }
    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    // ---- encoders ----
    int subsampled_len(int l_a) const { return l_a / cfg_.subsample_factor; }
    ag::Var asr_encode(const ag::Var& features) const;
    ag::Var spk_encode(const ag::Var& features) const;
    ag::Var asr_encode(const Mat& features) const { return asr_encode(ag::constant(features)); }
    ag::Var spk_encode(const Mat& features) const { return spk_encode(ag::constant(features)); }
    EncoderOutputs encode(const Mat& features) const;
    // Frame-level f_d embedding before the f_d -> f_h projection (the part
    // initialized from a signature-predictive pre-training checkpoint).
    ag::Var spk_frame_embedding(const ag::Var& features) const;
    ag::Var spk_frame_embedding(const Mat& features) const {
        return spk_frame_embedding(ag::constant(features));
    }

    // ---- ASR decoder ----
    struct DecPhase1 {
        ag::Var z1;   // embedded + positional, (f_h x M)
        ag::Var tap;  // post-self-attention layer-1 sequence, (f_h x M)
    };
    // in_tokens: 1-based ids, BOS-prefixed.
    DecPhase1 asr_dec_phase1(const std::vector<int>& in_tokens) const;
    // dbar: (f_d x M) weighted profiles, one per target position.
    // layer_outputs, when present, receives each decoder layer's output.
    ag::Var asr_dec_phase2(const DecPhase1& p1, const ag::Var& h_asr, const ag::Var& dbar,
                           std::vector<Mat>* layer_outputs = nullptr) const;
    ag::Var ctc_logits(const ag::Var& h_asr) const;  // (V+1 x l_h), blank last

    // ---- speaker branch ----
    struct SpkBranchOut {
        ag::Var q;     // (f_d x n)
        ag::Var last;  // last layer output (f_h x n)
        ag::Var skip;  // first-layer cross-attention output (f_h x n)
        Mat first_layer_attn;  // head-averaged (n x l_h), filled when requested
    };
    SpkBranchOut spk_branch(const ag::Var& tap, const ag::Var& h_asr, const ag::Var& h_spk,
                            bool want_attn = false) const;
    ag::Var context_encode(const ag::Var& tap) const;
    // q = W^q (last + skip) with the skip connection, W^q last otherwise.
    ag::Var combine_queries(const ag::Var& last, const ag::Var& skip) const;

    // ---- scorer ----
    ag::Var ci_scores(const ag::Var& q, const Mat& profiles) const;       // (n x K)
    ag::Var cd_scores_all(const ag::Var& q, const Mat& profiles) const;   // (1 x K)
    ag::Var cd_score_prefix(const ag::Var& q_prefix, const Vec& profile) const;  // (1 x 1)
    struct FuseOut {
        ag::Var fused;  // (n x K), pre-softmax
        ag::Var beta;   // (n x K), row-stochastic
        ag::Var dbar;   // (f_d x n)
    };
    // cd may be invalid (CD-Scorer ablated): fused scores reduce to ci.
    FuseOut fuse_and_weight(const ag::Var& ci, const ag::Var& cd, const Mat& profiles) const;

    // profiles as used by the CD-Scorer (length-normalized under the flag)
    Mat cd_profiles(const Mat& profiles) const;

    // read access for the incremental decoder
    const std::vector<nn::DecoderLayer>& dec_layers() const { return dec_layers_; }
    const nn::LayerNorm& dec_norm_out() const { return dec_norm_out_; }
    const nn::Linear& dec_out() const { return dec_out_; }
    const ag::Var& w_spk() const { return w_spk_; }
    const ag::Var& embedding_table() const { return embed_table_; }

private:
    ModelConfig cfg_;
    nn::ParamStore ps_;

    // encoders
    nn::Conv1d enc_front_;
    std::vector<nn::ConformerLayer> enc_layers_;
    nn::Conv1d spk_conv1_, spk_conv2_, spk_conv3_;
    nn::Linear spk_proj_;
    nn::LayerNorm spk_norm_;

    // ASR decoder
    ag::Var embed_table_;  // (f_h x V)
    std::vector<nn::DecoderLayer> dec_layers_;
    nn::LayerNorm dec_norm_out_;
    nn::Linear dec_out_;   // W^o, b^o
    ag::Var w_spk_;        // (f_h x f_d)
    nn::Linear ctc_head_;  // (V+1 x f_h)

    // speaker branch
    std::vector<nn::EncoderLayer> ctx_layers_;
    nn::LayerNorm spk_first_norm_q_, spk_first_norm_ff_;
    nn::MhaWeights spk_first_attn_;
    nn::FeedForward spk_first_ff_;
    std::vector<nn::DecoderLayer> spk_layers_;
    ag::Var w_q_;  // (f_d x f_h)

    // CD scorer
    nn::Linear cd_in_proj_;
    std::vector<nn::EncoderLayer> cd_layers_;
    nn::LayerNorm cd_norm_out_;
    nn::Linear cd_readout_;

    friend struct ModelProbe;  // test access to internals
};

// Batched teacher-forced forward shared by training and second-pass decoding.
struct TeacherForcedOut {
    ag::Var logits;      // (V x M), M = N+1 (BOS-shifted, EOS step last)
    ag::Var ctc;         // (V+1 x l_h)
    ag::Var fused;       // (N x K)
    ag::Var beta;        // (N x K)
    ag::Var q;           // (f_d x N)
    EncoderOutputs enc;
};
TeacherForcedOut teacher_forced_forward(const Model& m, const Mat& features,
                                        const std::vector<int>& ref_tokens, const Mat& profiles);

// Speaker-branch-only forward over a fixed token sequence (second pass and
// per-step first-pass evaluation). Returns fused scores / beta / q for the
// n = len(tokens_prefix) query positions.
struct SpkForwardOut {
    ag::Var fused;  // (n x K)
    ag::Var beta;   // (n x K)
    ag::Var dbar;   // (f_d x n)
    ag::Var q;      // (f_d x n)
    Mat first_layer_attn;
};
SpkForwardOut speaker_forward(const Model& m, const EncoderOutputs& enc, const ag::Var& tap,
                              const Mat& profiles, bool want_attn = false);

// ---- checkpoints: manifest.json + params.bin (float32) ----
void save_params(const std::string& dir, const nn::ParamStore& ps, const RunConfig& rc,
                 int64_t step);
// Returns the embedded run config; throws CheckpointError on malformed data.
RunConfig peek_checkpoint_config(const std::string& dir, int64_t* step = nullptr);
// Loads every parameter; shapes and config hash must match.
void load_params(const std::string& dir, nn::ParamStore& ps, const std::string& expect_hash);
// Loads only parameters whose name starts with one of the prefixes; returns
// the number of tensors loaded. Shape mismatches throw CheckpointError.
size_t load_params_subset(const std::string& dir, nn::ParamStore& ps,
                          const std::vector<std::string>& prefixes);

}  // namespace saasr
