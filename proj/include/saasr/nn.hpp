// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Layer library on top of the autodiff graph: parameter registry, linear /
// layer-norm / multi-head attention / feed-forward / conformer blocks.
#pragma once

#include "saasr/graph.hpp"

#include <map>
#include <string>
#include <vector>

namespace saasr::nn {

using ag::Var;

// Named parameter registry. Ordered iteration keeps optimizer state and
// checkpoints deterministic.
class ParamStore {
public:
    // Glorot-uniform init scaled by fan-in/fan-out unless std_override >= 0.
    Var create(const std::string& name, int rows, int cols, Rng& rng, Real std_override = -1.0);
    Var create_zeros(const std::string& name, int rows, int cols);
    Var create_ones(const std::string& name, int rows, int cols);

    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    const std::map<std::string, Var>& all() const { return params_; }

    void zero_grad();
    size_t total_parameters() const;

private:
    std::map<std::string, Var> params_;
};

struct Linear {
    Var w;  // (out x in)
    Var b;  // (out x 1), invalid when bias-free

    static Linear create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng,
                         bool bias = true);
    Var forward(const Var& x) const;
};

struct LayerNorm {
    Var gamma, beta;

    static LayerNorm create(ParamStore& ps, const std::string& prefix, int dim);
    Var forward(const Var& x) const { return ag::layer_norm_cols(x, gamma, beta); }
};

// Sinusoidal absolute positional encoding, (dim x len), columns are positions.
Mat positional_encoding(int dim, int len, int offset = 0);
Var add_positional(const Var& x, int offset = 0);
// x * sqrt(dim) + positions: keeps content from being swamped by positions.
Var scaled_positional(const Var& x, int offset = 0);

struct MhaWeights {
    Linear wq, wk, wv, wo;
    int heads = 1;

    static MhaWeights create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                             Rng& rng);
};

// Scaled dot-product multi-head attention over column sequences.
// q_in: (d x Tq), k_in/v_in: (d x Tk). mask, when present, is an additive
// (Tq x Tk) matrix applied to the pre-softmax scores. attn_out, when present,
// receives the head-averaged (Tq x Tk) attention weights.
Var mha(const MhaWeights& w, const Var& q_in, const Var& k_in, const Var& v_in,
        const Mat* mask = nullptr, Mat* attn_out = nullptr);

// Attention where key/value projections were precomputed (incremental decode).
struct ProjectedKv {
    Mat k;  // (d x Tk), already W_k * keys
    Mat v;  // (d x Tk)
};
ProjectedKv project_kv(const MhaWeights& w, const Mat& k_in, const Mat& v_in);
// Values-only step: no tape, used inside NoGradGuard regions.
Mat mha_step(const MhaWeights& w, const Mat& q_col, const ProjectedKv& kv);

Mat causal_mask(int n);

struct FeedForward {
    Linear lin1, lin2;

    static FeedForward create(ParamStore& ps, const std::string& prefix, int dim, int hidden,
                              Rng& rng);
    Var forward(const Var& x) const { return lin2.forward(ag::silu(lin1.forward(x))); }
};

// Pre-norm transformer encoder layer: x += MHA(LN(x)); x += FF(LN(x)).
struct EncoderLayer {
    LayerNorm norm_attn, norm_ff;
    MhaWeights attn;
    FeedForward ff;

    static EncoderLayer create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                               int ffn_dim, Rng& rng);
    Var forward(const Var& x, const Mat* mask = nullptr) const;
};

// Pre-norm transformer decoder layer with a source-attention block.
struct DecoderLayer {
    LayerNorm norm_self, norm_src, norm_ff;
    MhaWeights self_attn, src_attn;
    FeedForward ff;

    static DecoderLayer create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                               int ffn_dim, Rng& rng);
    // extra_ff_input, when valid, is added to the FF input (profile injection).
    Var forward(const Var& x, const Var& src_k, const Var& src_v, const Mat* self_mask,
                const Var& extra_ff_input = Var()) const;
    // Self-attention half only; returns x + MHA(LN(x)) (the layer-1 tap point).
    Var self_block(const Var& x, const Mat* self_mask) const;
    // Remainder of the layer given the self-attention output.
    Var src_ff_block(const Var& x_bar, const Var& src_k, const Var& src_v,
                     const Var& extra_ff_input = Var()) const;
};

// Conformer block: half-FF, MHSA, depthwise conv module, half-FF, final LN.
struct ConformerLayer {
    LayerNorm norm_ff1, norm_attn, norm_conv, norm_ff2, norm_out, norm_conv_mid;
    FeedForward ff1, ff2;
    MhaWeights attn;
    Linear conv_pw1, conv_pw2;
    Var conv_dw;  // (dim x kernel)

    static ConformerLayer create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                                 int ffn_dim, int conv_kernel, Rng& rng);
    Var forward(const Var& x) const;
};

struct Conv1d {
    Linear proj;  // (out x in*k) over im2col windows
    int kernel = 1, stride = 1, pad = 0;

    static Conv1d create(ParamStore& ps, const std::string& prefix, int in, int out, int kernel,
                         int stride, int pad, Rng& rng);
    Var forward(const Var& x) const;
};

}  // namespace saasr::nn
