// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/nn.hpp"

namespace saasr::nn {

Var ParamStore::create(const std::string& name, int rows, int cols, Rng& rng,
                       Real std_override) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    const Real bound = (std_override >= 0.0)
                           ? std_override
                           : std::sqrt(6.0 / static_cast<Real>(rows + cols));
    Mat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
    Var v = ag::leaf(std::move(m));
    params_.emplace(name, v);
    return v;
}

Var ParamStore::create_zeros(const std::string& name, int rows, int cols) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Var v = ag::leaf(Mat::Zero(rows, cols));
    params_.emplace(name, v);
    return v;
}

Var ParamStore::create_ones(const std::string& name, int rows, int cols) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Var v = ag::leaf(Mat::Ones(rows, cols));
    params_.emplace(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : params_) v.zero_grad();
}

size_t ParamStore::total_parameters() const {
    size_t n = 0;
    for (const auto& [name, v] : params_) n += static_cast<size_t>(v.rows() * v.cols());
    return n;
}

Linear Linear::create(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng,
                      bool bias) {
    Linear l;
    l.w = ps.create(prefix + ".w", out, in, rng);
    if (bias) l.b = ps.create_zeros(prefix + ".b", out, 1);
    return l;
}

Var Linear::forward(const Var& x) const {
    Var y = ag::matmul(w, x);
    if (b.valid()) y = ag::add_colvec(y, b);
    return y;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& prefix, int dim) {
    LayerNorm ln;
    ln.gamma = ps.create_ones(prefix + ".gamma", dim, 1);
    ln.beta = ps.create_zeros(prefix + ".beta", dim, 1);
    return ln;
}

Mat positional_encoding(int dim, int len, int offset) {
    Mat pe(dim, len);
    for (int pos = 0; pos < len; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            const Real angle = (pos + offset) / std::pow(10000.0, static_cast<Real>(i) / dim);
            pe(i, pos) = std::sin(angle);
            if (i + 1 < dim) pe(i + 1, pos) = std::cos(angle);
        }
    }
    return pe;
}

Var add_positional(const Var& x, int offset) {
    return ag::add(x, ag::constant(positional_encoding(static_cast<int>(x.rows()),
                                                       static_cast<int>(x.cols()), offset)));
}

Var scaled_positional(const Var& x, int offset) {
    return add_positional(ag::scale(x, std::sqrt(static_cast<Real>(x.rows()))), offset);
}

MhaWeights MhaWeights::create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                              Rng& rng) {
    if (dim % heads != 0) throw ConfigError("mha: dim must be divisible by heads");
    MhaWeights w;
    w.heads = heads;
    w.wq = Linear::create(ps, prefix + ".wq", dim, dim, rng);
    w.wk = Linear::create(ps, prefix + ".wk", dim, dim, rng);
    w.wv = Linear::create(ps, prefix + ".wv", dim, dim, rng);
    w.wo = Linear::create(ps, prefix + ".wo", dim, dim, rng);
    return w;
}

Var mha(const MhaWeights& w, const Var& q_in, const Var& k_in, const Var& v_in, const Mat* mask,
        Mat* attn_out) {
    const int d = static_cast<int>(q_in.rows());
    const int dh = d / w.heads;
    if (k_in.cols() != v_in.cols()) throw DataError("mha: key/value length mismatch");
    Var q = w.wq.forward(q_in);
    Var k = w.wk.forward(k_in);
    Var v = w.wv.forward(v_in);
    const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
    Var mask_var;
    if (mask) mask_var = ag::constant(*mask);

    std::vector<Var> head_outs;
    head_outs.reserve(w.heads);
    if (attn_out) *attn_out = Mat::Zero(q_in.cols(), k_in.cols());
    for (int h = 0; h < w.heads; ++h) {
        Var qh = ag::slice_rows(q, h * dh, dh);
        Var kh = ag::slice_rows(k, h * dh, dh);
        Var vh = ag::slice_rows(v, h * dh, dh);
        Var scores = ag::scale(ag::matmul(ag::transpose(qh), kh), inv_sqrt);  // Tq x Tk
        if (mask) scores = ag::add(scores, mask_var);
        Var attn = ag::softmax_rows(scores);
        if (attn_out) *attn_out += attn.value() / static_cast<Real>(w.heads);
        head_outs.push_back(ag::matmul(vh, ag::transpose(attn)));  // dh x Tq
    }
    return w.wo.forward(ag::concat_rows(head_outs));
}

ProjectedKv project_kv(const MhaWeights& w, const Mat& k_in, const Mat& v_in) {
    ProjectedKv kv;
    kv.k = w.wk.w.value() * k_in;
    if (w.wk.b.valid()) kv.k.colwise() += Eigen::VectorXd(w.wk.b.value().col(0));
    kv.v = w.wv.w.value() * v_in;
    if (w.wv.b.valid()) kv.v.colwise() += Eigen::VectorXd(w.wv.b.value().col(0));
    return kv;
}

Mat mha_step(const MhaWeights& w, const Mat& q_col, const ProjectedKv& kv) {
    const int d = static_cast<int>(q_col.rows());
    const int dh = d / w.heads;
    Mat q = w.wq.w.value() * q_col;
    if (w.wq.b.valid()) q += w.wq.b.value();
    const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
    Mat merged(d, 1);
    for (int h = 0; h < w.heads; ++h) {
        Eigen::RowVectorXd scores =
            q.block(h * dh, 0, dh, 1).transpose() * kv.k.middleRows(h * dh, dh) * inv_sqrt;
        const Real m = scores.maxCoeff();
        Eigen::RowVectorXd a = (scores.array() - m).exp();
        a /= a.sum();
        merged.block(h * dh, 0, dh, 1) = kv.v.middleRows(h * dh, dh) * a.transpose();
    }
    Mat out = w.wo.w.value() * merged;
    if (w.wo.b.valid()) out += w.wo.b.value();
    return out;
}

Mat causal_mask(int n) {
    Mat m = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m(i, j) = -1e30;
    return m;
}

FeedForward FeedForward::create(ParamStore& ps, const std::string& prefix, int dim, int hidden,
                                Rng& rng) {
    FeedForward f;
    f.lin1 = Linear::create(ps, prefix + ".lin1", dim, hidden, rng);
    f.lin2 = Linear::create(ps, prefix + ".lin2", hidden, dim, rng);
    return f;
}

EncoderLayer EncoderLayer::create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                                  int ffn_dim, Rng& rng) {
    EncoderLayer l;
    l.norm_attn = LayerNorm::create(ps, prefix + ".norm_attn", dim);
    l.norm_ff = LayerNorm::create(ps, prefix + ".norm_ff", dim);
    l.attn = MhaWeights::create(ps, prefix + ".attn", dim, heads, rng);
    l.ff = FeedForward::create(ps, prefix + ".ff", dim, ffn_dim, rng);
    return l;
}

Var EncoderLayer::forward(const Var& x, const Mat* mask) const {
    Var h = norm_attn.forward(x);
    Var y = ag::add(x, mha(attn, h, h, h, mask));
    return ag::add(y, ff.forward(norm_ff.forward(y)));
}

DecoderLayer DecoderLayer::create(ParamStore& ps, const std::string& prefix, int dim, int heads,
                                  int ffn_dim, Rng& rng) {
    DecoderLayer l;
    l.norm_self = LayerNorm::create(ps, prefix + ".norm_self", dim);
    l.norm_src = LayerNorm::create(ps, prefix + ".norm_src", dim);
    l.norm_ff = LayerNorm::create(ps, prefix + ".norm_ff", dim);
    l.self_attn = MhaWeights::create(ps, prefix + ".self_attn", dim, heads, rng);
    l.src_attn = MhaWeights::create(ps, prefix + ".src_attn", dim, heads, rng);
    l.ff = FeedForward::create(ps, prefix + ".ff", dim, ffn_dim, rng);
    return l;
}

Var DecoderLayer::self_block(const Var& x, const Mat* self_mask) const {
    Var h = norm_self.forward(x);
    return ag::add(x, mha(self_attn, h, h, h, self_mask));
}

Var DecoderLayer::src_ff_block(const Var& x_bar, const Var& src_k, const Var& src_v,
                               const Var& extra_ff_input) const {
    Var h = norm_src.forward(x_bar);
    Var x2 = ag::add(x_bar, mha(src_attn, h, src_k, src_v));
    Var ff_in = norm_ff.forward(x2);
    if (extra_ff_input.valid()) ff_in = ag::add(ff_in, extra_ff_input);
    return ag::add(x2, ff.forward(ff_in));
}

Var DecoderLayer::forward(const Var& x, const Var& src_k, const Var& src_v, const Mat* self_mask,
                          const Var& extra_ff_input) const {
    return src_ff_block(self_block(x, self_mask), src_k, src_v, extra_ff_input);
}

ConformerLayer ConformerLayer::create(ParamStore& ps, const std::string& prefix, int dim,
                                      int heads, int ffn_dim, int conv_kernel, Rng& rng) {
    ConformerLayer l;
    l.norm_ff1 = LayerNorm::create(ps, prefix + ".norm_ff1", dim);
    l.norm_attn = LayerNorm::create(ps, prefix + ".norm_attn", dim);
    l.norm_conv = LayerNorm::create(ps, prefix + ".norm_conv", dim);
    l.norm_ff2 = LayerNorm::create(ps, prefix + ".norm_ff2", dim);
    l.norm_out = LayerNorm::create(ps, prefix + ".norm_out", dim);
    l.norm_conv_mid = LayerNorm::create(ps, prefix + ".norm_conv_mid", dim);
    l.ff1 = FeedForward::create(ps, prefix + ".ff1", dim, ffn_dim, rng);
    l.ff2 = FeedForward::create(ps, prefix + ".ff2", dim, ffn_dim, rng);
    l.attn = MhaWeights::create(ps, prefix + ".attn", dim, heads, rng);
    l.conv_pw1 = Linear::create(ps, prefix + ".conv_pw1", dim, 2 * dim, rng);
    l.conv_pw2 = Linear::create(ps, prefix + ".conv_pw2", dim, dim, rng);
    l.conv_dw = ps.create(prefix + ".conv_dw", dim, conv_kernel, rng);
    return l;
}

Var ConformerLayer::forward(const Var& x) const {
    Var y = ag::add(x, ag::scale(ff1.forward(norm_ff1.forward(x)), 0.5));
    Var h = norm_attn.forward(y);
    y = ag::add(y, mha(attn, h, h, h));
    // conv module: pointwise -> GLU -> depthwise -> LN -> SiLU -> pointwise
    Var c = conv_pw1.forward(norm_conv.forward(y));
    c = ag::glu_rows(c);
    c = ag::depthwise_conv1d(c, conv_dw);
    c = ag::silu(norm_conv_mid.forward(c));
    y = ag::add(y, conv_pw2.forward(c));
    y = ag::add(y, ag::scale(ff2.forward(norm_ff2.forward(y)), 0.5));
    return norm_out.forward(y);
}

Conv1d Conv1d::create(ParamStore& ps, const std::string& prefix, int in, int out, int kernel,
                      int stride, int pad, Rng& rng) {
    Conv1d c;
    c.kernel = kernel;
    c.stride = stride;
    c.pad = pad;
    c.proj = Linear::create(ps, prefix, in * kernel, out, rng);
    return c;
}

Var Conv1d::forward(const Var& x) const {
    return proj.forward(ag::im2col(x, kernel, stride, pad));
}

}  // namespace saasr::nn
