// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/model.hpp"

#include "saasr/io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace saasr {

namespace fs = std::filesystem;
using nlohmann::json;
using ag::Var;

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(substream_seed(init_seed, 0x90DE1ull));
    const int d = cfg.model_dim;
    const int fd = cfg.profile_dim;
    const int heads = cfg.attention_heads;
    const int ffn = cfg.ffn_dim;

    enc_front_ = nn::Conv1d::create(ps_, "asr_enc.front", cfg.feature_dim, d,
                                    cfg.subsample_factor, cfg.subsample_factor, 0, rng);
    for (int i = 0; i < cfg.asr_enc_layers; ++i)
        enc_layers_.push_back(nn::ConformerLayer::create(
            ps_, "asr_enc.layer" + std::to_string(i), d, heads, ffn, cfg.conv_kernel, rng));

    spk_conv1_ = nn::Conv1d::create(ps_, "spk_enc.stack.conv1", cfg.feature_dim, d, 3, 1, 1, rng);
    spk_conv2_ = nn::Conv1d::create(ps_, "spk_enc.stack.conv2", d, d, cfg.subsample_factor,
                                    cfg.subsample_factor, 0, rng);
    spk_conv3_ = nn::Conv1d::create(ps_, "spk_enc.stack.conv3", d, fd, 3, 1, 1, rng);
    spk_proj_ = nn::Linear::create(ps_, "spk_enc.proj", fd, d, rng);
    spk_norm_ = nn::LayerNorm::create(ps_, "spk_enc.norm", d);

    embed_table_ = ps_.create("asr_dec.embed", d, cfg.vocab_size, rng);
    for (int i = 0; i < cfg.asr_dec_layers; ++i)
        dec_layers_.push_back(nn::DecoderLayer::create(ps_, "asr_dec.layer" + std::to_string(i),
                                                       d, heads, ffn, rng));
    dec_norm_out_ = nn::LayerNorm::create(ps_, "asr_dec.norm_out", d);
    dec_out_ = nn::Linear::create(ps_, "asr_dec.out", d, cfg.vocab_size, rng);
    w_spk_ = ps_.create("asr_dec.w_spk", d, fd, rng);
    ctc_head_ = nn::Linear::create(ps_, "ctc.head", d, cfg.vocab_size + 1, rng);

    for (int i = 0; i < cfg.context_enc_layers; ++i)
        ctx_layers_.push_back(nn::EncoderLayer::create(ps_, "ctx_enc.layer" + std::to_string(i),
                                                       d, heads, ffn, rng));
    spk_first_norm_q_ = nn::LayerNorm::create(ps_, "spk_dec.first.norm_q", d);
    spk_first_attn_ = nn::MhaWeights::create(ps_, "spk_dec.first.attn", d, heads, rng);
    spk_first_norm_ff_ = nn::LayerNorm::create(ps_, "spk_dec.first.norm_ff", d);
    spk_first_ff_ = nn::FeedForward::create(ps_, "spk_dec.first.ff", d, ffn, rng);
    for (int i = 1; i < cfg.spk_dec_layers; ++i)
        spk_layers_.push_back(nn::DecoderLayer::create(ps_, "spk_dec.layer" + std::to_string(i),
                                                       d, heads, ffn, rng));
    w_q_ = ps_.create("spk_dec.w_q", fd, d, rng);

    cd_in_proj_ = nn::Linear::create(ps_, "cd.in_proj", fd, d, rng);
    for (int i = 0; i < cfg.cd_scorer_layers; ++i)
        cd_layers_.push_back(nn::EncoderLayer::create(ps_, "cd.layer" + std::to_string(i), d,
                                                      heads, ffn, rng));
    cd_norm_out_ = nn::LayerNorm::create(ps_, "cd.norm_out", d);
    cd_readout_ = nn::Linear::create(ps_, "cd.readout", d, 1, rng);
}

// ---------------------------------------------------------------------------
// encoders
// ---------------------------------------------------------------------------

Var Model::asr_encode(const Var& features) const {
    if (features.rows() != cfg_.feature_dim)
        throw DataError("asr_encode: expected " + std::to_string(cfg_.feature_dim) +
                        " feature rows, got " + std::to_string(features.rows()));
    if (features.cols() < cfg_.subsample_factor)
        throw DataError("asr_encode: input shorter than the subsampling factor");
    if (!features.value().allFinite()) throw DataError("asr_encode: non-finite features");
    Var x = ag::silu(enc_front_.forward(features));
    x = nn::add_positional(x);  // the conv front learns its own scale
    for (const auto& layer : enc_layers_) x = layer.forward(x);
    return x;
}

Var Model::spk_frame_embedding(const Var& features) const {
    if (features.rows() != cfg_.feature_dim)
        throw DataError("spk_encode: expected " + std::to_string(cfg_.feature_dim) +
                        " feature rows, got " + std::to_string(features.rows()));
    if (features.cols() < cfg_.subsample_factor)
        throw DataError("spk_encode: input shorter than the subsampling factor");
    Var x = ag::silu(spk_conv1_.forward(features));
    x = ag::silu(spk_conv2_.forward(x));
    return spk_conv3_.forward(x);
}

Var Model::spk_encode(const Var& features) const {
    return spk_norm_.forward(spk_proj_.forward(spk_frame_embedding(features)));
}

EncoderOutputs Model::encode(const Mat& features) const {
    EncoderOutputs out;
    out.h_asr = asr_encode(features);
    out.h_spk = spk_encode(features);
    if (out.h_asr.cols() != out.h_spk.cols())
        throw DataError("encoder length mismatch");  // shared subsampling keeps these equal
    return out;
}

// ---------------------------------------------------------------------------
// ASR decoder
// ---------------------------------------------------------------------------

Model::DecPhase1 Model::asr_dec_phase1(const std::vector<int>& in_tokens) const {
    if (in_tokens.empty()) throw DataError("asr_dec_phase1: empty input");
    std::vector<int> ids0(in_tokens.size());
    for (size_t i = 0; i < in_tokens.size(); ++i) {
        if (in_tokens[i] < 1 || in_tokens[i] > cfg_.vocab_size)
            throw DataError("token id " + std::to_string(in_tokens[i]) + " outside vocabulary");
        ids0[i] = in_tokens[i] - 1;
    }
    DecPhase1 p1;
    p1.z1 = nn::add_positional(ag::embedding(embed_table_, ids0));
    const Mat mask = nn::causal_mask(static_cast<int>(in_tokens.size()));
    p1.tap = dec_layers_[0].self_block(p1.z1, &mask);
    return p1;
}

Var Model::asr_dec_phase2(const DecPhase1& p1, const Var& h_asr, const Var& dbar,
                          std::vector<Mat>* layer_outputs) const {
    if (dbar.cols() != p1.tap.cols())
        throw DataError("asr_dec_phase2: one weighted profile per position required");
    const Mat mask = nn::causal_mask(static_cast<int>(p1.tap.cols()));
    // profile enters only the first layer's feed-forward input
    Var inject = ag::matmul(w_spk_, dbar);
    Var x = dec_layers_[0].src_ff_block(p1.tap, h_asr, h_asr, inject);
    if (layer_outputs) layer_outputs->push_back(x.value());
    for (size_t l = 1; l < dec_layers_.size(); ++l) {
        x = dec_layers_[l].forward(x, h_asr, h_asr, &mask);
        if (layer_outputs) layer_outputs->push_back(x.value());
    }
    return dec_out_.forward(dec_norm_out_.forward(x));
}

Var Model::ctc_logits(const Var& h_asr) const { return ctc_head_.forward(h_asr); }

// ---------------------------------------------------------------------------
// speaker branch
// ---------------------------------------------------------------------------

Var Model::context_encode(const Var& tap) const {
    if (tap.cols() < 1) throw DataError("context_encode: empty prefix");
    Var x = tap;
    for (const auto& layer : ctx_layers_) x = layer.forward(x);
    return x;
}

Model::SpkBranchOut Model::spk_branch(const Var& tap, const Var& h_asr, const Var& h_spk,
                                      bool want_attn) const {
    if (h_asr.cols() != h_spk.cols()) throw DataError("spk_branch: key/value length mismatch");
    Var ctx = cfg_.use_context_enc ? context_encode(tap) : tap;
    SpkBranchOut out;
    // first layer: cross-attention (no residual), keys H^asr, values H^spk
    out.skip = nn::mha(spk_first_attn_, spk_first_norm_q_.forward(ctx), h_asr, h_spk, nullptr,
                       want_attn ? &out.first_layer_attn : nullptr);
    Var x = ag::add(out.skip, spk_first_ff_.forward(spk_first_norm_ff_.forward(out.skip)));
    // remaining layers: bidirectional self-attention over the given prefix,
    // source attention with keys = values = H^spk
    for (const auto& layer : spk_layers_) x = layer.forward(x, h_spk, h_spk, nullptr);
    out.last = x;
    out.q = combine_queries(out.last, out.skip);
    return out;
}

Var Model::combine_queries(const Var& last, const Var& skip) const {
    if (cfg_.use_skip_connection) return ag::matmul(w_q_, ag::add(last, skip));
    return ag::matmul(w_q_, last);
}

// ---------------------------------------------------------------------------
// scorer
// ---------------------------------------------------------------------------

Var Model::ci_scores(const Var& q, const Mat& profiles) const {
    if (profiles.rows() < 1) throw DataError("ci_scores: empty profile set");
    if (profiles.cols() != cfg_.profile_dim) throw DataError("ci_scores: profile dim mismatch");
    Mat d_norm = profiles;
    for (int k = 0; k < d_norm.rows(); ++k) {
        const Real nrm = d_norm.row(k).norm();
        if (nrm < 1e-12) throw DataError("ci_scores: zero-norm profile " + std::to_string(k + 1));
        d_norm.row(k) /= nrm;
    }
    return ag::transpose(ag::matmul(ag::constant(d_norm), ag::normalize_cols(q)));
}

Mat Model::cd_profiles(const Mat& profiles) const {
    if (!cfg_.normalize_profiles_for_cd) return profiles;
    Mat out = profiles;
    for (int k = 0; k < out.rows(); ++k) {
        const Real nrm = out.row(k).norm();
        if (nrm < 1e-12) throw DataError("cd_profiles: zero-norm profile " + std::to_string(k + 1));
        out.row(k) /= nrm;
    }
    return out;
}

namespace {
// Shared CD-Scorer body: q columns followed by the profile column, encoder
// stack, readout at the profile position, tanh.
Var cd_run(const std::vector<nn::EncoderLayer>& layers, const nn::LayerNorm& norm_out,
           const nn::Linear& readout, const Var& q_part, const Var& profile_col) {
    Var seq = ag::concat_cols({q_part, profile_col});
    for (const auto& layer : layers) seq = layer.forward(seq);
    Var last = ag::slice_cols(seq, static_cast<int>(seq.cols()) - 1, 1);
    return ag::tanh_(readout.forward(norm_out.forward(last)));
}
}  // namespace

Var Model::cd_scores_all(const Var& q, const Mat& profiles) const {
    if (q.cols() < 1) throw DataError("cd_scores: empty query prefix");
    const Mat d = cd_profiles(profiles);
    const int n = static_cast<int>(q.cols());
    // shared projection + positions for the query part, reused across profiles
    Var q_part = nn::add_positional(cd_in_proj_.forward(q));
    const Mat pe_last = nn::positional_encoding(cfg_.model_dim, 1, n);
    std::vector<Var> scores;
    scores.reserve(d.rows());
    for (int k = 0; k < d.rows(); ++k) {
        Var p_col = ag::add(cd_in_proj_.forward(ag::constant(Mat(d.row(k).transpose()))),
                            ag::constant(pe_last));
        scores.push_back(cd_run(cd_layers_, cd_norm_out_, cd_readout_, q_part, p_col));
    }
    return ag::concat_cols(scores);  // 1 x K
}

Var Model::cd_score_prefix(const Var& q_prefix, const Vec& profile) const {
    Mat one_row = profile.transpose();
    return cd_scores_all(q_prefix, one_row);
}

Model::FuseOut Model::fuse_and_weight(const Var& ci, const Var& cd, const Mat& profiles) const {
    if (profiles.rows() < 1) throw DataError("fuse_and_weight: empty profile set");
    FuseOut out;
    if (cd.valid()) {
        if (cd.rows() == ci.rows()) {
            out.fused = ag::add(ci, cd);
        } else if (cd.rows() == 1) {
            out.fused = ag::add(ci, ag::repeat_rows(cd, static_cast<int>(ci.rows())));
        } else {
            throw DataError("fuse_and_weight: cd score shape mismatch");
        }
    } else {
        out.fused = ci;  // CD-Scorer ablated: pure cosine scores
    }
    out.beta = ag::softmax_rows(out.fused);
    out.dbar = ag::transpose(ag::matmul(out.beta, ag::constant(profiles)));
    return out;
}

// ---------------------------------------------------------------------------
// composed forwards
// ---------------------------------------------------------------------------

SpkForwardOut speaker_forward(const Model& m, const EncoderOutputs& enc, const Var& tap,
                              const Mat& profiles, bool want_attn) {
    SpkForwardOut out;
    auto spk = m.spk_branch(tap, enc.h_asr, enc.h_spk, want_attn);
    out.first_layer_attn = std::move(spk.first_layer_attn);
    out.q = spk.q;
    Var ci = m.ci_scores(out.q, profiles);
    Var cd;
    if (m.config().use_cd_scorer) cd = m.cd_scores_all(out.q, profiles);
    auto fused = m.fuse_and_weight(ci, cd, profiles);
    out.fused = fused.fused;
    out.beta = fused.beta;
    out.dbar = fused.dbar;
    return out;
}

TeacherForcedOut teacher_forced_forward(const Model& m, const Mat& features,
                                        const std::vector<int>& ref_tokens, const Mat& profiles) {
    if (ref_tokens.empty()) throw DataError("teacher_forced_forward: empty reference");
    const int N = static_cast<int>(ref_tokens.size());
    TeacherForcedOut out;
    out.enc = m.encode(features);

    std::vector<int> in_tokens;
    in_tokens.reserve(N + 1);
    in_tokens.push_back(kBosId);
    in_tokens.insert(in_tokens.end(), ref_tokens.begin(), ref_tokens.end());
    auto p1 = m.asr_dec_phase1(in_tokens);

    // Speaker branch spans the N token-query columns; the EOS step reuses the
    // final token's weighted profile (the speaker cannot change after it).
    Var tap_tok = ag::slice_cols(p1.tap, 0, N);
    auto spk = speaker_forward(m, out.enc, tap_tok, profiles);
    out.fused = spk.fused;
    out.beta = spk.beta;
    out.q = spk.q;
    Var dbar = ag::concat_cols({spk.dbar, ag::slice_cols(spk.dbar, N - 1, 1)});

    out.logits = m.asr_dec_phase2(p1, out.enc.h_asr, dbar);
    out.ctc = m.ctc_logits(out.enc.h_asr);
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_params(const std::string& dir, const nn::ParamStore& ps, const RunConfig& rc,
                 int64_t step) {
    fs::create_directories(dir);
    json manifest;
    manifest["config"] = json::parse(rc.to_json_text());
    manifest["config_hash"] = rc.config_hash();
    manifest["step"] = step;
    json params = json::array();
    std::ofstream bin((fs::path(dir) / "params.bin").string(), std::ios::binary);
    if (!bin) throw CheckpointError("cannot write checkpoint to " + dir);
    for (const auto& [name, v] : ps.all()) {
        json jp;
        jp["name"] = name;
        jp["rows"] = v.rows();
        jp["cols"] = v.cols();
        params.push_back(std::move(jp));
        std::vector<float> buf(static_cast<size_t>(v.rows() * v.cols()));
        size_t idx = 0;
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j)
                buf[idx++] = static_cast<float>(v.value()(i, j));
        bin.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    manifest["params"] = std::move(params);
    io::write_text((fs::path(dir) / "manifest.json").string(), manifest.dump(2));
}

namespace {
json read_ckpt_manifest(const std::string& dir) {
    const auto path = (fs::path(dir) / "manifest.json").string();
    if (!fs::exists(path)) throw CheckpointError("no checkpoint manifest at " + dir);
    try {
        return json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
    }
}
}  // namespace

RunConfig peek_checkpoint_config(const std::string& dir, int64_t* step) {
    const json manifest = read_ckpt_manifest(dir);
    try {
        if (step) *step = manifest.value("step", int64_t{0});
        RunConfig rc = RunConfig::from_json_text(manifest.at("config").dump());
        if (rc.config_hash() != manifest.at("config_hash").get<std::string>())
            throw CheckpointError("checkpoint config hash mismatch in " + dir);
        return rc;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
    }
}

namespace {

struct CkptEntry {
    std::string name;
    int64_t rows, cols, offset;  // offset in floats
};

std::vector<CkptEntry> ckpt_entries(const json& manifest) {
    std::vector<CkptEntry> out;
    int64_t off = 0;
    for (const auto& jp : manifest.at("params")) {
        CkptEntry e;
        e.name = jp.at("name").get<std::string>();
        e.rows = jp.at("rows").get<int64_t>();
        e.cols = jp.at("cols").get<int64_t>();
        e.offset = off;
        off += e.rows * e.cols;
        out.push_back(std::move(e));
    }
    return out;
}

Mat read_entry(std::ifstream& bin, const CkptEntry& e) {
    bin.seekg(e.offset * static_cast<int64_t>(sizeof(float)));
    std::vector<float> buf(static_cast<size_t>(e.rows * e.cols));
    bin.read(reinterpret_cast<char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!bin) throw CheckpointError("truncated params.bin reading " + e.name);
    Mat m(e.rows, e.cols);
    size_t idx = 0;
    for (int64_t i = 0; i < e.rows; ++i)
        for (int64_t j = 0; j < e.cols; ++j) m(i, j) = static_cast<Real>(buf[idx++]);
    return m;
}

}  // namespace

void load_params(const std::string& dir, nn::ParamStore& ps, const std::string& expect_hash) {
    const json manifest = read_ckpt_manifest(dir);
    try {
        if (!expect_hash.empty() &&
            manifest.at("config_hash").get<std::string>() != expect_hash)
            throw CheckpointError("checkpoint/config hash mismatch: expected " + expect_hash +
                                  ", found " + manifest.at("config_hash").get<std::string>());
        const auto entries = ckpt_entries(manifest);
        std::ifstream bin((fs::path(dir) / "params.bin").string(), std::ios::binary);
        if (!bin) throw CheckpointError("missing params.bin in " + dir);
        size_t loaded = 0;
        for (const auto& e : entries) {
            if (!ps.has(e.name)) throw CheckpointError("unexpected parameter " + e.name);
            Var v = ps.get(e.name);
            if (v.rows() != e.rows || v.cols() != e.cols)
                throw CheckpointError("shape mismatch for " + e.name);
            v.value_mut() = read_entry(bin, e);
            ++loaded;
        }
        if (loaded != ps.all().size())
            throw CheckpointError("checkpoint is missing parameters (" + std::to_string(loaded) +
                                  " of " + std::to_string(ps.all().size()) + ")");
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
    }
}

size_t load_params_subset(const std::string& dir, nn::ParamStore& ps,
                          const std::vector<std::string>& prefixes) {
    const json manifest = read_ckpt_manifest(dir);
    std::ifstream bin((fs::path(dir) / "params.bin").string(), std::ios::binary);
    if (!bin) throw CheckpointError("missing params.bin in " + dir);
    size_t loaded = 0;
    for (const auto& e : ckpt_entries(manifest)) {
        bool wanted = false;
        for (const auto& p : prefixes)
            if (e.name.rfind(p, 0) == 0) wanted = true;
        if (!wanted || !ps.has(e.name)) continue;
        Var v = ps.get(e.name);
        if (v.rows() != e.rows || v.cols() != e.cols)
            throw CheckpointError("shape mismatch for " + e.name + ": checkpoint " +
                                  std::to_string(e.rows) + "x" + std::to_string(e.cols) +
                                  " vs model " + std::to_string(v.rows()) + "x" +
                                  std::to_string(v.cols()));
        v.value_mut() = read_entry(bin, e);
        ++loaded;
    }
    return loaded;
}

}  // namespace saasr
