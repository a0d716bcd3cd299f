// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/decoding.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace saasr::decode {

using ag::Var;

namespace {

Vec ln_col(const Vec& x, const nn::LayerNorm& ln, Real eps = 1e-5) {
    const Real mu = x.mean();
    Vec c = x.array() - mu;
    const Real var = c.squaredNorm() / static_cast<Real>(x.size());
    c *= 1.0 / std::sqrt(var + eps);
    return (c.array() * ln.gamma.value().col(0).array() + ln.beta.value().col(0).array())
        .matrix();
}

Vec linear_col(const nn::Linear& l, const Vec& x) {
    Vec y = l.w.value() * x;
    if (l.b.valid()) y += l.b.value().col(0);
    return y;
}

Vec ff_col(const nn::FeedForward& ff, const Vec& x) {
    Vec h = linear_col(ff.lin1, x);
    h = (h.array() / (1.0 + (-h.array()).exp()) ).matrix();  // SiLU
    return linear_col(ff.lin2, h);
}

Vec log_softmax_col(const Vec& logits) {
    const Real m = logits.maxCoeff();
    const Real lse = m + std::log((logits.array() - m).exp().sum());
    return (logits.array() - lse).matrix();
}

void append_col(Mat& m, const Vec& col) {
    if (m.size() == 0)
        m = col;
    else {
        m.conservativeResize(Eigen::NoChange, m.cols() + 1);
        m.col(m.cols() - 1) = col;
    }
}

// Per-utterance constants shared by every hypothesis.
struct Shared {
    const Model* m = nullptr;
    EncoderOutputs enc;
    Mat profiles;
    std::vector<nn::ProjectedKv> src_kv;  // per ASR decoder layer, from H^asr

    void init(const Model& model, const Mat& features, const Mat& prof) {
        m = &model;
        enc = model.encode(features);
        profiles = prof;
        for (const auto& layer : model.dec_layers())
            src_kv.push_back(nn::project_kv(layer.src_attn, enc.h_asr.value(), enc.h_asr.value()));
    }
};

struct LayerKv {
    Mat k, v;
};

// Incremental ASR-decoder state (transformer KV caches plus the tap prefix).
// A step runs in two halves: begin_step advances the layer-1 self-attention
// and extends the tap (the speaker branch reads it before the profile is
// known); finish_step injects the weighted profile and runs the rest.
struct Stepper {
    int n = 0;
    Mat tap;                       // (f_h x n)
    std::vector<LayerKv> self_kv;  // per decoder layer

    Vec begin_step(const Shared& sh, int in_token) {
        const Model& m = *sh.m;
        const auto& layers = m.dec_layers();
        if (self_kv.empty()) self_kv.resize(layers.size());
        const int d = static_cast<int>(m.config().model_dim);

        Vec x = m.embedding_table().value().col(in_token - 1) +
                nn::positional_encoding(d, 1, n).col(0);
        const auto& l = layers[0];
        Vec h = ln_col(x, l.norm_self);
        append_col(self_kv[0].k, linear_col(l.self_attn.wk, h));
        append_col(self_kv[0].v, linear_col(l.self_attn.wv, h));
        nn::ProjectedKv kv{self_kv[0].k, self_kv[0].v};
        x = x + nn::mha_step(l.self_attn, h, kv).col(0);
        append_col(tap, x);
        return x;
    }

    Vec finish_step(const Shared& sh, const Vec& dbar_col) {
        const Model& m = *sh.m;
        const auto& layers = m.dec_layers();
        Vec x = tap.col(tap.cols() - 1);
        // layer 0 source attention + feed-forward with profile injection
        {
            const auto& l = layers[0];
            Vec h = ln_col(x, l.norm_src);
            Vec x2 = x + nn::mha_step(l.src_attn, h, sh.src_kv[0]).col(0);
            Vec ff_in = ln_col(x2, l.norm_ff) + m.w_spk().value() * dbar_col;
            x = x2 + ff_col(l.ff, ff_in);
        }
        for (size_t li = 1; li < layers.size(); ++li) {
            const auto& l = layers[li];
            Vec h = ln_col(x, l.norm_self);
            append_col(self_kv[li].k, linear_col(l.self_attn.wk, h));
            append_col(self_kv[li].v, linear_col(l.self_attn.wv, h));
            nn::ProjectedKv kv{self_kv[li].k, self_kv[li].v};
            x = x + nn::mha_step(l.self_attn, h, kv).col(0);
            Vec h2 = ln_col(x, l.norm_src);
            x = x + nn::mha_step(l.src_attn, h2, sh.src_kv[li]).col(0);
            x = x + ff_col(l.ff, ln_col(x, l.norm_ff));
        }
        ++n;
        return linear_col(m.dec_out(), ln_col(x, m.dec_norm_out()));
    }
};

struct Hyp {
    std::vector<int> tokens;
    Real logp = 0.0;
    bool overflowed = false;
    std::vector<Eigen::RowVectorXd> beta_rows;
    std::vector<Vec> dbar_hist;  // recompute path only
    Stepper st;
};

// Advances one hypothesis by a step: runs the speaker branch on the token
// prefix, then the ASR decoder, and returns per-token log-probabilities.
Vec advance(Hyp& h, const Shared& sh, bool cached) {
    const Model& m = *sh.m;
    const int step_idx = static_cast<int>(h.tokens.size());  // 0-based position
    const int in_token = h.tokens.empty() ? kBosId : h.tokens.back();

    if (cached) {
        h.st.begin_step(sh, in_token);
        auto spk = speaker_forward(m, sh.enc, ag::constant(h.st.tap), sh.profiles);
        h.beta_rows.push_back(spk.beta.value().row(step_idx));
        const Vec dbar_col = spk.dbar.value().col(step_idx);
        return log_softmax_col(h.st.finish_step(sh, dbar_col));
    }

    // recompute path: full-prefix forward through the batched code
    std::vector<int> in_prefix;
    in_prefix.reserve(h.tokens.size() + 1);
    in_prefix.push_back(kBosId);
    in_prefix.insert(in_prefix.end(), h.tokens.begin(), h.tokens.end());
    auto p1 = m.asr_dec_phase1(in_prefix);
    auto spk = speaker_forward(m, sh.enc, p1.tap, sh.profiles);
    h.beta_rows.push_back(spk.beta.value().row(step_idx));
    h.dbar_hist.push_back(spk.dbar.value().col(step_idx));
    Mat dbar(m.config().profile_dim, step_idx + 1);
    for (int j = 0; j <= step_idx; ++j) dbar.col(j) = h.dbar_hist[j];
    Var logits = m.asr_dec_phase2(p1, sh.enc.h_asr, ag::constant(dbar));
    return log_softmax_col(logits.value().col(step_idx));
}

// Strips leading/trailing <sc> and collapses <sc> runs; beta rows follow.
void sanitize_hypothesis(std::vector<int>& tokens, std::vector<Eigen::RowVectorXd>& beta_rows) {
    std::vector<int> out_t;
    std::vector<Eigen::RowVectorXd> out_b;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const bool is_sc = tokens[i] == kScId;
        if (is_sc && (out_t.empty() || out_t.back() == kScId)) continue;
        out_t.push_back(tokens[i]);
        out_b.push_back(beta_rows[i]);
    }
    while (!out_t.empty() && out_t.back() == kScId) {
        out_t.pop_back();
        out_b.pop_back();
    }
    tokens = std::move(out_t);
    beta_rows = std::move(out_b);
}

Mat rows_to_mat(const std::vector<Eigen::RowVectorXd>& rows, int K) {
    Mat m(static_cast<Eigen::Index>(rows.size()), K);
    for (size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
    return m;
}

}  // namespace

DecodeResult decode_utterance(const Model& m, const Mat& features, const Mat& profiles,
                              const DecodeOptions& opts) {
    if (opts.beam_size < 1) throw DataError("beam_size must be >= 1");
    ag::NoGradGuard ng;
    Shared sh;
    sh.init(m, features, profiles);
    const int l_h = static_cast<int>(sh.enc.h_asr.cols());
    const int max_tokens = opts.max_len_factor * l_h;
    const int K = static_cast<int>(profiles.rows());

    std::vector<Hyp> live(1);
    std::vector<Hyp> finished;
    while (!live.empty()) {
        struct Cand {
            size_t hyp;
            int token;  // kEosId finishes
            Real logp;
        };
        std::vector<Cand> cands;
        for (size_t i = 0; i < live.size(); ++i) {
            Vec lp = advance(live[i], sh, opts.use_incremental_cache);
            lp(kBosId - 1) = -std::numeric_limits<Real>::infinity();  // never emit BOS
            // top beam_size expansions of this hypothesis
            std::vector<int> idx(lp.size());
            for (int t = 0; t < lp.size(); ++t) idx[t] = t;
            const int keep = std::min<int>(opts.beam_size, static_cast<int>(lp.size()));
            std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(),
                              [&](int a, int b) { return lp(a) > lp(b); });
            for (int t = 0; t < keep; ++t)
                cands.push_back({i, idx[t] + 1, live[i].logp + lp(idx[t])});
        }
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Cand& a, const Cand& b) { return a.logp > b.logp; });
        if (cands.size() > static_cast<size_t>(opts.beam_size)) cands.resize(opts.beam_size);

        std::vector<Hyp> next;
        for (const auto& c : cands) {
            Hyp h = live[c.hyp];
            h.logp = c.logp;
            if (c.token == kEosId) {
                h.beta_rows.pop_back();  // the EOS step carries no token position
                finished.push_back(std::move(h));
                continue;
            }
            h.tokens.push_back(c.token);
            if (static_cast<int>(h.tokens.size()) >= max_tokens) {
                h.overflowed = true;
                finished.push_back(std::move(h));
                continue;
            }
            next.push_back(std::move(h));
        }
        live = std::move(next);
        if (!finished.empty() && live.empty()) break;
    }

    const Hyp* best = nullptr;
    for (const auto& h : finished)
        if (!best || h.logp > best->logp) best = &h;
    if (!best) throw DataError("decode produced no hypothesis");

    DecodeResult r;
    r.log_prob = best->logp;
    r.overflowed = best->overflowed;
    r.tokens = best->tokens;
    auto beta_rows = best->beta_rows;
    sanitize_hypothesis(r.tokens, beta_rows);
    r.beta = rows_to_mat(beta_rows, K);
    r.pass_used = m.config().use_two_pass ? "two-pass" : "first";
    if (!r.tokens.empty()) {
        if (m.config().use_two_pass) r.beta = second_pass_speakers(m, sh.enc, r.tokens, profiles);
        r.segment_speakers = assign_segment_speakers(r.tokens, r.beta, kScId);
    }
    return r;
}

Mat second_pass_speakers(const Model& m, const EncoderOutputs& enc, const std::vector<int>& y,
                         const Mat& profiles) {
    if (y.empty()) throw DataError("second pass needs a non-empty token sequence");
    ag::NoGradGuard ng;
    std::vector<int> in_tokens;
    in_tokens.reserve(y.size());
    in_tokens.push_back(kBosId);
    in_tokens.insert(in_tokens.end(), y.begin(), y.end() - 1);
    auto p1 = m.asr_dec_phase1(in_tokens);
    auto spk = speaker_forward(m, enc, p1.tap, profiles);
    return spk.beta.value();
}

Mat second_pass_speakers(const Model& m, const Mat& features, const std::vector<int>& y,
                         const Mat& profiles) {
    ag::NoGradGuard ng;
    return second_pass_speakers(m, m.encode(features), y, profiles);
}

std::vector<int> assign_segment_speakers(const std::vector<int>& y, const Mat& beta, int sc_id) {
    if (static_cast<Eigen::Index>(y.size()) != beta.rows())
        throw DataError("assign_segment_speakers: beta rows must match token count");
    std::vector<int> out;
    for (const auto& [start, end] : sot::speaker_blocks(y, sc_id)) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(beta.cols());
        for (int i = start; i < end; ++i) mean += beta.row(i);
        mean /= static_cast<Real>(end - start);
        int arg = 0;
        for (int k = 1; k < mean.size(); ++k)
            if (mean(k) > mean(arg)) arg = k;  // ties keep the lowest index
        out.push_back(arg + 1);
    }
    return out;
}

Mat asr_decoder_replay(const Model& m, const EncoderOutputs& enc,
                       const std::vector<int>& in_tokens, const Mat& dbar) {
    if (dbar.cols() != static_cast<Eigen::Index>(in_tokens.size()))
        throw DataError("asr_decoder_replay: one dbar column per token required");
    ag::NoGradGuard ng;
    Shared sh;
    sh.m = &m;
    sh.enc = enc;
    for (const auto& layer : m.dec_layers())
        sh.src_kv.push_back(nn::project_kv(layer.src_attn, enc.h_asr.value(), enc.h_asr.value()));
    Stepper st;
    Mat logits(m.config().vocab_size, static_cast<Eigen::Index>(in_tokens.size()));
    for (size_t i = 0; i < in_tokens.size(); ++i) {
        st.begin_step(sh, in_tokens[i]);
        logits.col(static_cast<Eigen::Index>(i)) = st.finish_step(sh, dbar.col(i));
    }
    return logits;
}

Mat attention_map(const Model& m, const Mat& features, const std::vector<int>& y,
                  const Mat& profiles) {
    if (y.empty()) throw DataError("attention_map needs a non-empty token sequence");
    ag::NoGradGuard ng;
    auto enc = m.encode(features);
    std::vector<int> in_tokens;
    in_tokens.push_back(kBosId);
    in_tokens.insert(in_tokens.end(), y.begin(), y.end() - 1);
    auto p1 = m.asr_dec_phase1(in_tokens);
    auto spk = speaker_forward(m, enc, p1.tap, profiles, /*want_attn=*/true);
    return spk.first_layer_attn;
}

std::string format_decode_line(const std::string& utt_id, const DecodeResult& r, int sc_id) {
    std::ostringstream os;
    os << utt_id << "\t" << sot::flatten_text(r.tokens, sc_id) << "\t";
    for (size_t i = 0; i < r.segment_speakers.size(); ++i) {
        if (i > 0) os << ",";
        os << r.segment_speakers[i];
    }
    return os.str();
}

std::vector<DecodeResult> decode_corpus(const Model& m, const synth::Corpus& corpus,
                                        const DecodeOptions& opts, int threads) {
    if (threads <= 0) {
        if (const char* env = std::getenv("SAASR_THREADS"))
            threads = std::max(1, std::atoi(env));
        else
            threads = std::max(1u, std::thread::hardware_concurrency());
    }
    const size_t n = corpus.utterances.size();
    std::vector<DecodeResult> out(n);
    threads = std::min<int>(threads, static_cast<int>(n));
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i)
            out[i] = decode_utterance(m, corpus.utterances[i].features,
                                      corpus.utterances[i].profiles.profiles, opts);
        return out;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::string first_error;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    out[i] = decode_utterance(m, corpus.utterances[i].features,
                                              corpus.utterances[i].profiles.profiles, opts);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (first_error.empty()) first_error = e.what();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (!first_error.empty()) throw DataError("decode_corpus: " + first_error);
    return out;
}

Real mean_block_attention_entropy(const Mat& attn, const std::vector<int>& y, int sc_id) {
    if (static_cast<Eigen::Index>(y.size()) != attn.rows())
        throw DataError("attention entropy: one attention row per token required");
    const auto blocks = sot::speaker_blocks(y, sc_id);
    Real total = 0.0;
    for (const auto& [start, end] : blocks) {
        Real block_sum = 0.0;
        for (int i = start; i < end; ++i) {
            Real h = 0.0;
            for (Eigen::Index j = 0; j < attn.cols(); ++j) {
                const Real p = attn(i, j);
                if (p > 1e-12) h -= p * std::log(p);
            }
            block_sum += h;
        }
        total += block_sum / static_cast<Real>(end - start);
    }
    return total / static_cast<Real>(blocks.size());
}

}  // namespace saasr::decode
