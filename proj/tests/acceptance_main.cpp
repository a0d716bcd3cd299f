// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Acceptance suite. Runs every criterion at its pinned tolerance and prints
// one [PASS]/[FAIL] line per criterion; exits nonzero if any fail.
//
//   invariant-suite          structural invariants, < 2 min
//   gradient-checks          joint-loss finite differences + CTC oracle
//   two-pass-consistency     final-row equality, toggle-off bit match
//   metrics-oracle           200 random corpora vs an independent DP
//   synthetic-e2e            2k-utterance corpus, ~0.5M params, < 15 min
//   ablation-trend           5 configs x 6 seeds, monotone means, p < 0.05
//   attention-concentration  per-block entropy, context encoder on vs off

#include "saasr/decoding.hpp"
#include "saasr/metrics.hpp"
#include "saasr/model.hpp"
#include "saasr/sot.hpp"
#include "saasr/synth.hpp"
#include "saasr/training.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <vector>

using namespace saasr;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %-24s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

ModelConfig small_model() {
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
    c.asr_dec_layers = 2;
    c.spk_dec_layers = 3;
    c.context_enc_layers = 1;
    c.cd_scorer_layers = 1;
    return c;
}

SynthConfig small_synth(uint64_t seed) {
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
    c.max_segments = 3;
    c.min_segment_len = 1;
    c.max_segment_len = 3;
    c.seed = seed;
    return c;
}

// overfits a small model on a handful of utterances
struct Probe {
    synth::Corpus corpus;
    Model m;

    explicit Probe(uint64_t seed, bool use_context, int steps = 400)
        : corpus(make(seed)), m(config(use_context), 21) {
        TrainConfig tc;
        tc.batch_size = 4;
        tc.warmup_steps = 40;
        tc.peak_lr = 3e-3;
        train::Trainer trainer(m, tc);
        std::vector<const synth::Utterance*> batch;
        for (const auto& u : corpus.utterances) batch.push_back(&u);
        for (int s = 0; s < steps; ++s) trainer.train_step(batch);
    }

    static synth::Corpus make(uint64_t seed) {
        SynthConfig sc = small_synth(seed);
        sc.noise_std = 0.3;
        sc.min_segments = 2;
        sc.max_segments = 3;
        synth::SynthWorld world(sc);
        return synth::generate_corpus(world, 2, 2);
    }

    static ModelConfig config(bool use_context) {
        ModelConfig mc = small_model();
        mc.use_context_enc = use_context;
        return mc;
    }
};

// ---------------------------------------------------------------------------
// 1. invariant suite
// ---------------------------------------------------------------------------

void criterion_invariants() {
    const auto t0 = Clock::now();
    std::string fail;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok && fail.empty()) fail = what;
    };
    Rng rng(101);

    // SOT round-trip on random transcripts
    for (int rep = 0; rep < 300 && fail.empty(); ++rep) {
        sot::AttributedTranscript t;
        const int n_seg = rng.uniform_int(1, 5);
        int prev = 0;
        for (int s = 0; s < n_seg; ++s) {
            sot::Segment seg;
            do {
                seg.speaker_id = rng.uniform_int(1, 4);
            } while (seg.speaker_id == prev);
            prev = seg.speaker_id;
            const int len = rng.uniform_int(1, 6);
            for (int i = 0; i < len; ++i) seg.tokens.push_back(rng.uniform_int(4, 60));
            seg.start_time = s;
            t.segments.push_back(seg);
        }
        auto s = sot::serialize_sot(t, kScId);
        auto back = sot::parse_sot(s);
        expect(back.segments.size() == t.segments.size(), "sot round-trip segment count");
        for (size_t k = 0; k < t.segments.size() && fail.empty(); ++k) {
            expect(back.segments[k].speaker_id == t.segments[k].speaker_id, "sot speaker");
            expect(back.segments[k].tokens == t.segments[k].tokens, "sot tokens");
        }
    }

    ModelConfig mc = small_model();
    Model m(mc, 31);
    Mat features = rng.normal_matrix(mc.feature_dim, 14);
    Mat profiles = rng.normal_matrix(4, mc.profile_dim);
    auto enc = m.encode(features);
    ag::Var q = ag::constant(rng.normal_matrix(mc.profile_dim, 6));

    // beta row-stochasticity, cosine/tanh ranges
    {
        ag::Var ci = m.ci_scores(q, profiles);
        ag::Var cd = m.cd_scores_all(q, profiles);
        auto fused = m.fuse_and_weight(ci, cd, profiles);
        for (int n = 0; n < 6; ++n)
            expect(std::abs(fused.beta.value().row(n).sum() - 1.0) < 1e-6,
                   "beta row-stochasticity");
        expect(ci.value().cwiseAbs().maxCoeff() <= 1.0 + 1e-12, "cosine range");
        expect(cd.value().cwiseAbs().maxCoeff() < 1.0, "tanh range");
    }

    // profile-permutation equivariance
    {
        auto score = [&](const Mat& prof) {
            return m.fuse_and_weight(m.ci_scores(q, prof), m.cd_scores_all(q, prof), prof);
        };
        auto base = score(profiles);
        std::vector<int> perm{2, 0, 3, 1};
        Mat permuted(4, mc.profile_dim);
        for (int k = 0; k < 4; ++k) permuted.row(k) = profiles.row(perm[k]);
        auto after = score(permuted);
        for (int n = 0; n < 6; ++n) {
            Eigen::Index arg_b, arg_a;
            base.beta.value().row(n).maxCoeff(&arg_b);
            after.beta.value().row(n).maxCoeff(&arg_a);
            expect(perm[arg_a] == static_cast<int>(arg_b), "permutation argmax mapping");
            for (int k = 0; k < 4; ++k)
                expect(std::abs(after.beta.value()(n, k) - base.beta.value()(n, perm[k])) < 1e-6,
                       "beta column permutation");
        }
        expect((after.dbar.value() - base.dbar.value()).cwiseAbs().maxCoeff() < 1e-6,
               "dbar permutation invariance");
    }

    // ASR-decoder causality under future-token randomization
    {
        std::vector<int> a{kBosId, 5, 7, 9, 11, 4};
        std::vector<int> b = a;
        for (size_t i = 4; i < b.size(); ++i) b[i] = rng.uniform_int(4, mc.vocab_size - 1);
        Mat dbar = rng.normal_matrix(mc.profile_dim, 6);
        Mat dbar_b = dbar;
        dbar_b.col(5) = rng.normal_matrix(mc.profile_dim, 1);
        Mat la = m.asr_dec_phase2(m.asr_dec_phase1(a), enc.h_asr, ag::constant(dbar)).value();
        Mat lb = m.asr_dec_phase2(m.asr_dec_phase1(b), enc.h_asr, ag::constant(dbar_b)).value();
        for (int j = 0; j < 4; ++j)
            expect((la.col(j) - lb.col(j)).cwiseAbs().maxCoeff() < 1e-12,
                   "decoder causality");
    }

    // incremental-vs-batch decode equality
    {
        std::vector<int> in{kBosId, 5, 7, kScId, 9, 11};
        Mat dbar = rng.normal_matrix(mc.profile_dim, 6);
        Mat batch = m.asr_dec_phase2(m.asr_dec_phase1(in), enc.h_asr, ag::constant(dbar)).value();
        Mat inc = decode::asr_decoder_replay(m, enc, in, dbar);
        expect((batch - inc).cwiseAbs().maxCoeff() < 1e-5, "incremental-vs-batch equality");
    }

    // profile term enters layer 1 only
    {
        std::vector<int> in{kBosId, 5, 7, 9};
        auto p1 = m.asr_dec_phase1(in);
        Mat d1 = rng.normal_matrix(mc.profile_dim, 4);
        Mat d2 = rng.normal_matrix(mc.profile_dim, 4);
        std::vector<Mat> l1, l2;
        m.asr_dec_phase2(p1, enc.h_asr, ag::constant(d1), &l1);
        m.asr_dec_phase2(p1, enc.h_asr, ag::constant(d2), &l2);
        expect((l1[0] - l2[0]).cwiseAbs().maxCoeff() > 1e-9, "layer-1 injection live");
        Mat saved = m.params().get("asr_dec.w_spk").value();
        m.params().get("asr_dec.w_spk").value_mut().setZero();
        std::vector<Mat> z1, z2;
        m.asr_dec_phase2(p1, enc.h_asr, ag::constant(d1), &z1);
        m.asr_dec_phase2(p1, enc.h_asr, ag::constant(d2), &z2);
        for (size_t l = 0; l < z1.size(); ++l)
            expect((z1[l] - z2[l]).cwiseAbs().maxCoeff() == 0.0, "injection confined to layer 1");
        m.params().get("asr_dec.w_spk").value_mut() = saved;
    }

    const double dt = elapsed(t0);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s (%.1fs)", fail.empty() ? "all invariants hold" : fail.c_str(),
                  dt);
    report("invariant-suite", fail.empty() && dt < 120.0, buf);
}

// ---------------------------------------------------------------------------
// 2. gradient checks
// ---------------------------------------------------------------------------

Real ctc_brute_force(const Mat& logits, const std::vector<int>& target, int blank) {
    const int C = static_cast<int>(logits.rows());
    const int T = static_cast<int>(logits.cols());
    Mat p(C, T);
    for (int t = 0; t < T; ++t) {
        Vec e = (logits.col(t).array() - logits.col(t).maxCoeff()).exp();
        p.col(t) = e / e.sum();
    }
    Real total = 0.0;
    std::vector<int> path(T, 0);
    std::function<void(int, Real)> rec = [&](int t, Real prob) {
        if (t == T) {
            std::vector<int> collapsed;
            for (int i = 0; i < T; ++i) {
                if (i > 0 && path[i] == path[i - 1]) continue;
                if (path[i] != blank) collapsed.push_back(path[i]);
            }
            if (collapsed == target) total += prob;
            return;
        }
        for (int c = 0; c < C; ++c) {
            path[t] = c;
            rec(t + 1, prob * p(c, t));
        }
    };
    rec(0, 1.0);
    return -std::log(total);
}

void criterion_gradients() {
    const auto t0 = Clock::now();
    std::string fail;

    // a <= 5k-parameter model with every toggle on
    ModelConfig mc;
    mc.vocab_size = 12;
    mc.feature_dim = 6;
    mc.model_dim = 8;
    mc.profile_dim = 8;
    mc.attention_heads = 2;
    mc.ffn_dim = 12;
    mc.conv_kernel = 3;
    mc.subsample_factor = 2;
    mc.asr_enc_layers = 1;
    mc.asr_dec_layers = 2;
    mc.spk_dec_layers = 2;
    mc.context_enc_layers = 1;
    mc.cd_scorer_layers = 1;
    Model m(mc, 71);
    const size_t n_params = m.params().total_parameters();

    SynthConfig sc = small_synth(3);
    sc.vocab_size = mc.vocab_size;
    sc.feature_dim = mc.feature_dim;
    sc.profile_dim = mc.profile_dim;
    synth::SynthWorld world(sc);
    const synth::Utterance u = synth::generate_corpus(world, 2, 1).utterances[0];

    auto loss_fn = [&] { return train::joint_loss_forward(m, u, 0.5, 0.3, false, true).joint; };
    m.params().zero_grad();
    ag::backward(loss_fn());

    Real max_rel = 0.0;
    const Real h = 1e-5;
    for (const auto& [name, v] : m.params().all()) {
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                const Real analytic = v.grad().size() ? v.grad()(i, j) : 0.0;
                ag::Var vv = v;
                const Real orig = vv.value()(i, j);
                vv.value_mut()(i, j) = orig + h;
                const Real up = loss_fn().value()(0, 0);
                vv.value_mut()(i, j) = orig - h;
                const Real dn = loss_fn().value()(0, 0);
                vv.value_mut()(i, j) = orig;
                const Real num = (up - dn) / (2 * h);
                const Real denom = std::max({1.0, std::abs(num), std::abs(analytic)});
                max_rel = std::max(max_rel, std::abs(num - analytic) / denom);
            }
    }
    if (n_params > 5000) fail = "model exceeds 5k parameters";
    if (max_rel >= 1e-3) fail = "finite-difference mismatch";

    // CTC value vs brute-force path enumeration on 3-frame/2-token cases
    Rng rng(72);
    Real max_ctc = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        Mat logits = rng.normal_matrix(5, 3);
        std::vector<int> target{rng.uniform_int(0, 3), rng.uniform_int(0, 3)};
        if (ag::ctc_min_frames(target) > 3) target[1] = (target[0] + 1) % 4;
        const Real got = ag::ctc_loss(ag::constant(logits), target, 4).value()(0, 0);
        max_ctc = std::max(max_ctc, std::abs(got - ctc_brute_force(logits, target, 4)));
    }
    if (max_ctc >= 1e-6) fail = "ctc path-sum mismatch";

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%zu params, max grad rel err %.2e, max ctc err %.2e (%.1fs)", n_params,
                  max_rel, max_ctc, elapsed(t0));
    report("gradient-checks", fail.empty(), fail.empty() ? buf : (fail + " — " + buf));
}

// ---------------------------------------------------------------------------
// 3. two-pass consistency
// ---------------------------------------------------------------------------

void criterion_two_pass() {
    const auto t0 = Clock::now();
    std::string fail;
    Probe probe(52, /*use_context=*/true);
    Model& m = probe.m;
    Real max_final_gap = 0.0;
    for (const auto& u : probe.corpus.utterances) {
        m.config_mut().use_two_pass = false;
        decode::DecodeOptions opts;
        opts.beam_size = 2;
        auto first = decode::decode_utterance(m, u.features, u.profiles.profiles, opts);
        if (first.tokens.empty()) continue;
        if (first.pass_used != "first") fail = "pass_used flag wrong with toggle off";
        Mat two = decode::second_pass_speakers(m, u.features, first.tokens, u.profiles.profiles);
        const Eigen::Index N = two.rows() - 1;
        max_final_gap = std::max(max_final_gap,
                                 (two.row(N) - first.beta.row(N)).cwiseAbs().maxCoeff());

        // toggle off bit-matches the first-pass rows; toggle on carries the
        // two-pass matrix
        m.config_mut().use_two_pass = true;
        auto full = decode::decode_utterance(m, u.features, u.profiles.profiles, opts);
        if (full.tokens != first.tokens) fail = "token pass changed by the speaker toggle";
        if ((full.beta - two).cwiseAbs().maxCoeff() != 0.0) fail = "two-pass beta not carried";
    }
    if (max_final_gap >= 1e-5) fail = "final-row mismatch";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "final-row gap %.2e (%.1fs)", max_final_gap, elapsed(t0));
    report("two-pass-consistency", fail.empty(), fail.empty() ? buf : (fail + " — " + buf));
}

// ---------------------------------------------------------------------------
// 4. metrics oracle
// ---------------------------------------------------------------------------

long brute_edit(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<size_t, size_t>, long> memo;
    std::function<long(size_t, size_t)> rec = [&](size_t i, size_t j) -> long {
        if (i == a.size()) return static_cast<long>(b.size() - j);
        if (j == b.size()) return static_cast<long>(a.size() - i);
        auto it = memo.find({i, j});
        if (it != memo.end()) return it->second;
        long best = rec(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
        best = std::min(best, rec(i + 1, j) + 1);
        best = std::min(best, rec(i, j + 1) + 1);
        memo[{i, j}] = best;
        return best;
    };
    return rec(0, 0);
}

void criterion_metrics() {
    const auto t0 = Clock::now();
    std::string fail;
    Rng rng(81);
    int cases = 0;
    for (int corpus_i = 0; corpus_i < 200 && fail.empty(); ++corpus_i) {
        std::vector<sot::SOTSequence> refs;
        std::vector<std::vector<int>> ref_toks, hyp_toks;
        std::vector<metrics::SpeakerAttributed> hyps;
        const int n_utts = rng.uniform_int(1, 4);
        for (int ui = 0; ui < n_utts; ++ui) {
            // reference
            sot::AttributedTranscript t;
            const int n_seg = rng.uniform_int(1, 4);
            int prev = 0;
            for (int s = 0; s < n_seg; ++s) {
                sot::Segment seg;
                do {
                    seg.speaker_id = rng.uniform_int(1, 4);
                } while (seg.speaker_id == prev);
                prev = seg.speaker_id;
                const int len = rng.uniform_int(2, 6);
                for (int i = 0; i < len; ++i) seg.tokens.push_back(rng.uniform_int(4, 60));
                seg.start_time = s;
                t.segments.push_back(seg);
            }
            auto ref = sot::serialize_sot(t, kScId);
            // order-preserving corruption
            std::vector<int> hyp;
            std::vector<int> block_spk;
            for (int s = 0; s < n_seg; ++s) {
                std::vector<int> toks;
                for (int tok : t.segments[s].tokens) {
                    const Real roll = rng.uniform();
                    if (roll < 0.1) continue;
                    toks.push_back(roll < 0.25 ? rng.uniform_int(4, 60) : tok);
                    if (rng.uniform() < 0.08) toks.push_back(rng.uniform_int(4, 60));
                }
                if (toks.empty()) toks.push_back(rng.uniform_int(4, 60));
                if (!hyp.empty()) hyp.push_back(kScId);
                hyp.insert(hyp.end(), toks.begin(), toks.end());
                int spk = t.segments[s].speaker_id;
                if (rng.uniform() < 0.3) spk = rng.uniform_int(1, 4);
                block_spk.push_back(spk);
            }
            refs.push_back(ref);
            ref_toks.push_back(ref.tokens);
            hyp_toks.push_back(hyp);
            hyps.push_back(metrics::attribute_hypothesis(hyp, block_spk, kScId));
            ++cases;
        }
        const auto si = metrics::si_cer(ref_toks, hyp_toks, kScId);
        const auto sd = metrics::sd_cer(refs, hyps);

        // independent brute-force DP on both metrics
        long si_brute = 0, si_len = 0;
        for (size_t u = 0; u < refs.size(); ++u) {
            std::vector<int> r, h;
            for (int tok : ref_toks[u])
                if (tok != kScId) r.push_back(tok);
            for (int tok : hyp_toks[u])
                if (tok != kScId) h.push_back(tok);
            si_brute += brute_edit(r, h);
            si_len += static_cast<long>(r.size());
        }
        if (si.total() != si_brute || si.ref_len != si_len) fail = "si_cer oracle mismatch";

        long sd_brute = 0;
        for (size_t u = 0; u < refs.size(); ++u) {
            const auto ref_attr = metrics::attribute_reference(refs[u]);
            for (int k = 1; k <= 4; ++k) {
                std::vector<int> r, h;
                for (size_t i = 0; i < ref_attr.tokens.size(); ++i)
                    if (ref_attr.speakers[i] == k) r.push_back(ref_attr.tokens[i]);
                for (size_t i = 0; i < hyps[u].tokens.size(); ++i)
                    if (hyps[u].speakers[i] == k) h.push_back(hyps[u].tokens[i]);
                sd_brute += brute_edit(r, h);
            }
        }
        if (sd.total() != sd_brute) fail = "sd_cer oracle mismatch";

        // oracle attribution collapses SD to SI; SD >= SI on every case
        const auto sd_oracle = metrics::sd_cer_oracle(refs, hyp_toks, kScId);
        if (sd_oracle.total() != si.total() || sd_oracle.ref_len != si.ref_len)
            fail = "oracle-speakers SD != SI";
        if (sd.cer < si.cer - 1e-12) fail = "SD-CER < SI-CER";
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d random corpora (%.1fs)", 200, elapsed(t0));
    report("metrics-oracle", fail.empty(), fail.empty() ? buf : (fail + " — " + buf));
}

// ---------------------------------------------------------------------------
// 5. synthetic end-to-end
// ---------------------------------------------------------------------------

struct EvalScores {
    Real si = 1.0, sd = 1.0;
};

EvalScores score_corpus(const Model& m, const synth::Corpus& corpus, int beam, int threads) {
    decode::DecodeOptions opts;
    opts.beam_size = beam;
    auto results = decode::decode_corpus(m, corpus, opts, threads);
    std::vector<std::vector<int>> refs, hyps;
    std::vector<sot::SOTSequence> rs;
    std::vector<metrics::SpeakerAttributed> hs;
    for (size_t i = 0; i < results.size(); ++i) {
        refs.push_back(corpus.utterances[i].ref.tokens);
        hyps.push_back(results[i].tokens);
        rs.push_back(corpus.utterances[i].ref);
        hs.push_back(metrics::attribute_hypothesis(results[i].tokens,
                                                   results[i].segment_speakers, kScId));
    }
    EvalScores s;
    s.si = metrics::si_cer(refs, hyps, kScId).cer;
    s.sd = metrics::sd_cer(rs, hs).cer;
    return s;
}

void criterion_e2e() {
    const auto t0 = Clock::now();
    RunConfig rc;  // desk preset
    rc.train.epochs = 12;
    rc.train.eval_every_epochs = 100;  // no mid-training decodes

    synth::SynthWorld world(rc.synth);
    synth::Corpus all = synth::generate_corpus(world, 250 + 25, 8);
    synth::Corpus train_c, test_c;
    for (auto& u : all.utterances) {
        const int mi = std::stoi(u.id.substr(1, u.id.find('_') - 1));
        (mi < 250 ? train_c : test_c).utterances.push_back(std::move(u));
    }

    Model m(rc.model, rc.train.seed);
    const size_t n_params = m.params().total_parameters();
    train::train(m, train_c, nullptr, rc.train, rc, "", nullptr);
    const EvalScores s = score_corpus(m, test_c, /*beam=*/4, /*threads=*/0);
    const double dt = elapsed(t0);

    const bool ok = s.si <= 0.05 && s.sd <= 0.10 && dt < 15 * 60;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%zu params, %zu train utts, si_cer=%.4f (<=0.05), sd_cer=%.4f (<=0.10), "
                  "%.0fs (<900s)",
                  n_params, train_c.utterances.size(), s.si, s.sd, dt);
    report("synthetic-e2e", ok, buf);
}

// ---------------------------------------------------------------------------
// 6. ablation trend
// ---------------------------------------------------------------------------

// cumulative configurations, best to worst expected SD-CER
std::vector<std::pair<std::string, ModelConfig>> trend_configs(const ModelConfig& base) {
    auto with = [&](bool skip, bool cd, bool two_pass, bool ctx) {
        ModelConfig c = base;
        c.use_skip_connection = skip;
        c.use_cd_scorer = cd;
        c.use_two_pass = two_pass;
        c.use_context_enc = ctx;
        return c;
    };
    return {
        {"full", with(true, true, true, true)},
        {"-context-enc", with(true, true, true, false)},
        {"-two-pass", with(true, true, false, false)},
        {"-cd-scorer", with(true, false, false, false)},
        {"baseline", with(false, false, false, false)},
    };
}

// one-sided paired permutation test on the mean difference
Real paired_permutation_p(const std::vector<Real>& diffs) {
    const int n = static_cast<int>(diffs.size());
    Real observed = 0.0;
    for (Real d : diffs) observed += d;
    int at_least = 0;
    const int combos = 1 << n;
    for (int mask = 0; mask < combos; ++mask) {
        Real sum = 0.0;
        for (int i = 0; i < n; ++i) sum += (mask >> i & 1) ? -diffs[i] : diffs[i];
        if (sum >= observed - 1e-12) ++at_least;
    }
    return static_cast<Real>(at_least) / combos;
}

void criterion_trend() {
    const auto t0 = Clock::now();
    const int n_seeds = 6;

    RunConfig rc;
    rc.synth.profile_noise_std = 0.3;
    rc.synth.noise_std = 0.6;
    rc.synth.min_segments = 2;
    rc.train.epochs = 4;
    rc.train.eval_every_epochs = 100;

    std::vector<std::string> names;
    std::map<std::string, std::vector<Real>> sd_by_config;
    for (int seed_i = 0; seed_i < n_seeds; ++seed_i) {
        SynthConfig sc = rc.synth;
        sc.seed = 100 + seed_i;
        synth::SynthWorld world(sc);
        synth::Corpus all = synth::generate_corpus(world, 60 + 12, 6);
        synth::Corpus train_c, dev_c;
        for (auto& u : all.utterances) {
            const int mi = std::stoi(u.id.substr(1, u.id.find('_') - 1));
            (mi < 60 ? train_c : dev_c).utterances.push_back(std::move(u));
        }
        for (const auto& [name, mc] : trend_configs(rc.model)) {
            if (seed_i == 0) names.push_back(name);
            Model m(mc, 500 + seed_i);
            TrainConfig tc = rc.train;
            tc.seed = 500 + seed_i;
            train::train(m, train_c, nullptr, tc, rc, "", nullptr);
            const EvalScores s = score_corpus(m, dev_c, /*beam=*/1, /*threads=*/0);
            sd_by_config[name].push_back(s.sd);
        }
    }

    std::string detail;
    bool monotone = true;
    Real prev = -1.0;
    for (const auto& name : names) {
        Real mean = 0.0;
        for (Real v : sd_by_config[name]) mean += v;
        mean /= n_seeds;
        if (mean < prev - 1e-12) monotone = false;
        prev = mean;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%s=%.4f ", name.c_str(), mean);
        detail += buf;
    }
    std::vector<Real> diffs;
    for (int i = 0; i < n_seeds; ++i)
        diffs.push_back(sd_by_config["baseline"][i] - sd_by_config["full"][i]);
    const Real p = paired_permutation_p(diffs);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "p=%.4f (%.0fs)", p, elapsed(t0));
    detail += buf;
    report("ablation-trend", monotone && p < 0.05, detail);
}

// ---------------------------------------------------------------------------
// 7. attention concentration
// ---------------------------------------------------------------------------

void criterion_attention() {
    const auto t0 = Clock::now();
    Probe with_ctx(61, true);
    Probe without_ctx(61, false);  // same data, context encoder ablated
    Real ent_with = 0.0, ent_without = 0.0;
    int counted = 0;
    for (size_t i = 0; i < with_ctx.corpus.utterances.size(); ++i) {
        const auto& u = with_ctx.corpus.utterances[i];
        Mat a = decode::attention_map(with_ctx.m, u.features, u.ref.tokens, u.profiles.profiles);
        Mat b = decode::attention_map(without_ctx.m, u.features, u.ref.tokens,
                                      u.profiles.profiles);
        ent_with += decode::mean_block_attention_entropy(a, u.ref.tokens, kScId);
        ent_without += decode::mean_block_attention_entropy(b, u.ref.tokens, kScId);
        ++counted;
    }
    ent_with /= counted;
    ent_without /= counted;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "entropy with=%.4f < without=%.4f (%.1fs)", ent_with,
                  ent_without, elapsed(t0));
    report("attention-concentration", ent_with < ent_without, buf);
}

}  // namespace

int main() {
    std::printf("saasr acceptance suite\n");
    criterion_invariants();
    criterion_gradients();
    criterion_two_pass();
    criterion_metrics();
    criterion_e2e();
    criterion_trend();
    criterion_attention();
    std::printf("%s (%d criterion failure%s)\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
                g_failures, g_failures == 1 ? "" : "s");
    return g_failures == 0 ? 0 : 1;
}
