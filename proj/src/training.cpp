// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/training.hpp"

#include "saasr/decoding.hpp"
#include "saasr/io.hpp"
#include "saasr/metrics.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace saasr::train {

namespace fs = std::filesystem;
using ag::Var;

Var asr_loss(const Var& logits, const Var& ctc_logits, const std::vector<int>& ref_tokens,
             Real ctc_weight, int vocab_size, Real label_smoothing) {
    if (ref_tokens.empty()) throw DataError("asr_loss: empty reference");
    std::vector<int> targets;  // 0-based, EOS-terminated
    targets.reserve(ref_tokens.size() + 1);
    for (int t : ref_tokens) targets.push_back(t - 1);
    targets.push_back(kEosId - 1);
    Var ce = ag::cross_entropy_cols(logits, targets, label_smoothing);
    if (ctc_weight == 0.0) return ce;

    std::vector<int> ctc_target;  // 0-based rows into the V+1 CTC classes
    ctc_target.reserve(ref_tokens.size());
    for (int t : ref_tokens) ctc_target.push_back(t - 1);
    Var ctc = ag::ctc_loss(ctc_logits, ctc_target, /*blank_row=*/vocab_size);
    return ag::add(ag::scale(ce, 1.0 - ctc_weight), ag::scale(ctc, ctc_weight));
}

std::vector<Real> speaker_loss_weights(const std::vector<int>& ref_tokens, bool mask_sc) {
    std::vector<Real> w(ref_tokens.size(), 1.0);
    if (mask_sc)
        for (size_t i = 0; i < ref_tokens.size(); ++i)
            if (ref_tokens[i] == kScId) w[i] = 0.0;
    return w;
}

Var speaker_loss(const Var& beta, const std::vector<int>& ref_speakers,
                 const std::vector<Real>& weights, bool token_averaged) {
    const int N = static_cast<int>(beta.rows());
    const int K = static_cast<int>(beta.cols());
    if (static_cast<int>(ref_speakers.size()) != N || static_cast<int>(weights.size()) != N)
        throw DataError("speaker_loss: one speaker and weight per row required");
    std::vector<int> s0(N);
    for (int i = 0; i < N; ++i) {
        if (ref_speakers[i] < 1 || ref_speakers[i] > K)
            throw DataError("speaker_loss: reference speaker " +
                            std::to_string(ref_speakers[i]) + " outside [1," +
                            std::to_string(K) + "]");
        s0[i] = ref_speakers[i] - 1;
    }
    Real wsum = 0.0;
    for (Real w : weights) wsum += w;
    if (wsum <= 0.0) throw DataError("speaker_loss: all positions masked");

    Var picked = ag::log_(ag::gather_rowwise(beta, s0));  // (1 x N)
    Mat wrow(1, N);
    for (int i = 0; i < N; ++i) wrow(0, i) = weights[i];
    Var weighted = ag::cmul(picked, ag::constant(wrow));
    const Real denom = token_averaged ? wsum : 1.0;
    return ag::scale(ag::sum_all(weighted), -1.0 / denom);
}

Var joint_loss(const Var& spk, const Var& asr, Real lambda_spk) {
    return ag::add(ag::scale(spk, lambda_spk), ag::scale(asr, 1.0 - lambda_spk));
}

JointLossOut joint_loss_forward(const Model& m, const synth::Utterance& u, Real lambda_spk,
                                Real ctc_weight, bool mask_sc, bool token_averaged) {
    auto fwd = teacher_forced_forward(m, u.features, u.ref.tokens, u.profiles.profiles);
    JointLossOut out;
    out.beta = fwd.beta.value();
    out.asr = asr_loss(fwd.logits, fwd.ctc, u.ref.tokens, ctc_weight, m.config().vocab_size,
                       m.config().label_smoothing);
    out.spk = speaker_loss(fwd.beta, u.ref.speakers, speaker_loss_weights(u.ref.tokens, mask_sc),
                           token_averaged);
    out.joint = joint_loss(out.spk, out.asr, lambda_spk);
    return out;
}

Var asr_only_loss(const Model& m, const synth::Utterance& u, Real ctc_weight) {
    auto enc = m.encode(u.features);
    std::vector<int> in_tokens;
    in_tokens.push_back(kBosId);
    in_tokens.insert(in_tokens.end(), u.ref.tokens.begin(), u.ref.tokens.end());
    auto p1 = m.asr_dec_phase1(in_tokens);
    Var dbar = ag::constant(Mat::Zero(m.config().profile_dim, p1.tap.cols()));
    Var logits = m.asr_dec_phase2(p1, enc.h_asr, dbar);
    return asr_loss(logits, m.ctc_logits(enc.h_asr), u.ref.tokens, ctc_weight,
                    m.config().vocab_size, m.config().label_smoothing);
}

Real noam_lr(int64_t step, Real peak_lr, int64_t warmup_steps) {
    if (step < 1) step = 1;
    if (warmup_steps <= 0) return peak_lr / std::sqrt(static_cast<Real>(step));
    const Real s = static_cast<Real>(step), w = static_cast<Real>(warmup_steps);
    return peak_lr * std::min(s / w, std::sqrt(w / s));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(const std::map<std::string, ag::Var>& params, Real beta1, Real beta2, Real eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, v] : params) {
        Slot s;
        s.param = v;
        s.m = Mat::Zero(v.rows(), v.cols());
        s.v = Mat::Zero(v.rows(), v.cols());
        slots_.emplace_back(name, std::move(s));
    }
}

void Adam::step(Real lr, Real grad_clip) {
    ++t_;
    Real scale = 1.0;
    if (grad_clip > 0.0) {
        Real sq = 0.0;
        for (auto& [name, s] : slots_)
            if (s.param.grad().size() != 0) sq += s.param.grad().squaredNorm();
        const Real norm = std::sqrt(sq);
        if (norm > grad_clip) scale = grad_clip / norm;
    }
    const Real bc1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
    const Real bc2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
    for (auto& [name, s] : slots_) {
        if (s.param.grad().size() == 0) continue;
        const Mat g = s.param.grad() * scale;
        s.m = beta1_ * s.m + (1.0 - beta1_) * g;
        s.v = beta2_ * s.v.array().matrix() + (1.0 - beta2_) * g.cwiseProduct(g);
        const Mat mhat = s.m / bc1;
        const Mat vhat = s.v / bc2;
        s.param.value_mut().array() -=
            lr * mhat.array() / (vhat.array().sqrt() + eps_);
    }
}

void Adam::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write optimizer state: " + path);
    const int64_t t = t_;
    f.write(reinterpret_cast<const char*>(&t), sizeof(t));
    for (const auto& [name, s] : slots_) {
        for (const Mat* m : {&s.m, &s.v}) {
            std::vector<double> buf(static_cast<size_t>(m->size()));
            size_t idx = 0;
            for (Eigen::Index i = 0; i < m->rows(); ++i)
                for (Eigen::Index j = 0; j < m->cols(); ++j) buf[idx++] = (*m)(i, j);
            f.write(reinterpret_cast<const char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * sizeof(double)));
        }
    }
}

void Adam::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open optimizer state: " + path);
    int64_t t = 0;
    f.read(reinterpret_cast<char*>(&t), sizeof(t));
    t_ = t;
    for (auto& [name, s] : slots_) {
        for (Mat* m : {&s.m, &s.v}) {
            std::vector<double> buf(static_cast<size_t>(m->size()));
            f.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(buf.size() * sizeof(double)));
            if (!f) throw CheckpointError("truncated optimizer state: " + path);
            size_t idx = 0;
            for (Eigen::Index i = 0; i < m->rows(); ++i)
                for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = buf[idx++];
        }
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(Model& m, const TrainConfig& tc)
    : model_(m), tc_(tc), adam_(m.params().all()) {
    tc_.validate();
}

Real Trainer::lr_at(int64_t step) const { return noam_lr(step, tc_.peak_lr, tc_.warmup_steps); }

Real Trainer::train_step(const std::vector<const synth::Utterance*>& batch) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    model_.params().zero_grad();
    const Real inv_b = 1.0 / static_cast<Real>(batch.size());
    Real joint_sum = 0.0, asr_sum = 0.0, spk_sum = 0.0;
    for (const synth::Utterance* u : batch) {
        auto losses = joint_loss_forward(model_, *u, tc_.lambda_spk, tc_.ctc_weight,
                                         model_.config().mask_sc_in_spk_loss,
                                         tc_.spk_loss_token_averaged);
        joint_sum += losses.joint.value()(0, 0);
        asr_sum += losses.asr.value()(0, 0);
        spk_sum += losses.spk.value()(0, 0);
        ag::backward(ag::scale(losses.joint, inv_b));
    }
    adam_.step(lr_at(adam_.step_count() + 1), tc_.grad_clip);
    last_asr_ = asr_sum * inv_b;
    last_spk_ = spk_sum * inv_b;
    return joint_sum * inv_b;
}

void Trainer::save_state(const std::string& dir, const RunConfig& rc) const {
    save_params(dir, model_.params(), rc, adam_.step_count());
    adam_.save((fs::path(dir) / "opt_state.bin").string());
}

void Trainer::load_state(const std::string& dir, const RunConfig& rc) {
    load_params(dir, model_.params(), rc.config_hash());
    adam_.load((fs::path(dir) / "opt_state.bin").string());
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

EpochEval evaluate_greedy(const Model& m, const synth::Corpus& dev, int max_utts) {
    decode::DecodeOptions opts;
    opts.beam_size = 1;
    std::vector<std::vector<int>> refs, hyps;
    std::vector<sot::SOTSequence> ref_seqs;
    std::vector<metrics::SpeakerAttributed> hyp_attr;
    const int n = std::min<int>(max_utts, static_cast<int>(dev.utterances.size()));
    for (int i = 0; i < n; ++i) {
        const auto& u = dev.utterances[i];
        auto r = decode::decode_utterance(m, u.features, u.profiles.profiles, opts);
        refs.push_back(u.ref.tokens);
        hyps.push_back(r.tokens);
        ref_seqs.push_back(u.ref);
        hyp_attr.push_back(metrics::attribute_hypothesis(r.tokens, r.segment_speakers, kScId));
    }
    EpochEval ev;
    ev.si_cer = metrics::si_cer(refs, hyps, kScId).cer;
    ev.sd_cer = metrics::sd_cer(ref_seqs, hyp_attr).cer;
    return ev;
}

}  // namespace

TrainResult train(Model& m, const synth::Corpus& train_corpus, const synth::Corpus* dev_corpus,
                  const TrainConfig& tc, const RunConfig& rc, const std::string& out_dir,
                  std::ostream* log, const std::string& resume_dir) {
    if (train_corpus.utterances.empty()) throw DataError("train: empty corpus");
    TrainResult result;
    Trainer trainer(m, tc);
    if (!resume_dir.empty()) trainer.load_state(resume_dir, rc);
    std::ofstream metrics_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        metrics_file.open((fs::path(out_dir) / "metrics.log").string(), std::ios::app);
    }
    auto emit = [&](const std::string& line) {
        result.metrics_lines.push_back(line);
        if (metrics_file.is_open()) metrics_file << line << "\n";
        if (log) (*log) << line << std::endl;
    };

    Rng shuffle_rng(substream_seed(tc.seed, 0x7EA1ull));
    std::vector<size_t> order(train_corpus.utterances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        for (size_t i = 0; i + 1 < order.size(); ++i) {
            const size_t j =
                i + static_cast<size_t>(shuffle_rng.uniform_int(
                        0, static_cast<int>(order.size() - i) - 1));
            std::swap(order[i], order[j]);
        }
        for (size_t start = 0; start < order.size(); start += tc.batch_size) {
            std::vector<const synth::Utterance*> batch;
            for (size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i)
                batch.push_back(&train_corpus.utterances[order[i]]);
            const Real joint = trainer.train_step(batch);
            const int64_t step = trainer.step();
            if (step % tc.log_every == 0 || step == 1) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "step=%lld loss_joint=%.6f loss_asr=%.6f loss_spk=%.6f lr=%.6g",
                              static_cast<long long>(step), joint, trainer.last_asr_loss(),
                              trainer.last_spk_loss(), trainer.lr_at(step));
                emit(buf);
            }
        }
        const bool last_epoch = epoch == tc.epochs;
        if (dev_corpus && (epoch % tc.eval_every_epochs == 0 || last_epoch)) {
            auto ev = evaluate_greedy(m, *dev_corpus, tc.eval_utterances);
            char buf[120];
            std::snprintf(buf, sizeof(buf), "epoch=%d si_cer=%.4f sd_cer=%.4f", epoch, ev.si_cer,
                          ev.sd_cer);
            emit(buf);
            result.final_eval = ev;
        }
    }
    result.steps = trainer.step();
    if (!out_dir.empty())
        trainer.save_state((fs::path(out_dir) / "checkpoint").string(), rc);
    return result;
}

// ---------------------------------------------------------------------------
// speaker-encoder pre-training
// ---------------------------------------------------------------------------

Real pretrain_spk_encoder(Model& m, const synth::SynthWorld& world, int steps, int batch_utts,
                          uint64_t seed, std::ostream* log) {
    std::map<std::string, ag::Var> stack_params;
    for (const auto& [name, v] : m.params().all())
        if (name.rfind("spk_enc.stack.", 0) == 0) stack_params.emplace(name, v);
    Adam adam(stack_params);
    Rng rng(substream_seed(seed, 0x9AE7ull));
    const auto& cfg = world.config();
    Real last = 0.0;
    for (int s = 1; s <= steps; ++s) {
        for (auto& [name, v] : stack_params) v.zero_grad();
        Real loss_sum = 0.0;
        for (int b = 0; b < batch_utts; ++b) {
            const int spk = rng.uniform_int(1, cfg.num_speakers);
            sot::AttributedTranscript t;
            sot::Segment seg;
            seg.speaker_id = spk;
            const int len = rng.uniform_int(2, 6);
            for (int i = 0; i < len; ++i)
                seg.tokens.push_back(rng.uniform_int(kFirstContentId, cfg.vocab_size - 1));
            t.segments.push_back(std::move(seg));
            const Mat x = world.render_utterance(t, rng);
            ag::Var emb = m.spk_frame_embedding(x);  // (f_d x l_h)
            Mat target = world.signature(spk).replicate(1, emb.cols());
            ag::Var diff = ag::sub(emb, ag::constant(target));
            ag::Var loss = ag::mean_all(ag::cmul(diff, diff));
            loss_sum += loss.value()(0, 0);
            ag::backward(ag::scale(loss, 1.0 / batch_utts));
        }
        adam.step(noam_lr(s, 2e-3, steps / 10 + 1));
        last = loss_sum / batch_utts;
        if (log && (s % 50 == 0 || s == 1))
            (*log) << "pretrain step=" << s << " mse=" << last << std::endl;
    }
    return last;
}

}  // namespace saasr::train
