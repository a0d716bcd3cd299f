// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/config.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace saasr {

using nlohmann::json;

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.vocab_size = 4950;
    c.feature_dim = 80;
    c.model_dim = 256;
    c.profile_dim = 256;
    c.attention_heads = 4;
    c.ffn_dim = 2048;
    c.conv_kernel = 15;
    c.subsample_factor = 4;
    c.asr_enc_layers = 12;
    c.asr_dec_layers = 6;
    c.spk_dec_layers = 3;
    c.context_enc_layers = 4;
    c.cd_scorer_layers = 4;
    return c;
}

void ModelConfig::validate() const {
    if (vocab_size < 4) throw ConfigError("model.vocab_size must be >= 4 (BOS, EOS, <sc>, content)");
    if (asr_enc_layers < 1 || asr_dec_layers < 1 || spk_dec_layers < 1 ||
        context_enc_layers < 1 || cd_scorer_layers < 1)
        throw ConfigError("model: all layer counts must be >= 1");
    if (spk_dec_layers < 2)
        throw ConfigError("model.spk_dec_layers must be >= 2 (first layer + decoder layers)");
    if (ctc_weight < 0.0 || ctc_weight > 1.0) throw ConfigError("model.ctc_weight must be in [0,1]");
    if (lambda_spk < 0.0 || lambda_spk > 1.0) throw ConfigError("model.lambda_spk must be in [0,1]");
    if (model_dim % attention_heads != 0)
        throw ConfigError("model.model_dim must be divisible by attention_heads");
    if (subsample_factor < 1) throw ConfigError("model.subsample_factor must be >= 1");
    if (conv_kernel % 2 == 0) throw ConfigError("model.conv_kernel must be odd");
}

SynthConfig SynthConfig::desk() { return SynthConfig{}; }

void SynthConfig::validate() const {
    if (vocab_size < 3) throw ConfigError("synth.vocab_size must be >= 3");
    if (frames_per_token < 1) throw ConfigError("synth.frames_per_token must be >= 1");
    if (noise_std < 0.0) throw ConfigError("synth.noise_std must be >= 0");
    if (profile_noise_std < 0.0) throw ConfigError("synth.profile_noise_std must be >= 0");
    if (speakers_per_meeting < 1 || speakers_per_meeting > 4)
        throw ConfigError("synth.speakers_per_meeting must be in [1,4]");
    if (profile_slots < 1) throw ConfigError("synth.profile_slots must be >= 1");
    if (num_speakers < speakers_per_meeting + profile_slots)
        throw ConfigError("synth.num_speakers too small to pad profiles from other meetings");
    if (min_segments < 1 || max_segments < min_segments)
        throw ConfigError("synth: bad segment-count distribution");
    if (min_segment_len < 1 || max_segment_len < min_segment_len)
        throw ConfigError("synth: bad segment-length distribution");
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.epochs = 60;
    c.warmup_steps = 2000;
    c.peak_lr = 5e-4;
    return c;
}

void TrainConfig::validate() const {
    if (lambda_spk < 0.0 || lambda_spk > 1.0) throw ConfigError("train.lambda_spk must be in [0,1]");
    if (ctc_weight < 0.0 || ctc_weight > 1.0) throw ConfigError("train.ctc_weight must be in [0,1]");
    if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
    if (epochs < 1 || batch_size < 1) throw ConfigError("train: epochs and batch_size must be >= 1");
}

namespace {

json model_to_json(const ModelConfig& m) {
    return json{{"vocab_size", m.vocab_size},
                {"feature_dim", m.feature_dim},
                {"model_dim", m.model_dim},
                {"profile_dim", m.profile_dim},
                {"attention_heads", m.attention_heads},
                {"ffn_dim", m.ffn_dim},
                {"conv_kernel", m.conv_kernel},
                {"subsample_factor", m.subsample_factor},
                {"asr_enc_layers", m.asr_enc_layers},
                {"asr_dec_layers", m.asr_dec_layers},
                {"spk_dec_layers", m.spk_dec_layers},
                {"context_enc_layers", m.context_enc_layers},
                {"cd_scorer_layers", m.cd_scorer_layers},
                {"ctc_weight", m.ctc_weight},
                {"lambda_spk", m.lambda_spk},
                {"label_smoothing", m.label_smoothing},
                {"use_skip_connection", m.use_skip_connection},
                {"use_cd_scorer", m.use_cd_scorer},
                {"use_context_enc", m.use_context_enc},
                {"use_two_pass", m.use_two_pass},
                {"mask_sc_in_spk_loss", m.mask_sc_in_spk_loss},
                {"normalize_profiles_for_cd", m.normalize_profiles_for_cd}};
}

json synth_to_json(const SynthConfig& s) {
    return json{{"vocab_size", s.vocab_size},
                {"feature_dim", s.feature_dim},
                {"profile_dim", s.profile_dim},
                {"frames_per_token", s.frames_per_token},
                {"speakers_per_meeting", s.speakers_per_meeting},
                {"profile_slots", s.profile_slots},
                {"num_speakers", s.num_speakers},
                {"noise_std", s.noise_std},
                {"profile_noise_std", s.profile_noise_std},
                {"min_segments", s.min_segments},
                {"max_segments", s.max_segments},
                {"min_segment_len", s.min_segment_len},
                {"max_segment_len", s.max_segment_len},
                {"seed", s.seed}};
}

json train_to_json(const TrainConfig& t) {
    return json{{"lambda_spk", t.lambda_spk},
                {"ctc_weight", t.ctc_weight},
                {"epochs", t.epochs},
                {"warmup_steps", t.warmup_steps},
                {"peak_lr", t.peak_lr},
                {"batch_size", t.batch_size},
                {"grad_clip", t.grad_clip},
                {"seed", t.seed},
                {"spk_loss_token_averaged", t.spk_loss_token_averaged},
                {"log_every", t.log_every},
                {"eval_every_epochs", t.eval_every_epochs},
                {"eval_utterances", t.eval_utterances}};
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void model_from_json(const json& j, ModelConfig& m) {
    maybe(j, "vocab_size", m.vocab_size);
    maybe(j, "feature_dim", m.feature_dim);
    maybe(j, "model_dim", m.model_dim);
    maybe(j, "profile_dim", m.profile_dim);
    maybe(j, "attention_heads", m.attention_heads);
    maybe(j, "ffn_dim", m.ffn_dim);
    maybe(j, "conv_kernel", m.conv_kernel);
    maybe(j, "subsample_factor", m.subsample_factor);
    maybe(j, "asr_enc_layers", m.asr_enc_layers);
    maybe(j, "asr_dec_layers", m.asr_dec_layers);
    maybe(j, "spk_dec_layers", m.spk_dec_layers);
    maybe(j, "context_enc_layers", m.context_enc_layers);
    maybe(j, "cd_scorer_layers", m.cd_scorer_layers);
    maybe(j, "ctc_weight", m.ctc_weight);
    maybe(j, "lambda_spk", m.lambda_spk);
    maybe(j, "label_smoothing", m.label_smoothing);
    maybe(j, "use_skip_connection", m.use_skip_connection);
    maybe(j, "use_cd_scorer", m.use_cd_scorer);
    maybe(j, "use_context_enc", m.use_context_enc);
    maybe(j, "use_two_pass", m.use_two_pass);
    maybe(j, "mask_sc_in_spk_loss", m.mask_sc_in_spk_loss);
    maybe(j, "normalize_profiles_for_cd", m.normalize_profiles_for_cd);
}

void synth_from_json(const json& j, SynthConfig& s) {
    maybe(j, "vocab_size", s.vocab_size);
    maybe(j, "feature_dim", s.feature_dim);
    maybe(j, "profile_dim", s.profile_dim);
    maybe(j, "frames_per_token", s.frames_per_token);
    maybe(j, "speakers_per_meeting", s.speakers_per_meeting);
    maybe(j, "profile_slots", s.profile_slots);
    maybe(j, "num_speakers", s.num_speakers);
    maybe(j, "noise_std", s.noise_std);
    maybe(j, "profile_noise_std", s.profile_noise_std);
    maybe(j, "min_segments", s.min_segments);
    maybe(j, "max_segments", s.max_segments);
    maybe(j, "min_segment_len", s.min_segment_len);
    maybe(j, "max_segment_len", s.max_segment_len);
    maybe(j, "seed", s.seed);
}

void train_from_json(const json& j, TrainConfig& t) {
    maybe(j, "lambda_spk", t.lambda_spk);
    maybe(j, "ctc_weight", t.ctc_weight);
    maybe(j, "epochs", t.epochs);
    maybe(j, "warmup_steps", t.warmup_steps);
    maybe(j, "peak_lr", t.peak_lr);
    maybe(j, "batch_size", t.batch_size);
    maybe(j, "grad_clip", t.grad_clip);
    maybe(j, "seed", t.seed);
    maybe(j, "spk_loss_token_averaged", t.spk_loss_token_averaged);
    maybe(j, "log_every", t.log_every);
    maybe(j, "eval_every_epochs", t.eval_every_epochs);
    maybe(j, "eval_utterances", t.eval_utterances);
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    RunConfig rc;
    try {
        if (j.contains("scale")) rc.scale = j.at("scale").get<std::string>();
        if (rc.scale == "paper") {
            rc.model = ModelConfig::paper();
            rc.train = TrainConfig::paper();
        } else if (rc.scale == "desk") {
            rc.model = ModelConfig::desk();
            rc.train = TrainConfig::desk();
        } else {
            throw ConfigError("unknown scale preset: " + rc.scale);
        }
        rc.synth = SynthConfig::desk();
        if (j.contains("model")) model_from_json(j.at("model"), rc.model);
        if (j.contains("synth")) synth_from_json(j.at("synth"), rc.synth);
        if (j.contains("train")) train_from_json(j.at("train"), rc.train);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    rc.model.validate();
    rc.synth.validate();
    rc.train.validate();
    return rc;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
    json j;
    j["scale"] = scale;
    j["model"] = model_to_json(model);
    j["synth"] = synth_to_json(synth);
    j["train"] = train_to_json(train);
    return j.dump(2);
}

std::string RunConfig::config_hash() const { return hex64(fnv1a(to_json_text())); }

}  // namespace saasr
