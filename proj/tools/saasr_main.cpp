// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// saasr: speaker-attributed multi-talker ASR toolkit.
//   synth           generate a synthetic corpus (train/dev/test splits)
//   train           joint training on a dataset directory
//   eval            decode a split and report SI-CER / SD-CER
//   infer           decode a single feature/profile file pair
//   dump-attention  export the first speaker-decoder layer's attention map

#include "saasr/decoding.hpp"
#include "saasr/io.hpp"
#include "saasr/metrics.hpp"
#include "saasr/model.hpp"
#include "saasr/sot.hpp"
#include "saasr/synth.hpp"
#include "saasr/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace saasr;
using nlohmann::json;

namespace {

constexpr const char* kVersionTag = "0.1.0";

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

void write_run_manifest(const std::string& dir, const RunConfig& rc,
                        const std::vector<std::string>& argv_vec,
                        const std::vector<std::string>& artifacts) {
    json j;
    j["config_hash"] = rc.config_hash();
    j["seed"] = rc.synth.seed;
    j["train_seed"] = rc.train.seed;
    j["version"] = kVersionTag;
    j["timestamp"] = now_iso8601();
    j["command"] = argv_vec;
    j["artifacts"] = artifacts;
    io::write_text((fs::path(dir) / "manifest.json").string(), j.dump(2));
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig::from_json_text("{}");
    return RunConfig::from_file(path);
}

void apply_ablations(ModelConfig& mc, const std::vector<std::string>& ablations) {
    for (const auto& a : ablations) {
        const auto eq = a.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--ablate expects <name>=<on|off>, got '" + a + "'");
        const std::string name = a.substr(0, eq);
        const std::string val = a.substr(eq + 1);
        if (val != "on" && val != "off")
            throw ConfigError("--ablate value must be on or off, got '" + val + "'");
        const bool on = val == "on";
        if (name == "skip")
            mc.use_skip_connection = on;
        else if (name == "cd-scorer")
            mc.use_cd_scorer = on;
        else if (name == "two-pass")
            mc.use_two_pass = on;
        else if (name == "context-enc")
            mc.use_context_enc = on;
        else
            throw ConfigError("unknown ablation toggle '" + name +
                              "' (skip, cd-scorer, two-pass, context-enc)");
    }
}

std::vector<std::string> collect_args(int argc, char** argv) {
    return std::vector<std::string>(argv, argv + argc);
}

// ---- synth ----

int cmd_synth(const std::string& config_path, const std::string& out_dir, int meetings,
              int utts_per_meeting, int dev_meetings, int test_meetings,
              const std::vector<std::string>& argv_vec) {
    RunConfig rc = load_config_or_default(config_path);
    if (!fs::path(out_dir).parent_path().empty() &&
        !fs::exists(fs::path(out_dir).parent_path()))
        throw ConfigError("output directory parent does not exist: " +
                          fs::path(out_dir).parent_path().string());
    fs::create_directories(out_dir);

    synth::SynthWorld world(rc.synth);
    const int total = meetings + dev_meetings + test_meetings;
    synth::Corpus all = synth::generate_corpus(world, total, utts_per_meeting);

    auto take = [&](int lo_meeting, int hi_meeting) {
        synth::Corpus c;
        for (auto& u : all.utterances) {
            const int m = std::stoi(u.id.substr(1, u.id.find('_') - 1));
            if (m >= lo_meeting && m < hi_meeting) c.utterances.push_back(u);
        }
        return c;
    };
    const std::string hash = rc.config_hash();
    synth::save_split((fs::path(out_dir) / "train").string(), take(0, meetings), hash);
    synth::save_split((fs::path(out_dir) / "dev").string(),
                      take(meetings, meetings + dev_meetings), hash);
    synth::save_split((fs::path(out_dir) / "test").string(),
                      take(meetings + dev_meetings, total), hash);
    io::write_text((fs::path(out_dir) / "config.json").string(), rc.to_json_text());
    write_run_manifest(out_dir, rc, argv_vec, {"train", "dev", "test", "config.json"});
    for (const char* split : {"train", "dev", "test"})
        std::cout << split << "_hash="
                  << hex64(synth::split_hash((fs::path(out_dir) / split).string())) << "\n";
    std::cout << "config_hash=" << hash << "\n";
    return 0;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume,
              const std::vector<std::string>& ablations,
              const std::vector<std::string>& argv_vec) {
    RunConfig rc = load_config_or_default(config_path);
    apply_ablations(rc.model, ablations);
    synth::Corpus train_c = synth::load_split((fs::path(data_dir) / "train").string());
    synth::Corpus dev_c;
    const bool have_dev = fs::exists(fs::path(data_dir) / "dev" / "manifest.json");
    if (have_dev) dev_c = synth::load_split((fs::path(data_dir) / "dev").string());

    Model model(rc.model, rc.train.seed);
    std::cout << "parameters=" << model.params().total_parameters() << "\n";
    fs::create_directories(out_dir);
    auto result = train::train(model, train_c, have_dev ? &dev_c : nullptr, rc.train, rc,
                               out_dir, &std::cout, resume);
    write_run_manifest(out_dir, rc, argv_vec, {"checkpoint", "metrics.log"});
    std::cout << "steps=" << result.steps << "\n";
    if (result.final_eval.si_cer >= 0)
        std::cout << "final_si_cer=" << result.final_eval.si_cer
                  << " final_sd_cer=" << result.final_eval.sd_cer << "\n";
    return 0;
}

// ---- eval ----

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             int beam, bool oracle_speakers, const std::vector<std::string>& ablations,
             const std::string& out_dir, const std::vector<std::string>& argv_vec) {
    RunConfig rc = peek_checkpoint_config(ckpt);
    apply_ablations(rc.model, ablations);
    Model model(rc.model, rc.train.seed);
    {
        RunConfig stored = peek_checkpoint_config(ckpt);
        load_params(ckpt, model.params(), stored.config_hash());
    }
    model.config_mut() = rc.model;  // ablation overrides apply at inference

    synth::Corpus corpus = synth::load_split((fs::path(data_dir) / split).string());
    decode::DecodeOptions opts;
    opts.beam_size = beam;
    auto results = decode::decode_corpus(model, corpus, opts);

    std::vector<std::vector<int>> refs, hyps;
    std::vector<sot::SOTSequence> ref_seqs;
    std::vector<metrics::SpeakerAttributed> hyp_attr;
    std::string decode_lines;
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& u = corpus.utterances[i];
        refs.push_back(u.ref.tokens);
        hyps.push_back(results[i].tokens);
        ref_seqs.push_back(u.ref);
        if (!oracle_speakers)
            hyp_attr.push_back(metrics::attribute_hypothesis(results[i].tokens,
                                                             results[i].segment_speakers, kScId));
        decode_lines += decode::format_decode_line(u.id, results[i], kScId);
        decode_lines += "\n";
    }
    const auto si = metrics::si_cer(refs, hyps, kScId);
    const auto sd = oracle_speakers ? metrics::sd_cer_oracle(ref_seqs, hyps, kScId)
                                    : metrics::sd_cer(ref_seqs, hyp_attr);
    std::cout << metrics::format_report(si, sd);
    size_t first_pass = 0;
    for (const auto& r : results)
        if (r.pass_used == "first") ++first_pass;
    std::cout << "pass_used=" << (first_pass == results.size() ? "first" : "two-pass") << "\n";

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        io::write_text((fs::path(out_dir) / "decodes.txt").string(), decode_lines);
        io::write_text((fs::path(out_dir) / "report.txt").string(),
                       metrics::format_report(si, sd));
        json extra;
        extra["pass_used"] = first_pass == results.size() ? "first" : "two-pass";
        extra["split"] = split;
        io::write_text((fs::path(out_dir) / "decode_meta.json").string(), extra.dump(2));
        write_run_manifest(out_dir, rc, argv_vec,
                           {"decodes.txt", "report.txt", "decode_meta.json"});
    }
    return 0;
}

// ---- infer ----

int cmd_infer(const std::string& ckpt, const std::string& features_path,
              const std::string& profiles_path, const std::string& utt_id, int beam) {
    RunConfig rc = peek_checkpoint_config(ckpt);
    Model model(rc.model, rc.train.seed);
    load_params(ckpt, model.params(), rc.config_hash());
    const Mat features = io::read_matrix(features_path);
    const Mat profiles = io::read_matrix(profiles_path);
    decode::DecodeOptions opts;
    opts.beam_size = beam;
    auto r = decode::decode_utterance(model, features, profiles, opts);
    std::cout << decode::format_decode_line(utt_id, r, kScId) << "\n";
    return 0;
}

// ---- dump-attention ----

int cmd_dump_attention(const std::string& ckpt, const std::string& data_dir,
                       const std::string& split, const std::string& utt_id,
                       const std::string& out_image, const std::string& raw_out,
                       const std::string& context_enc) {
    RunConfig rc = peek_checkpoint_config(ckpt);
    Model model(rc.model, rc.train.seed);
    load_params(ckpt, model.params(), rc.config_hash());
    if (context_enc == "off") model.config_mut().use_context_enc = false;
    else if (context_enc != "on")
        throw ConfigError("--context-enc must be on or off");

    synth::Corpus corpus = synth::load_split((fs::path(data_dir) / split).string());
    const synth::Utterance* utt = nullptr;
    for (const auto& u : corpus.utterances)
        if (u.id == utt_id) utt = &u;
    if (!utt) throw DataError("utterance id not found in split: " + utt_id);

    const Mat attn = decode::attention_map(model, utt->features, utt->ref.tokens,
                                           utt->profiles.profiles);
    if (!raw_out.empty()) io::write_matrix(raw_out, attn);
    io::write_heatmap_ppm(out_image, attn);
    std::cout << "rows=" << attn.rows() << " cols=" << attn.cols()
              << " entropy=" << decode::mean_block_attention_entropy(attn, utt->ref.tokens, kScId)
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"speaker-attributed multi-talker ASR toolkit"};
    app.require_subcommand(1);
    const auto argv_vec = collect_args(argc, argv);

    std::string config_path, out_dir, data_dir, ckpt, resume, split = "test";
    std::string features_path, profiles_path, utt_id = "utt0", out_image, raw_out;
    std::string context_enc = "on";
    int meetings = 250, utts_per_meeting = 8, dev_meetings = 25, test_meetings = 25;
    int beam = 4;
    bool oracle_speakers = false;
    std::vector<std::string> ablations;

    auto* s_synth = app.add_subcommand("synth", "generate a synthetic corpus");
    s_synth->add_option("--config", config_path, "config JSON");
    s_synth->add_option("--out", out_dir, "output dataset directory")->required();
    s_synth->add_option("--meetings", meetings, "training meetings");
    s_synth->add_option("--utts-per-meeting", utts_per_meeting, "utterances per meeting");
    s_synth->add_option("--dev-meetings", dev_meetings, "dev meetings");
    s_synth->add_option("--test-meetings", test_meetings, "test meetings");

    auto* s_train = app.add_subcommand("train", "train a model");
    s_train->add_option("--config", config_path, "config JSON");
    s_train->add_option("--data", data_dir, "dataset directory")->required();
    s_train->add_option("--out", out_dir, "run directory")->required();
    s_train->add_option("--resume", resume, "checkpoint to resume from");
    s_train->add_option("--ablate", ablations, "toggle, e.g. cd-scorer=off");

    auto* s_eval = app.add_subcommand("eval", "decode a split and score it");
    s_eval->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    s_eval->add_option("--data", data_dir, "dataset directory")->required();
    s_eval->add_option("--split", split, "split name (default test)");
    s_eval->add_option("--beam", beam, "beam size");
    s_eval->add_flag("--oracle-speakers", oracle_speakers, "score with reference attribution");
    s_eval->add_option("--ablate", ablations, "toggle, e.g. two-pass=off");
    s_eval->add_option("--out", out_dir, "write decodes and report here");

    auto* s_infer = app.add_subcommand("infer", "decode one utterance");
    s_infer->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    s_infer->add_option("--features", features_path, "feature matrix .bin")->required();
    s_infer->add_option("--profiles", profiles_path, "profile matrix .bin")->required();
    s_infer->add_option("--id", utt_id, "utterance id for the output line");
    s_infer->add_option("--beam", beam, "beam size");

    auto* s_attn = app.add_subcommand("dump-attention", "export an attention heatmap");
    s_attn->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    s_attn->add_option("--data", data_dir, "dataset directory")->required();
    s_attn->add_option("--split", split, "split name (default test)");
    s_attn->add_option("--utt", utt_id, "utterance id")->required();
    s_attn->add_option("--out", out_image, "output PPM image")->required();
    s_attn->add_option("--raw", raw_out, "also dump the raw matrix here");
    s_attn->add_option("--context-enc", context_enc, "on|off (ablation probe)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (s_synth->parsed())
            return cmd_synth(config_path, out_dir, meetings, utts_per_meeting, dev_meetings,
                             test_meetings, argv_vec);
        if (s_train->parsed())
            return cmd_train(config_path, data_dir, out_dir, resume, ablations, argv_vec);
        if (s_eval->parsed())
            return cmd_eval(ckpt, data_dir, split, beam, oracle_speakers, ablations, out_dir,
                            argv_vec);
        if (s_infer->parsed())
            return cmd_infer(ckpt, features_path, profiles_path, utt_id, beam);
        if (s_attn->parsed())
            return cmd_dump_attention(ckpt, data_dir, split, utt_id, out_image, raw_out,
                                      context_enc);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const sot::SotError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
