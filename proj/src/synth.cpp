// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/synth.hpp"

#include "saasr/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

namespace saasr::synth {

namespace fs = std::filesystem;
using nlohmann::json;

void SpeakerProfileSet::validate() const {
    const int K = slots();
    if (K < 1) throw DataError("profile set must have at least one slot");
    if (static_cast<int>(speaker_ids.size()) != K ||
        static_cast<int>(padding_mask.size()) != K)
        throw DataError("profile set bookkeeping length mismatch");
    std::set<int> seen;
    for (int id : speaker_ids)
        if (!seen.insert(id).second)
            throw DataError("duplicate speaker id in profile set: " + std::to_string(id));
    for (int k = 0; k < K; ++k)
        if (profiles.row(k).norm() < 1e-12)
            throw DataError("all-zero profile vector in slot " + std::to_string(k + 1));
}

Mat make_speaker_inventory(int num_speakers, int f_d, uint64_t seed) {
    if (num_speakers < 1) throw ConfigError("inventory needs at least one speaker");
    if (f_d < 8) throw ConfigError("profile dimension below 8 is too collision-prone");
    Rng rng(substream_seed(seed, 0x51674EE5ull));
    Mat inv(f_d, num_speakers);
    for (int k = 0; k < num_speakers; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000)
                throw ConfigError("cannot place " + std::to_string(num_speakers) +
                                  " well-separated signatures in " + std::to_string(f_d) +
                                  " dimensions");
            Vec v = rng.normal_matrix(f_d, 1);
            v.normalize();
            bool ok = true;
            for (int j = 0; j < k && ok; ++j)
                if (std::abs(v.dot(inv.col(j))) >= 0.5) ok = false;
            if (ok) {
                inv.col(k) = v;
                break;
            }
        }
    }
    return inv;
}

SynthWorld::SynthWorld(const SynthConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    signatures_ = make_speaker_inventory(cfg.num_speakers, cfg.profile_dim, cfg.seed);

    // Voice vectors live in feature space; a fixed linear image of the
    // signature keeps voice -> profile matching learnable across speakers.
    Rng map_rng(substream_seed(cfg.seed, 0xA11CEull));
    Mat voice_map =
        map_rng.normal_matrix(cfg.feature_dim, cfg.profile_dim, 1.0 / std::sqrt(cfg.profile_dim));
    voices_ = voice_map * signatures_;
    for (int k = 0; k < voices_.cols(); ++k) voices_.col(k).normalize();

    Rng tok_rng(substream_seed(cfg.seed, 0x70CE2ull));
    token_embeds_ = tok_rng.normal_matrix(cfg.feature_dim, cfg.vocab_size);
    for (int j = 0; j < token_embeds_.cols(); ++j) token_embeds_.col(j).normalize();
}

Vec SynthWorld::signature(int global_id) const {
    if (global_id < 1 || global_id > signatures_.cols())
        throw DataError("unknown speaker id " + std::to_string(global_id));
    return signatures_.col(global_id - 1);
}

Vec SynthWorld::voice(int global_id) const {
    if (global_id < 1 || global_id > voices_.cols())
        throw DataError("unknown speaker id " + std::to_string(global_id));
    return voices_.col(global_id - 1);
}

Vec SynthWorld::token_embedding(int token_id) const {
    if (token_id < 1 || token_id > token_embeds_.cols())
        throw DataError("token id " + std::to_string(token_id) + " outside vocabulary");
    return token_embeds_.col(token_id - 1);
}

Mat SynthWorld::render_utterance(const sot::AttributedTranscript& t, Rng& rng) const {
    sot::validate_transcript(t, kScId);
    int total_tokens = 0;
    for (const auto& seg : t.segments) {
        if (seg.speaker_id < 1 || seg.speaker_id > voices_.cols())
            throw DataError("unknown speaker id " + std::to_string(seg.speaker_id));
        total_tokens += static_cast<int>(seg.tokens.size());
    }
    const int r = cfg_.frames_per_token;
    Mat x(cfg_.feature_dim, static_cast<Eigen::Index>(total_tokens) * r);
    int col = 0;
    for (const auto& seg : t.segments) {
        const Vec v = voice(seg.speaker_id);
        for (int tok : seg.tokens) {
            const Vec base = token_embedding(tok) + v;
            for (int i = 0; i < r; ++i, ++col) {
                x.col(col) = base;
                if (cfg_.noise_std > 0.0)
                    for (int d = 0; d < x.rows(); ++d)
                        x(d, col) += rng.normal() * cfg_.noise_std;
            }
        }
    }
    return x;
}

namespace {

// Draws segment speakers (global ids): first uniform, then uniform over the
// other participants so adjacent segments always differ.
std::vector<int> draw_segment_speakers(const std::vector<int>& participants, int n_segments,
                                       Rng& rng) {
    std::vector<int> out(n_segments);
    out[0] = participants[rng.uniform_int(0, static_cast<int>(participants.size()) - 1)];
    for (int i = 1; i < n_segments; ++i) {
        int pick;
        do {
            pick = participants[rng.uniform_int(0, static_cast<int>(participants.size()) - 1)];
        } while (pick == out[i - 1]);
        out[i] = pick;
    }
    return out;
}

}  // namespace

Corpus generate_corpus(const SynthWorld& world, int n_meetings, int utterances_per_meeting) {
    const SynthConfig& cfg = world.config();
    if (n_meetings < 1 || utterances_per_meeting < 1)
        throw ConfigError("corpus needs at least one meeting and one utterance");
    if (cfg.speakers_per_meeting > cfg.profile_slots)
        throw ConfigError("speakers_per_meeting cannot exceed profile_slots");

    // Participants for every meeting first; padding draws from other meetings.
    Rng corpus_rng(substream_seed(cfg.seed, 0xC0B05ull));
    std::vector<std::vector<int>> participants(n_meetings);
    for (int m = 0; m < n_meetings; ++m) {
        const int lo = std::min(2, cfg.speakers_per_meeting);
        const int count = corpus_rng.uniform_int(lo, cfg.speakers_per_meeting);
        std::vector<int> pool(cfg.num_speakers);
        for (int i = 0; i < cfg.num_speakers; ++i) pool[i] = i + 1;
        for (int i = 0; i < count; ++i) {
            const int j = corpus_rng.uniform_int(i, cfg.num_speakers - 1);
            std::swap(pool[i], pool[j]);
        }
        participants[m].assign(pool.begin(), pool.begin() + count);
    }

    Corpus corpus;
    for (int m = 0; m < n_meetings; ++m) {
        // Candidates for padded slots: speakers of other meetings only.
        std::set<int> own(participants[m].begin(), participants[m].end());
        std::vector<int> pad_pool;
        {
            std::set<int> others;
            for (int mm = 0; mm < n_meetings; ++mm) {
                if (mm == m) continue;
                for (int id : participants[mm])
                    if (!own.count(id)) others.insert(id);
            }
            pad_pool.assign(others.begin(), others.end());
        }
        const int n_pad = cfg.profile_slots - static_cast<int>(participants[m].size());
        if (static_cast<int>(pad_pool.size()) < n_pad)
            throw DataError("inventory exhausted: meeting " + std::to_string(m + 1) + " needs " +
                            std::to_string(n_pad) + " padding speakers, only " +
                            std::to_string(pad_pool.size()) + " available from other meetings");

        Rng meeting_rng(substream_seed(cfg.seed, 1000 + static_cast<uint64_t>(m)));
        for (int u = 0; u < utterances_per_meeting; ++u) {
            Utterance utt;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "m%03d_u%04d", m, u);
            utt.id = buf;

            // slot layout: participants plus padded speakers, shuffled
            std::vector<int> slot_ids = participants[m];
            for (int i = 0; i < n_pad; ++i) {
                const int j = meeting_rng.uniform_int(i, static_cast<int>(pad_pool.size()) - 1);
                std::swap(pad_pool[i], pad_pool[j]);
            }
            slot_ids.insert(slot_ids.end(), pad_pool.begin(), pad_pool.begin() + n_pad);
            std::vector<int> order(slot_ids.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            for (size_t i = 0; i + 1 < order.size(); ++i) {
                const int j = meeting_rng.uniform_int(static_cast<int>(i),
                                                      static_cast<int>(order.size()) - 1);
                std::swap(order[i], order[j]);
            }

            const int K = cfg.profile_slots;
            utt.profiles.profiles.resize(K, cfg.profile_dim);
            utt.profiles.speaker_ids.resize(K);
            utt.profiles.padding_mask.resize(K);
            std::vector<int> global_to_slot(cfg.num_speakers + 1, 0);
            for (int k = 0; k < K; ++k) {
                const int global = slot_ids[order[k]];
                utt.profiles.speaker_ids[k] = global;
                utt.profiles.padding_mask[k] = order[k] >= static_cast<int>(participants[m].size());
                Vec p = world.signature(global);
                if (cfg.profile_noise_std > 0.0)
                    for (int d = 0; d < p.size(); ++d)
                        p(d) += meeting_rng.normal() * cfg.profile_noise_std;
                utt.profiles.profiles.row(k) = p.transpose();
                global_to_slot[global] = k + 1;
            }
            utt.profiles.validate();

            // transcript in global ids for rendering
            int n_segments = meeting_rng.uniform_int(cfg.min_segments, cfg.max_segments);
            if (participants[m].size() == 1) n_segments = 1;
            sot::AttributedTranscript global_t;
            const auto seg_speakers = draw_segment_speakers(participants[m], n_segments,
                                                            meeting_rng);
            for (int s = 0; s < n_segments; ++s) {
                sot::Segment seg;
                seg.speaker_id = seg_speakers[s];
                seg.start_time = static_cast<Real>(s);
                const int len = meeting_rng.uniform_int(cfg.min_segment_len, cfg.max_segment_len);
                for (int i = 0; i < len; ++i)
                    seg.tokens.push_back(
                        meeting_rng.uniform_int(kFirstContentId, cfg.vocab_size - 1));
                global_t.segments.push_back(std::move(seg));
            }
            utt.features = world.render_utterance(global_t, meeting_rng);

            // reference uses profile-slot indices
            sot::AttributedTranscript slot_t = global_t;
            for (auto& seg : slot_t.segments) seg.speaker_id = global_to_slot[seg.speaker_id];
            utt.ref = sot::serialize_sot(slot_t, kScId);
            corpus.utterances.push_back(std::move(utt));
        }
    }
    return corpus;
}

void save_split(const std::string& dir, const Corpus& corpus, const std::string& config_hash) {
    fs::create_directories(fs::path(dir) / "features");
    fs::create_directories(fs::path(dir) / "profiles");
    json manifest;
    manifest["config_hash"] = config_hash;
    manifest["n_utterances"] = corpus.utterances.size();
    json utts = json::array();
    std::string transcripts;
    for (const auto& u : corpus.utterances) {
        const std::string feat_rel = "features/" + u.id + ".bin";
        const std::string prof_rel = "profiles/" + u.id + ".bin";
        io::write_matrix((fs::path(dir) / feat_rel).string(), u.features);
        io::write_matrix((fs::path(dir) / prof_rel).string(), u.profiles.profiles);
        transcripts += sot::to_text(sot::parse_sot(u.ref));
        transcripts += "\n";
        json ju;
        ju["id"] = u.id;
        ju["features"] = feat_rel;
        ju["profiles"] = prof_rel;
        ju["source"] = u.source;
        ju["speaker_ids"] = u.profiles.speaker_ids;
        ju["padding_mask"] = u.profiles.padding_mask;
        utts.push_back(std::move(ju));
    }
    manifest["utterances"] = std::move(utts);
    io::write_text((fs::path(dir) / "transcripts.txt").string(), transcripts);
    io::write_text((fs::path(dir) / "manifest.json").string(), manifest.dump(2));
}

Corpus load_split(const std::string& dir) {
    json manifest;
    try {
        manifest = json::parse(io::read_text((fs::path(dir) / "manifest.json").string()));
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed dataset manifest: ") + e.what());
    }
    const auto lines = io::read_lines((fs::path(dir) / "transcripts.txt").string());
    Corpus corpus;
    try {
        const auto& utts = manifest.at("utterances");
        if (lines.size() < utts.size()) throw DataError("transcripts.txt shorter than manifest");
        size_t i = 0;
        for (const auto& ju : utts) {
            Utterance u;
            u.id = ju.at("id").get<std::string>();
            u.features = io::read_matrix((fs::path(dir) / ju.at("features").get<std::string>()).string());
            u.profiles.profiles =
                io::read_matrix((fs::path(dir) / ju.at("profiles").get<std::string>()).string());
            u.profiles.speaker_ids = ju.at("speaker_ids").get<std::vector<int>>();
            u.profiles.padding_mask = ju.at("padding_mask").get<std::vector<bool>>();
            if (ju.contains("source")) u.source = ju.at("source").get<std::string>();
            u.profiles.validate();
            u.ref = sot::serialize_sot(sot::from_text(lines[i++]), kScId);
            corpus.utterances.push_back(std::move(u));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed dataset manifest: ") + e.what());
    }
    return corpus;
}

uint64_t split_hash(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), dir).string());
    std::sort(files.begin(), files.end());
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& f : files) {
        h = fnv1a(f, h);
        const uint64_t fh = io::file_hash((fs::path(dir) / f).string());
        h = fnv1a(&fh, sizeof(fh), h);
    }
    return h;
}

}  // namespace saasr::synth
