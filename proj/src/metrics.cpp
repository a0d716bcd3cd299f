// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace saasr::metrics {

namespace {

enum class Op : unsigned char { Match, Sub, Del, Ins };

// Full DP with backtrace. Tie-break order on equal cost: diagonal
// (match/substitution), then deletion, then insertion.
std::vector<Op> align(const std::vector<int>& ref, const std::vector<int>& hyp) {
    const size_t R = ref.size(), H = hyp.size();
    std::vector<std::vector<int>> d(R + 1, std::vector<int>(H + 1, 0));
    for (size_t i = 0; i <= R; ++i) d[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= H; ++j) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= R; ++i)
        for (size_t j = 1; j <= H; ++j) {
            const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            const int del = d[i - 1][j] + 1;
            const int ins = d[i][j - 1] + 1;
            d[i][j] = std::min({sub, del, ins});
        }
    std::vector<Op> ops;
    size_t i = R, j = H;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            ops.push_back(ref[i - 1] == hyp[j - 1] ? Op::Match : Op::Sub);
            --i, --j;
        } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
            ops.push_back(Op::Del);
            --i;
        } else {
            ops.push_back(Op::Ins);
            --j;
        }
    }
    std::reverse(ops.begin(), ops.end());
    return ops;
}

std::vector<int> strip_sc(const std::vector<int>& tokens, int sc_id) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (int t : tokens)
        if (t != sc_id) out.push_back(t);
    return out;
}

}  // namespace

EditCounts edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
    EditCounts c;
    for (Op op : align(ref, hyp)) {
        if (op == Op::Sub) ++c.subs;
        else if (op == Op::Del) ++c.dels;
        else if (op == Op::Ins) ++c.ins;
    }
    return c;
}

ScoreReport si_cer(const std::vector<std::vector<int>>& refs,
                   const std::vector<std::vector<int>>& hyps, int sc_id) {
    if (refs.size() != hyps.size()) throw DataError("si_cer: ref/hyp count mismatch");
    ScoreReport r;
    for (size_t u = 0; u < refs.size(); ++u) {
        const auto ref = strip_sc(refs[u], sc_id);
        const auto hyp = strip_sc(hyps[u], sc_id);
        const EditCounts c = edit_distance(ref, hyp);
        r.subs += c.subs;
        r.dels += c.dels;
        r.ins += c.ins;
        r.ref_len += static_cast<long>(ref.size());
    }
    if (r.ref_len == 0) throw DataError("si_cer: empty reference corpus");
    r.cer = static_cast<Real>(r.subs + r.dels + r.ins) / static_cast<Real>(r.ref_len);
    return r;
}

SpeakerAttributed attribute_hypothesis(const std::vector<int>& y,
                                       const std::vector<int>& segment_speakers, int sc_id) {
    SpeakerAttributed out;
    if (y.empty()) return out;
    const auto blocks = sot::speaker_blocks(y, sc_id);
    if (blocks.size() != segment_speakers.size())
        throw DataError("attribute_hypothesis: one speaker per block required");
    for (size_t b = 0; b < blocks.size(); ++b)
        for (int i = blocks[b].first; i < blocks[b].second; ++i) {
            out.tokens.push_back(y[i]);
            out.speakers.push_back(segment_speakers[b]);
        }
    return out;
}

SpeakerAttributed attribute_reference(const sot::SOTSequence& ref) {
    SpeakerAttributed out;
    for (size_t i = 0; i < ref.tokens.size(); ++i) {
        if (ref.tokens[i] == ref.sc_id) continue;
        out.tokens.push_back(ref.tokens[i]);
        out.speakers.push_back(ref.speakers[i]);
    }
    return out;
}

ScoreReport sd_cer(const std::vector<sot::SOTSequence>& refs,
                   const std::vector<SpeakerAttributed>& hyps) {
    if (refs.size() != hyps.size()) throw DataError("sd_cer: ref/hyp count mismatch");
    ScoreReport r;
    for (size_t u = 0; u < refs.size(); ++u) {
        const SpeakerAttributed ref = attribute_reference(refs[u]);
        const SpeakerAttributed& hyp = hyps[u];
        std::set<int> speakers(ref.speakers.begin(), ref.speakers.end());
        speakers.insert(hyp.speakers.begin(), hyp.speakers.end());
        for (int k : speakers) {
            std::vector<int> ref_k, hyp_k;
            for (size_t i = 0; i < ref.tokens.size(); ++i)
                if (ref.speakers[i] == k) ref_k.push_back(ref.tokens[i]);
            for (size_t i = 0; i < hyp.tokens.size(); ++i)
                if (hyp.speakers[i] == k) hyp_k.push_back(hyp.tokens[i]);
            const EditCounts c = edit_distance(ref_k, hyp_k);
            r.subs += c.subs;
            r.dels += c.dels;
            r.ins += c.ins;
            r.ref_len += static_cast<long>(ref_k.size());
        }
    }
    if (r.ref_len == 0) throw DataError("sd_cer: empty reference corpus");
    r.cer = static_cast<Real>(r.subs + r.dels + r.ins) / static_cast<Real>(r.ref_len);
    return r;
}

SpeakerAttributed oracle_attribution(const sot::SOTSequence& ref,
                                     const std::vector<int>& hyp_tokens, int sc_id) {
    const SpeakerAttributed ref_attr = attribute_reference(ref);
    const std::vector<int> hyp = strip_sc(hyp_tokens, sc_id);
    const auto ops = align(ref_attr.tokens, hyp);
    SpeakerAttributed out;
    out.tokens = hyp;
    out.speakers.reserve(hyp.size());
    size_t i = 0;  // ref cursor
    int last_speaker = ref_attr.speakers.empty() ? 1 : ref_attr.speakers.front();
    for (Op op : ops) {
        switch (op) {
            case Op::Match:
            case Op::Sub:
                last_speaker = ref_attr.speakers[i];
                out.speakers.push_back(last_speaker);
                ++i;
                break;
            case Op::Del:
                last_speaker = ref_attr.speakers[i];
                ++i;
                break;
            case Op::Ins:
                // inserted token inherits the nearest preceding reference
                // speaker (or the first, at the very start)
                out.speakers.push_back(i < ref_attr.speakers.size() && out.speakers.empty()
                                           ? ref_attr.speakers[i]
                                           : last_speaker);
                break;
        }
    }
    return out;
}

ScoreReport sd_cer_oracle(const std::vector<sot::SOTSequence>& refs,
                          const std::vector<std::vector<int>>& hyp_tokens, int sc_id) {
    if (refs.size() != hyp_tokens.size()) throw DataError("sd_cer_oracle: count mismatch");
    ScoreReport r;
    for (size_t u = 0; u < refs.size(); ++u) {
        const SpeakerAttributed ref = attribute_reference(refs[u]);
        const std::vector<int> hyp = strip_sc(hyp_tokens[u], sc_id);
        size_t i = 0;
        for (Op op : align(ref.tokens, hyp)) {
            switch (op) {
                case Op::Match:
                    ++i;
                    break;
                case Op::Sub:
                    ++r.subs;
                    ++i;
                    break;
                case Op::Del:
                    ++r.dels;
                    ++i;
                    break;
                case Op::Ins:
                    ++r.ins;
                    break;
            }
        }
        r.ref_len += static_cast<long>(ref.tokens.size());
    }
    if (r.ref_len == 0) throw DataError("sd_cer_oracle: empty reference corpus");
    r.cer = static_cast<Real>(r.subs + r.dels + r.ins) / static_cast<Real>(r.ref_len);
    return r;
}

std::string format_report(const ScoreReport& si, const ScoreReport& sd) {
    std::ostringstream os;
    os << "si_cer=" << si.cer << "\n";
    os << "si_subs=" << si.subs << " si_dels=" << si.dels << " si_ins=" << si.ins
       << " si_ref_len=" << si.ref_len << "\n";
    os << "sd_cer=" << sd.cer << "\n";
    os << "sd_subs=" << sd.subs << " sd_dels=" << sd.dels << " sd_ins=" << sd.ins
       << " sd_ref_len=" << sd.ref_len << "\n";
    return os.str();
}

}  // namespace saasr::metrics
