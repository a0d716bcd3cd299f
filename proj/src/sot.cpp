// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0

#include "saasr/sot.hpp"

#include <sstream>

namespace saasr::sot {

void validate_transcript(const AttributedTranscript& t, int sc_id) {
    if (t.segments.empty()) throw SotError("transcript has no segments", 0);
    for (size_t i = 0; i < t.segments.size(); ++i) {
        const Segment& s = t.segments[i];
        if (s.tokens.empty())
            throw SotError("segment " + std::to_string(i + 1) + " is empty", 0);
        if (s.speaker_id < 1)
            throw SotError("segment " + std::to_string(i + 1) + " has invalid speaker id", 0);
        if (s.start_time < 0.0)
            throw SotError("segment " + std::to_string(i + 1) + " has negative start time", 0);
        for (int tok : s.tokens) {
            if (tok < 1) throw SotError("token id below 1 in segment " + std::to_string(i + 1), 0);
            if (tok == sc_id)
                throw SotError("segment " + std::to_string(i + 1) + " contains the <sc> symbol", 0);
        }
        if (i > 0) {
            if (t.segments[i - 1].start_time > s.start_time)
                throw SotError("segments not sorted by start time at segment " +
                                   std::to_string(i + 1),
                               0);
            if (t.segments[i - 1].speaker_id == s.speaker_id)
                throw SotError("adjacent segments share speaker at segment " +
                                   std::to_string(i + 1),
                               0);
        }
    }
}

SOTSequence serialize_sot(const AttributedTranscript& t, int sc_id) {
    validate_transcript(t, sc_id);
    SOTSequence seq;
    seq.sc_id = sc_id;
    for (size_t i = 0; i < t.segments.size(); ++i) {
        const Segment& s = t.segments[i];
        if (i > 0) {
            // <sc> carries the label of the segment it terminates
            seq.tokens.push_back(sc_id);
            seq.speakers.push_back(t.segments[i - 1].speaker_id);
        }
        for (int tok : s.tokens) {
            seq.tokens.push_back(tok);
            seq.speakers.push_back(s.speaker_id);
        }
    }
    return seq;
}

namespace {

// Shared <sc>-placement validation; reports 1-based positions.
void check_sc_placement(const std::vector<int>& tokens, int sc_id) {
    if (tokens.empty()) throw SotError("empty token sequence", 0);
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] != sc_id) continue;
        if (i == 0) throw SotError("leading <sc> at position 1", 1);
        if (i + 1 == tokens.size())
            throw SotError("trailing <sc> at position " + std::to_string(i + 1), i + 1);
        if (tokens[i - 1] == sc_id)
            throw SotError("consecutive <sc> at position " + std::to_string(i + 1), i + 1);
    }
}

}  // namespace

AttributedTranscript parse_sot(const SOTSequence& seq) {
    if (seq.tokens.size() != seq.speakers.size())
        throw SotError("token/speaker length mismatch", 0);
    check_sc_placement(seq.tokens, seq.sc_id);

    AttributedTranscript t;
    Segment cur;
    size_t ordinal = 0;
    for (size_t i = 0; i < seq.tokens.size(); ++i) {
        if (seq.tokens[i] == seq.sc_id) {
            if (seq.speakers[i] != cur.speaker_id)
                throw SotError("<sc> speaker label differs from its segment at position " +
                                   std::to_string(i + 1),
                               i + 1);
            cur.start_time = static_cast<Real>(ordinal++);
            t.segments.push_back(std::move(cur));
            cur = Segment{};
            continue;
        }
        if (cur.tokens.empty()) {
            cur.speaker_id = seq.speakers[i];
        } else if (seq.speakers[i] != cur.speaker_id) {
            throw SotError("speaker label changes without <sc> at position " +
                               std::to_string(i + 1),
                           i + 1);
        }
        cur.tokens.push_back(seq.tokens[i]);
    }
    cur.start_time = static_cast<Real>(ordinal);
    t.segments.push_back(std::move(cur));

    for (size_t i = 1; i < t.segments.size(); ++i)
        if (t.segments[i].speaker_id == t.segments[i - 1].speaker_id)
            throw SotError("adjacent blocks share speaker (segment " + std::to_string(i + 1) + ")",
                           0);
    return t;
}

std::vector<std::pair<int, int>> speaker_blocks(const std::vector<int>& tokens, int sc_id) {
    check_sc_placement(tokens, sc_id);
    std::vector<std::pair<int, int>> blocks;
    int start = 0;
    for (int i = 0; i <= static_cast<int>(tokens.size()); ++i) {
        const bool boundary = i == static_cast<int>(tokens.size()) || tokens[i] == sc_id;
        if (!boundary) continue;
        blocks.emplace_back(start, i);
        start = i + 1;
    }
    return blocks;
}

std::string to_text(const AttributedTranscript& t) {
    std::ostringstream os;
    for (size_t i = 0; i < t.segments.size(); ++i) {
        if (i > 0) os << " $ ";
        os << "spk" << t.segments[i].speaker_id << ":";
        for (size_t j = 0; j < t.segments[i].tokens.size(); ++j) {
            if (j > 0) os << " ";
            os << t.segments[i].tokens[j];
        }
    }
    return os.str();
}

AttributedTranscript from_text(const std::string& line) {
    AttributedTranscript t;
    size_t pos = 0, ordinal = 0;
    while (pos <= line.size()) {
        size_t end = line.find(" $ ", pos);
        std::string field =
            (end == std::string::npos) ? line.substr(pos) : line.substr(pos, end - pos);
        if (field.rfind("spk", 0) != 0)
            throw DataError("transcript field must start with 'spk': '" + field + "'");
        const size_t colon = field.find(':');
        if (colon == std::string::npos) throw DataError("missing ':' in transcript field");
        Segment seg;
        try {
            seg.speaker_id = std::stoi(field.substr(3, colon - 3));
        } catch (const std::exception&) {
            throw DataError("bad speaker id in transcript field: '" + field + "'");
        }
        std::istringstream toks(field.substr(colon + 1));
        int tok;
        while (toks >> tok) seg.tokens.push_back(tok);
        if (seg.tokens.empty()) throw DataError("empty segment in transcript line");
        seg.start_time = static_cast<Real>(ordinal++);
        t.segments.push_back(std::move(seg));
        if (end == std::string::npos) break;
        pos = end + 3;
    }
    if (t.segments.empty()) throw DataError("empty transcript line");
    return t;
}

std::string flatten_text(const std::vector<int>& tokens, int sc_id) {
    std::ostringstream os;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) os << " ";
        if (tokens[i] == sc_id)
            os << "<sc>";
        else
            os << tokens[i];
    }
    return os.str();
}

}  // namespace saasr::sot
