// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// Serialized output training (SOT) transcripts: multiple speakers' segments
// flattened into one token stream joined by a speaker-change symbol <sc>,
// ordered by segment start time (first-in first-out).
#pragma once

#include "saasr/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace saasr::sot {

struct Segment {
    int speaker_id = 0;             // profile-slot index, 1-based
    std::vector<int> tokens;        // token IDs, never the <sc> symbol
    Real start_time = 0.0;          // seconds
};

// Ordered speaker-attributed segments: who spoke what, in emission order.
struct AttributedTranscript {
    std::vector<Segment> segments;
};

// Flattened token stream Y with per-token speaker labels S.
// The <sc> token carries the speaker label of the segment it terminates.
struct SOTSequence {
    std::vector<int> tokens;    // y_1..y_N
    std::vector<int> speakers;  // s_1..s_N
    int sc_id = 0;
};

struct SotError : std::runtime_error {
    size_t position;  // 1-based token position of the violation (0 = structural)
    SotError(const std::string& msg, size_t pos) : std::runtime_error(msg), position(pos) {}
};

// Throws SotError if the transcript violates its invariants
// (empty, unsorted start times, adjacent same-speaker segments, bad tokens).
void validate_transcript(const AttributedTranscript& t, int sc_id);

SOTSequence serialize_sot(const AttributedTranscript& t, int sc_id);

// Inverse of serialize_sot; start times are replaced by segment ordinals.
AttributedTranscript parse_sot(const SOTSequence& seq);

// Contiguous half-open [start,end) index ranges (0-based) covering exactly
// the non-<sc> positions of the token stream.
std::vector<std::pair<int, int>> speaker_blocks(const std::vector<int>& tokens, int sc_id);

inline std::vector<std::pair<int, int>> speaker_blocks(const SOTSequence& seq) {
    return speaker_blocks(seq.tokens, seq.sc_id);
}

// Text format: segments as `spk<id>:<space-separated tokens>` joined by ` $ `.
std::string to_text(const AttributedTranscript& t);
AttributedTranscript from_text(const std::string& line);

// Flattened rendering with <sc> spelled out, e.g. "5 9 <sc> 44".
std::string flatten_text(const std::vector<int>& tokens, int sc_id);

}  // namespace saasr::sot
