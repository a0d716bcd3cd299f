// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// SI-CER and SD-CER scoring on a dynamic-programming edit-distance core.
// Corpus-level micro-averaging: errors and reference lengths are summed
// before division. Profile identities are shared between reference and
// hypothesis, so no speaker-permutation search is involved.
#pragma once

#include "saasr/sot.hpp"

#include <vector>

namespace saasr::metrics {

struct EditCounts {
    long subs = 0, dels = 0, ins = 0;
    long total() const { return subs + dels + ins; }
};

// Minimal-cost alignment with unit costs; deterministic counts via a fixed
// tie-break order (substitution before deletion before insertion).
EditCounts edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp);

struct ScoreReport {
    long subs = 0, dels = 0, ins = 0;
    long ref_len = 0;
    Real cer = 0.0;
    long total() const { return subs + dels + ins; }
};

// CER ignoring speaker labels; <sc> is stripped from both sides first.
ScoreReport si_cer(const std::vector<std::vector<int>>& refs,
                   const std::vector<std::vector<int>>& hyps, int sc_id);

// Flat per-token speaker attribution of a hypothesis (content tokens only).
struct SpeakerAttributed {
    std::vector<int> tokens;
    std::vector<int> speakers;  // 1-based slot per token
};

// Expands block speakers onto the block's tokens, dropping <sc>.
SpeakerAttributed attribute_hypothesis(const std::vector<int>& y,
                                       const std::vector<int>& segment_speakers, int sc_id);
SpeakerAttributed attribute_reference(const sot::SOTSequence& ref);

// Per (utterance, speaker): hypothesis tokens attributed to the speaker are
// concatenated in order and aligned against that speaker's reference stream;
// SD-CER = total errors / total reference length. Hypothesis-only speakers
// count as insertions against an empty reference.
ScoreReport sd_cer(const std::vector<sot::SOTSequence>& refs,
                   const std::vector<SpeakerAttributed>& hyps);

// Oracle attribution: aligns the (sc-stripped) hypothesis against the
// reference and transfers reference speaker labels across the alignment.
SpeakerAttributed oracle_attribution(const sot::SOTSequence& ref,
                                     const std::vector<int>& hyp_tokens, int sc_id);

// SD-CER under oracle (reference) attribution: the flat alignment's errors
// are attributed to their reference speaker streams, so the totals equal
// si_cer by construction. (Re-minimizing per stream after a label transfer
// can occasionally undercut the flat alignment when the same token is both
// inserted and deleted within one stream.)
ScoreReport sd_cer_oracle(const std::vector<sot::SOTSequence>& refs,
                          const std::vector<std::vector<int>>& hyp_tokens, int sc_id);

std::string format_report(const ScoreReport& si, const ScoreReport& sd);

}  // namespace saasr::metrics
