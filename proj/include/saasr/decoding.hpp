// Copyright 2026 the saasr authors
// Licensed under the Apache License, Version 2.0
//
// First-pass autoregressive joint decoding, second-pass speaker-only
// decoding, and segment-level speaker assignment.
//
// Per-step dataflow (first pass): layer-1 self-attention produces the tap
// column; the speaker branch reruns on the whole cached tap prefix
// (bidirectional over what exists so far) to produce the current query,
// posterior row and weighted profile; the ASR decoder then finishes the step
// and the beam expands on token log-probabilities only.
#pragma once

#include "saasr/model.hpp"
#include "saasr/sot.hpp"
#include "saasr/synth.hpp"

#include <string>
#include <vector>

namespace saasr::decode {

struct DecodeOptions {
    int beam_size = 4;
    bool use_incremental_cache = true;  // false: recompute-from-scratch reference path
    int max_len_factor = 2;             // max decode length = factor * l_h
};

struct DecodeResult {
    std::vector<int> tokens;            // SOT token sequence (no BOS/EOS)
    Mat beta;                           // (N x K) speaker posterior rows
    std::vector<int> segment_speakers;  // 1-based slot per <sc>-delimited block
    std::string pass_used = "first";    // "first" | "two-pass"
    Real log_prob = 0.0;
    bool overflowed = false;            // hit the max decode length
};

DecodeResult decode_utterance(const Model& m, const Mat& features, const Mat& profiles,
                              const DecodeOptions& opts = {});

// Non-autoregressive speaker re-prediction over a fixed token sequence.
Mat second_pass_speakers(const Model& m, const EncoderOutputs& enc, const std::vector<int>& y,
                         const Mat& profiles);
Mat second_pass_speakers(const Model& m, const Mat& features, const std::vector<int>& y,
                         const Mat& profiles);

// argmax_k of the mean beta over each <sc>-delimited block; ties break to the
// lowest slot index.
std::vector<int> assign_segment_speakers(const std::vector<int>& y, const Mat& beta, int sc_id);

// ASR-decoder cache-correctness probe: steps through in_tokens with the
// incremental decoder, feeding the given weighted-profile columns, and
// returns the (V x M) logits. Must match asr_dec_phase2 on the same inputs.
Mat asr_decoder_replay(const Model& m, const EncoderOutputs& enc,
                       const std::vector<int>& in_tokens, const Mat& dbar);

// Head-averaged first-layer source-target attention (N x l_h) over a fixed
// token sequence, for diagnostics and heatmap dumps.
Mat attention_map(const Model& m, const Mat& features, const std::vector<int>& y,
                  const Mat& profiles);

// Decode-output line: "<utt-id>\t<flattened SOT with <sc>>\t<block speakers>".
std::string format_decode_line(const std::string& utt_id, const DecodeResult& r, int sc_id);

// Utterance-parallel decoding; the model is read-only. threads <= 0 reads
// the SAASR_THREADS environment variable (default: hardware concurrency).
std::vector<DecodeResult> decode_corpus(const Model& m, const synth::Corpus& corpus,
                                        const DecodeOptions& opts, int threads = 0);

// Mean over <sc>-delimited blocks of the per-query attention entropy,
// queries averaged within each block first.
Real mean_block_attention_entropy(const Mat& attn, const std::vector<int>& y, int sc_id);

}  // namespace saasr::decode
