// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ngc/cache.hpp"
#include "ngc/tensor.hpp"

namespace ngc {

// Eviction policies at a common interface: score candidate blocks, keep the top
// K. NgcAttention is the learned policy; the other four are re-implementations
// of published heuristics at block granularity, not reference code.
enum class ScorerKind { NgcAttention, StreamingWindow, SnapAttention, KeyNorm, KeyDiversity };

ScorerKind scorer_from_string(const std::string& name);
std::string scorer_to_string(ScorerKind kind);

struct ScorerParams {
    int n_sink_tokens = 4;       // StreamingWindow: early tokens pinned (block granularity)
    int window_tokens = 0;       // StreamingWindow: recent floor; K governs the final count
    int observation_window = 5;  // SnapAttention: recent queries scored against
};

// Per-key importance plus validity mask; sum over valid keys is 1 per layer.
struct KeyScores {
    std::vector<double> psi;
    std::vector<uint8_t> valid;
};

// Differentiable attention-mass scores: softmax(q k^T / sqrt(d_h)) per head over
// the candidate keys only, averaged over heads and the recent queries.
// q_heads: [head] w x d_h, k_heads: [head] C x d_h (both post-rope).
// `valid` masks keys out of the softmax entirely; null means all valid.
Tensor ngc_key_scores(const std::vector<Tensor>& q_heads, const std::vector<Tensor>& k_heads,
                      const std::vector<uint8_t>* valid = nullptr);

// Raw-buffer convenience used at rollout time.
// recent_queries: oldest..newest rows of H*d_h; the last `w` are used.
KeyScores ngc_key_scores_raw(const std::vector<std::vector<double>>& recent_queries,
                             const std::vector<std::vector<double>>& cand_keys, int n_heads,
                             int d_head, int w);

// Masked mean of psi per block; a block with no valid keys gets -inf and is
// never sampled.
std::vector<double> aggregate_blocks(const KeyScores& scores, const BlockPartition& partition);
// Graph-path aggregation (all keys valid), used during replay.
Tensor aggregate_blocks_t(const Tensor& psi, const BlockPartition& partition);

// Inputs a heuristic needs about one layer's candidates at a round.
struct RoundLayerInputs {
    std::vector<std::vector<double>> cand_keys;       // C x (H*d_h)
    std::vector<int> cand_global;                     // original token indices
    std::vector<std::vector<double>> recent_queries;  // oldest..newest, H*d_h each
};

// Deterministic keep set of exactly K block ids for the heuristic baselines
// (ascending id order; these selections carry no sampling distribution).
std::vector<int> baseline_keep_set(ScorerKind kind, const ScorerParams& params,
                                   const RoundLayerInputs& inputs, const BlockPartition& partition,
                                   int keep_k, int n_heads, int d_head);

}  // namespace ngc
