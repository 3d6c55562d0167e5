// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ngc/cache.hpp"
#include "ngc/mask.hpp"
#include "ngc/model.hpp"
#include "ngc/tensor.hpp"

namespace ngc {

// Rebuilds the per-layer visibility masks a rollout induced. Tokens are
// segmented at the recorded round boundaries; rows in a segment see the kept
// set from the previous round plus causal visibility within the segment.
// `cadence` > 0 additionally checks that rounds sit on cadence boundaries.
ReplayMaskSet build_replay_masks(const RetentionLog& log, int seq_len, int n_layers,
                                 int cadence = 0);

struct ReplayResult {
    Tensor logits;           // T x vocab, on the graph
    Tensor token_logprobs;   // [T - prompt_len], log pi(token_t | visible context)
    // Recomputed from the live trace so gradients reach the parameters.
    std::vector<std::vector<Tensor>> eviction_logprobs;   // [round][layer], scalars
    std::vector<std::vector<double>> recorded_logprobs;   // rollout-time values (checks only)
};

// One masked forward pass that yields (a) the sampled tokens' log-probs and
// (b) each round's eviction log-prob recomputed from boundary queries and
// candidate keys gathered off the live trace.
ReplayResult replay_forward(const ModelParams& params, const ModelConfig& cfg,
                            const EvictionConfig& evict, const std::vector<int>& tokens,
                            int prompt_len, const RetentionLog& log, const ReplayMaskSet& masks);

}  // namespace ngc
