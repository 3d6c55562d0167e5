// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ngc/cache.hpp"
#include "ngc/model.hpp"
#include "ngc/rng.hpp"
#include "ngc/scorers.hpp"

namespace ngc {

// One sampled generation with its eviction history: the RL sample unit.
struct Trajectory {
    std::vector<int> tokens;  // prompt + completion
    int prompt_len = 0;
    RetentionLog log;
    double reward = 0.0;
    long peak_entries_per_layer = 0;
    int rounds_fired = 0;
    long traj_id = 0;
    std::vector<std::vector<double>> logits;  // per position, when recorded

    int total_len() const { return static_cast<int>(tokens.size()); }
    int completion_len() const { return total_len() - prompt_len; }
};

struct EvictionPolicy {
    ScorerKind kind = ScorerKind::NgcAttention;
    ScorerParams params;
    bool greedy = false;  // evaluation: deterministic top-k instead of sampling
};

struct RolloutOptions {
    EvictionPolicy policy;
    double eviction_rate = 0.0;  // 0 disables rounds entirely
    double temperature = 1.0;
    int max_new_tokens = 64;
    // Generation stops once `stop_answer_len` tokens follow the first
    // delimiter occurrence; -1 disables early stopping.
    int stop_delimiter = -1;
    int stop_answer_len = 1;
    int meta_token = -1;  // forced summary token right before a round; -1 off
    uint64_t seed = 0;
    long traj_id = 0;
    bool record_logits = false;  // keep per-position logits on the trajectory
};

// Incremental decode with grow-then-evict rounds. Token draws are keyed by
// (seed, traj, position); eviction draws by (seed, traj, layer, round), so
// trajectories are reproducible in any execution order.
Trajectory run_rollout(const ModelParams& params, const ModelConfig& cfg,
                       const EvictionConfig& evict, const std::vector<int>& prompt,
                       const RolloutOptions& opt);

// Temperature sample from raw logits; -inf entries are never drawn.
int sample_token(const std::vector<double>& logits, double temperature, CounterRng& rng);

}  // namespace ngc
