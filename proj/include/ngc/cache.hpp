// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ngc {

// Grow-then-evict cache machinery. Between rounds the cache grows one entry per
// decoded token in every layer; each round keeps K blocks of contiguous entries
// per layer and permanently drops the rest. Per-layer decisions differ, but the
// round geometry (candidate count, block sizes, K) is shared, so alive counts
// stay equal across layers.
struct EvictionConfig {
    int cadence = 256;          // tokens per round (delta)
    double eviction_rate = 0.5; // fraction removed per round, in (0,1]
    int block_size = 32;        // tokens per block (b)
    int score_window = 5;       // recent queries used for scoring (w)
    int n_layers = 1;

    void validate() const;
};

struct CacheEntry {
    int global_index = 0;               // original token position, never re-indexed
    std::vector<double> key;            // H * d_head
    std::vector<double> value;          // H * d_head
};

struct LayerCache {
    std::vector<CacheEntry> entries;    // sorted by global_index
};

struct CacheState {
    std::vector<LayerCache> layers;
    long tokens_seen_total = 0;
    long tokens_since_round = 0;
    int rounds_fired = 0;
    long peak_entries_per_layer = 0;

    static CacheState make(int n_layers) {
        CacheState s;
        s.layers.resize(n_layers);
        return s;
    }
    long alive_count(int layer) const { return static_cast<long>(layers[layer].entries.size()); }
    void assert_uniform_alive() const;  // equal alive counts across layers
};

// Contiguous blocks over the current candidate order; all layers of a round use
// the same sizes.
struct BlockPartition {
    std::vector<int> sizes;
    int count() const { return static_cast<int>(sizes.size()); }
    long total() const {
        long t = 0;
        for (int s : sizes) t += s;
        return t;
    }
};

// Per-(round, layer) retention record; enough to rebuild replay masks and to
// recompute eviction log-probabilities.
struct RetentionRecord {
    int round = 0;
    int layer = 0;
    std::vector<int> alive_indices;  // global indices alive at round start
    std::vector<int> block_sizes;    // partition over the leading candidates
    std::vector<int> kept_blocks;    // ordered kept-block id sequence (sigma)
    double logprob = 0.0;
};

struct RetentionLog {
    int n_layers = 0;
    std::vector<std::vector<RetentionRecord>> rounds;  // [round][layer]

    int round_count() const { return static_cast<int>(rounds.size()); }
    // Number of tokens that existed when round r fired. The newest token always
    // survives to the round that follows its arrival, so this is derivable from
    // the recorded alive set.
    int tokens_at_round(int r) const;

    std::string to_jsonl() const;
    static RetentionLog from_jsonl(const std::string& text);
};

// True iff an eviction round fires now. The first round fires once the total
// cache (prefill included) reaches cadence; later rounds fire every cadence
// tokens after the previous round.
bool should_fire(const CacheState& state, const EvictionConfig& cfg);

// ceil(T/b) contiguous blocks, all of size b except possibly the last.
BlockPartition partition_blocks(long alive_count, int block_size);

// K = max(1, round-half-up((1 - eviction_rate) * n_blocks)).
int keep_count(int n_blocks, double eviction_rate);

// Candidate prefix for a round: everything except the trailing exclusion zone
// (the score window plus the ragged remainder, so scored blocks are all full).
long candidate_count(long alive, const EvictionConfig& cfg);

// Replaces layer `layer`'s alive list with the kept blocks (in global order)
// plus the excluded tail; appends nothing to any other layer.
void apply_retention(CacheState& state, int layer, const BlockPartition& partition,
                     const std::vector<int>& kept_blocks);

// Analytic fixed point of the pre-round cache size recursion: L * cadence / rate.
double steady_state_size(int cadence, double eviction_rate, int n_layers);

// Idealized grow-then-evict count simulation (no score window; kept entries
// counted as K full blocks). Returns per-layer alive count over time.
struct CacheTrajectory {
    std::vector<long> alive_after_token;   // per appended token, pre-eviction
    std::vector<long> pre_round_sizes;     // alive count each time a round fired
    long peak = 0;                         // max per-layer alive at any point
};
CacheTrajectory simulate_cache(long prompt_len, long completion_len, double eviction_rate,
                               int cadence, int block_size);

// Maximum total entries (all layers) held at any point during generation.
long peak_occupancy(long prompt_len, long completion_len, double eviction_rate, int cadence,
                    int block_size, int n_layers);

}  // namespace ngc
