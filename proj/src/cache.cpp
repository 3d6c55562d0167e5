// SPDX-License-Identifier: Apache-2.0
#include "ngc/cache.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ngc/common.hpp"

namespace ngc {

void EvictionConfig::validate() const {
    NGC_CHECK_ARG(cadence >= 1, "cadence must be >= 1");
    NGC_CHECK_ARG(eviction_rate > 0.0 && eviction_rate <= 1.0, "eviction rate must be in (0,1]");
    NGC_CHECK_ARG(block_size >= 1 && block_size <= cadence, "block size must be in [1, cadence]");
    NGC_CHECK_ARG(score_window >= 1 && score_window < cadence, "score window must be in [1, cadence)");
    NGC_CHECK_ARG(cadence - score_window >= block_size,
                  "cadence must leave at least one full block of candidates past the window");
    NGC_CHECK_ARG(n_layers >= 1, "layer count must be >= 1");
}

void CacheState::assert_uniform_alive() const {
    for (size_t l = 1; l < layers.size(); ++l) {
        NGC_CHECK_STATE(layers[l].entries.size() == layers[0].entries.size(),
                        "per-layer alive counts diverged");
    }
}

int RetentionLog::tokens_at_round(int r) const {
    NGC_CHECK_ARG(r >= 0 && r < round_count(), "round index out of range");
    NGC_CHECK_STATE(!rounds[r].empty() && !rounds[r][0].alive_indices.empty(),
                    "empty retention record");
    return rounds[r][0].alive_indices.back() + 1;
}

bool should_fire(const CacheState& state, const EvictionConfig& cfg) {
    if (state.rounds_fired == 0) return state.tokens_seen_total >= cfg.cadence;
    return state.tokens_since_round >= cfg.cadence;
}

BlockPartition partition_blocks(long alive_count, int block_size) {
    NGC_CHECK_ARG(alive_count >= 1, "partition requires at least one entry");
    NGC_CHECK_ARG(block_size >= 1, "block size must be >= 1");
    BlockPartition p;
    long remaining = alive_count;
    while (remaining > 0) {
        int s = static_cast<int>(std::min<long>(block_size, remaining));
        p.sizes.push_back(s);
        remaining -= s;
    }
    return p;
}

int keep_count(int n_blocks, double eviction_rate) {
    NGC_CHECK_ARG(n_blocks >= 1, "keep_count requires at least one block");
    double kept = (1.0 - eviction_rate) * static_cast<double>(n_blocks);
    int k = static_cast<int>(std::floor(kept + 0.5));  // half-up
    return std::max(1, k);
}

long candidate_count(long alive, const EvictionConfig& cfg) {
    long past_window = alive - cfg.score_window;
    if (past_window < cfg.block_size) return 0;
    return past_window - (past_window % cfg.block_size);
}

void apply_retention(CacheState& state, int layer, const BlockPartition& partition,
                     const std::vector<int>& kept_blocks) {
    NGC_CHECK_ARG(layer >= 0 && layer < static_cast<int>(state.layers.size()),
                  "layer index out of range");
    auto& entries = state.layers[layer].entries;
    long covered = partition.total();
    NGC_CHECK_ARG(covered <= static_cast<long>(entries.size()),
                  "partition exceeds alive entries");
    std::vector<uint8_t> seen(partition.count(), 0);
    for (int b : kept_blocks) {
        NGC_CHECK_ARG(b >= 0 && b < partition.count(), "kept block id out of range");
        NGC_CHECK_ARG(!seen[b], "duplicate kept block id");
        seen[b] = 1;
    }
    std::vector<long> offsets(partition.count());
    long off = 0;
    for (int b = 0; b < partition.count(); ++b) {
        offsets[b] = off;
        off += partition.sizes[b];
    }
    std::vector<CacheEntry> next;
    next.reserve(entries.size());
    for (int b = 0; b < partition.count(); ++b) {
        if (!seen[b]) continue;
        for (int j = 0; j < partition.sizes[b]; ++j)
            next.push_back(std::move(entries[offsets[b] + j]));
    }
    // Excluded tail (score window + remainder) always survives.
    for (long i = covered; i < static_cast<long>(entries.size()); ++i)
        next.push_back(std::move(entries[i]));
    entries = std::move(next);
    for (size_t i = 1; i < entries.size(); ++i)
        NGC_CHECK_STATE(entries[i - 1].global_index < entries[i].global_index,
                        "alive list no longer sorted");
}

double steady_state_size(int cadence, double eviction_rate, int n_layers) {
    NGC_CHECK_DOMAIN(eviction_rate > 0.0 && eviction_rate <= 1.0,
                     "steady state undefined for eviction rate outside (0,1]");
    return static_cast<double>(n_layers) * static_cast<double>(cadence) / eviction_rate;
}

CacheTrajectory simulate_cache(long prompt_len, long completion_len, double eviction_rate,
                               int cadence, int block_size) {
    NGC_CHECK_ARG(eviction_rate >= 0.0 && eviction_rate <= 1.0, "eviction rate out of range");
    CacheTrajectory traj;
    long alive = 0;
    long total = 0;
    long since_round = 0;
    int rounds = 0;
    for (long t = 0; t < prompt_len + completion_len; ++t) {
        alive += 1;
        total += 1;
        since_round += 1;
        traj.alive_after_token.push_back(alive);
        traj.peak = std::max(traj.peak, alive);
        if (eviction_rate <= 0.0) continue;
        bool fire = (rounds == 0) ? (total >= cadence) : (since_round >= cadence);
        if (fire) {
            traj.pre_round_sizes.push_back(alive);
            BlockPartition p = partition_blocks(alive, block_size);
            int k = keep_count(p.count(), eviction_rate);
            alive = std::min<long>(alive, static_cast<long>(k) * block_size);
            rounds += 1;
            since_round = 0;
        }
    }
    return traj;
}

long peak_occupancy(long prompt_len, long completion_len, double eviction_rate, int cadence,
                    int block_size, int n_layers) {
    CacheTrajectory traj =
        simulate_cache(prompt_len, completion_len, eviction_rate, cadence, block_size);
    return traj.peak * static_cast<long>(n_layers);
}

// --- serialization -----------------------------------------------------------

std::string RetentionLog::to_jsonl() const {
    std::ostringstream os;
    for (const auto& round : rounds) {
        for (const auto& rec : round) {
            nlohmann::json j;
            j["layer"] = rec.layer;
            j["round"] = rec.round;
            j["alive_indices"] = rec.alive_indices;
            j["block_sizes"] = rec.block_sizes;
            j["kept_blocks"] = rec.kept_blocks;
            j["logprob"] = rec.logprob;
            os << j.dump() << "\n";
        }
    }
    return os.str();
}

RetentionLog RetentionLog::from_jsonl(const std::string& text) {
    RetentionLog log;
    std::istringstream is(text);
    std::string line;
    int max_layer = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        RetentionRecord rec;
        rec.layer = j.at("layer").get<int>();
        rec.round = j.at("round").get<int>();
        rec.alive_indices = j.at("alive_indices").get<std::vector<int>>();
        rec.block_sizes = j.at("block_sizes").get<std::vector<int>>();
        rec.kept_blocks = j.at("kept_blocks").get<std::vector<int>>();
        rec.logprob = j.at("logprob").get<double>();
        NGC_CHECK_STATE(std::isfinite(rec.logprob), "retention record logprob not finite");
        if (rec.round >= static_cast<int>(log.rounds.size())) log.rounds.resize(rec.round + 1);
        if (rec.layer >= static_cast<int>(log.rounds[rec.round].size()))
            log.rounds[rec.round].resize(rec.layer + 1);
        max_layer = std::max(max_layer, rec.layer);
        log.rounds[rec.round][rec.layer] = std::move(rec);
    }
    log.n_layers = max_layer + 1;
    for (const auto& round : log.rounds)
        NGC_CHECK_STATE(static_cast<int>(round.size()) == log.n_layers,
                        "retention log missing layer records");
    return log;
}

}  // namespace ngc
