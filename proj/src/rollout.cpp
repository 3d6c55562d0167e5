// SPDX-License-Identifier: Apache-2.0
#include "ngc/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "ngc/common.hpp"
#include "ngc/sampler.hpp"

namespace ngc {

int sample_token(const std::vector<double>& logits, double temperature, CounterRng& rng) {
    NGC_CHECK_ARG(temperature > 0.0, "temperature must be positive");
    const int n = static_cast<int>(logits.size());
    std::vector<double> p(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v / temperature);
    NGC_CHECK_STATE(std::isfinite(mx), "all logits are -inf");
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(logits[i] / temperature - mx);
        sum += p[i];
    }
    double u = rng.next_uniform() * sum;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += p[i];
        if (u <= acc) return i;
    }
    return n - 1;
}

namespace {

struct QueryRing {
    size_t capacity;
    std::vector<std::deque<std::vector<double>>> per_layer;

    QueryRing(int n_layers, size_t cap) : capacity(cap), per_layer(n_layers) {}
    void push(int layer, std::vector<double> q) {
        auto& dq = per_layer[layer];
        dq.push_back(std::move(q));
        if (dq.size() > capacity) dq.pop_front();
    }
    std::vector<std::vector<double>> snapshot(int layer) const {
        return {per_layer[layer].begin(), per_layer[layer].end()};
    }
};

void fire_round(const ModelParams&, const ModelConfig& cfg, const EvictionConfig& evict,
                const RolloutOptions& opt, CacheState& cache, Trajectory& traj,
                const QueryRing& ring) {
    cache.assert_uniform_alive();
    const long alive = cache.alive_count(0);
    const long cand = candidate_count(alive, evict);
    NGC_CHECK_STATE(cand >= evict.block_size, "no candidate blocks at round time");
    BlockPartition part = partition_blocks(cand, evict.block_size);
    const int K = keep_count(part.count(), opt.eviction_rate);
    const int round_idx = cache.rounds_fired;
    const int H = cfg.n_heads;
    const int dh = cfg.d_head();

    std::vector<RetentionRecord> layer_records;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& entries = cache.layers[l].entries;
        RoundLayerInputs inputs;
        inputs.cand_keys.reserve(cand);
        inputs.cand_global.reserve(cand);
        for (long i = 0; i < cand; ++i) {
            inputs.cand_keys.push_back(entries[i].key);
            inputs.cand_global.push_back(entries[i].global_index);
        }
        inputs.recent_queries = ring.snapshot(l);

        RetentionRecord rec;
        rec.round = round_idx;
        rec.layer = l;
        rec.alive_indices.reserve(alive);
        for (const auto& e : entries) rec.alive_indices.push_back(e.global_index);
        rec.block_sizes = part.sizes;

        if (opt.policy.kind == ScorerKind::NgcAttention) {
            KeyScores ks = ngc_key_scores_raw(inputs.recent_queries, inputs.cand_keys, H, dh,
                                              evict.score_window);
            std::vector<double> s = aggregate_blocks(ks, part);
            if (opt.policy.greedy) {
                rec.kept_blocks = greedy_topk(s, K);
                rec.logprob = sequence_logprob_value(s, rec.kept_blocks);
            } else {
                CounterRng rng(opt.seed, 0x9c0u ^ static_cast<uint64_t>(opt.traj_id),
                               static_cast<uint64_t>(l), static_cast<uint64_t>(round_idx));
                SubsetDraw draw = gumbel_topk(s, K, rng);
                rec.kept_blocks = draw.sigma;
                rec.logprob = draw.logprob;
            }
        } else {
            rec.kept_blocks =
                baseline_keep_set(opt.policy.kind, opt.policy.params, inputs, part, K, H, dh);
            rec.logprob = 0.0;
        }
        layer_records.push_back(std::move(rec));
    }
    for (int l = 0; l < cfg.n_layers; ++l)
        apply_retention(cache, l, part, layer_records[l].kept_blocks);
    cache.assert_uniform_alive();
    cache.rounds_fired += 1;
    cache.tokens_since_round = 0;
    traj.log.rounds.push_back(std::move(layer_records));
    traj.rounds_fired += 1;
}

}  // namespace

Trajectory run_rollout(const ModelParams& params, const ModelConfig& cfg,
                       const EvictionConfig& evict, const std::vector<int>& prompt,
                       const RolloutOptions& opt) {
    NGC_CHECK_ARG(!prompt.empty(), "empty prompt");
    const bool evicting = opt.eviction_rate > 0.0;
    if (evicting) {
        NGC_CHECK_ARG(opt.eviction_rate <= 1.0, "eviction rate out of range");
        NGC_CHECK_ARG(static_cast<int>(prompt.size()) < evict.cadence,
                      "prompt must be shorter than the eviction cadence");
    }

    Trajectory traj;
    traj.traj_id = opt.traj_id;
    traj.prompt_len = static_cast<int>(prompt.size());
    traj.log.n_layers = cfg.n_layers;

    CacheState cache = CacheState::make(cfg.n_layers);
    size_t ring_cap = static_cast<size_t>(
        std::max(evict.score_window, opt.policy.params.observation_window));
    QueryRing ring(cfg.n_layers, ring_cap);

    std::vector<double> logits;
    auto append = [&](int token) {
        DecodeResult step = decode_step(params, cfg, cache, token);
        for (int l = 0; l < cfg.n_layers; ++l) ring.push(l, std::move(step.queries[l]));
        logits = std::move(step.logits);
        traj.tokens.push_back(token);
        if (opt.record_logits) traj.logits.push_back(logits);
    };

    for (int t : prompt) {
        append(t);
        NGC_CHECK_STATE(!(evicting && should_fire(cache, evict)),
                        "eviction round fired during prefill");
    }

    int delim_pos = -1;
    bool force_meta_next = false;
    for (int step = 0; step < opt.max_new_tokens; ++step) {
        int token;
        if (force_meta_next) {
            token = opt.meta_token;
            force_meta_next = false;
        } else {
            CounterRng rng(opt.seed, 0x70cu ^ static_cast<uint64_t>(opt.traj_id),
                           static_cast<uint64_t>(traj.tokens.size()), 1);
            token = sample_token(logits, opt.temperature, rng);
        }
        append(token);
        if (opt.stop_delimiter >= 0) {
            if (delim_pos < 0 && token == opt.stop_delimiter)
                delim_pos = static_cast<int>(traj.tokens.size()) - 1;
            if (delim_pos >= 0 &&
                static_cast<int>(traj.tokens.size()) - 1 - delim_pos >= opt.stop_answer_len)
                break;
        }
        if (evicting && should_fire(cache, evict))
            fire_round(params, cfg, evict, opt, cache, traj, ring);
        if (opt.meta_token >= 0 && evicting) {
            // The next append would cross the cadence boundary: emit the
            // summary token deterministically so it lands right before the round.
            long next_total = cache.tokens_seen_total + 1;
            bool next_fires = (cache.rounds_fired == 0) ? (next_total >= evict.cadence)
                                                        : (cache.tokens_since_round + 1 >= evict.cadence);
            if (next_fires) force_meta_next = true;
        }
    }

    traj.peak_entries_per_layer = cache.peak_entries_per_layer;
    return traj;
}

}  // namespace ngc
