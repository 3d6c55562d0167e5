// SPDX-License-Identifier: Apache-2.0
#include "ngc/replay.hpp"

#include <algorithm>
#include <set>

#include "ngc/common.hpp"
#include "ngc/sampler.hpp"
#include "ngc/scorers.hpp"

namespace ngc {

namespace {

std::string round_tag(int layer, int round) {
    return " (layer " + std::to_string(layer) + ", round " + std::to_string(round) + ")";
}

// Survivors of a record: entries of kept blocks plus the excluded tail beyond
// the partition (score window and remainder, which are never candidates).
std::vector<int> kept_set(const RetentionRecord& rec) {
    std::vector<long> offsets(rec.block_sizes.size());
    long off = 0;
    for (size_t b = 0; b < rec.block_sizes.size(); ++b) {
        offsets[b] = off;
        off += rec.block_sizes[b];
    }
    NGC_CHECK_STATE(off <= static_cast<long>(rec.alive_indices.size()),
                    "partition exceeds alive set" + round_tag(rec.layer, rec.round));
    std::vector<int> kept;
    for (int b : rec.kept_blocks) {
        NGC_CHECK_STATE(b >= 0 && b < static_cast<int>(rec.block_sizes.size()),
                        "kept block out of range" + round_tag(rec.layer, rec.round));
        for (int j = 0; j < rec.block_sizes[b]; ++j)
            kept.push_back(rec.alive_indices[offsets[b] + j]);
    }
    for (long i = off; i < static_cast<long>(rec.alive_indices.size()); ++i)
        kept.push_back(rec.alive_indices[i]);
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace

ReplayMaskSet build_replay_masks(const RetentionLog& log, int seq_len, int n_layers,
                                 int cadence) {
    NGC_CHECK_ARG(seq_len >= 1, "sequence length must be >= 1");
    ReplayMaskSet masks;
    masks.seq_len = seq_len;
    masks.layers.assign(n_layers,
                        std::vector<uint8_t>(static_cast<long>(seq_len) * seq_len, 0));
    if (log.round_count() > 0)
        NGC_CHECK_ARG(static_cast<int>(log.rounds[0].size()) == n_layers,
                      "retention log layer count mismatch");

    std::vector<int> boundaries;
    for (int r = 0; r < log.round_count(); ++r) {
        int p = log.tokens_at_round(r);
        NGC_CHECK_STATE(p >= 1 && p <= seq_len, "round fired beyond the sequence" + round_tag(0, r));
        if (!boundaries.empty())
            NGC_CHECK_STATE(p > boundaries.back(), "round boundaries not increasing" + round_tag(0, r));
        if (cadence > 0) {
            int expected = boundaries.empty() ? cadence : boundaries.back() + cadence;
            NGC_CHECK_STATE(p == expected, "round off the cadence boundary" + round_tag(0, r));
        }
        boundaries.push_back(p);
    }

    for (int l = 0; l < n_layers; ++l) {
        // Segment 0 is plain causal.
        int seg_start = 0;
        int seg_end = boundaries.empty() ? seq_len : boundaries[0];
        for (int q = seg_start; q < seg_end; ++q)
            for (int k = 0; k <= q; ++k) masks.set(l, q, k, true);

        std::vector<int> alive(seg_end);
        for (int i = 0; i < seg_end; ++i) alive[i] = i;

        for (int r = 0; r < log.round_count(); ++r) {
            const RetentionRecord& rec = log.rounds[r][l];
            NGC_CHECK_STATE(rec.alive_indices == alive,
                            "recorded alive set disagrees with reconstruction" + round_tag(l, r));
            std::vector<int> kept = kept_set(rec);
            seg_start = boundaries[r];
            seg_end = (r + 1 < log.round_count()) ? boundaries[r + 1] : seq_len;
            for (int q = seg_start; q < seg_end; ++q) {
                for (int k : kept) masks.set(l, q, k, true);
                for (int k = seg_start; k <= q; ++k) masks.set(l, q, k, true);
            }
            // Alive set entering the next round: kept survivors plus this segment.
            alive = std::move(kept);
            for (int i = seg_start; i < seg_end; ++i) alive.push_back(i);
            std::sort(alive.begin(), alive.end());
        }
    }
    masks.validate();
    return masks;
}

ReplayResult replay_forward(const ModelParams& params, const ModelConfig& cfg,
                            const EvictionConfig& evict, const std::vector<int>& tokens,
                            int prompt_len, const RetentionLog& log, const ReplayMaskSet& masks) {
    const int T = static_cast<int>(tokens.size());
    NGC_CHECK_ARG(prompt_len >= 1 && prompt_len <= T, "prompt length out of range");

    ReplayResult res;
    MaskedForwardResult fwd = forward_masked(params, cfg, tokens, masks);
    res.logits = fwd.logits;

    // Position t-1 scores token t; completion tokens only.
    std::vector<int> rows, targets;
    for (int t = prompt_len; t < T; ++t) {
        rows.push_back(t - 1);
        targets.push_back(tokens[t]);
    }
    if (!rows.empty()) {
        Tensor picked = gather_rows(res.logits, rows);
        res.token_logprobs = sub(gather_elements(picked, targets), logsumexp_lastdim(picked));
    } else {
        res.token_logprobs = Tensor::zeros({0});
    }

    const int w = evict.score_window;
    for (int r = 0; r < log.round_count(); ++r) {
        const int p = log.tokens_at_round(r);
        NGC_CHECK_STATE(p >= w, "round fired before the score window filled" + round_tag(0, r));
        std::vector<int> window_rows;
        for (int i = p - w; i < p; ++i) window_rows.push_back(i);

        std::vector<Tensor> round_lps;
        std::vector<double> round_recorded;
        for (int l = 0; l < cfg.n_layers; ++l) {
            const RetentionRecord& rec = log.rounds[r][l];
            BlockPartition part;
            part.sizes = rec.block_sizes;
            long covered = part.total();
            NGC_CHECK_STATE(covered <= static_cast<long>(rec.alive_indices.size()),
                            "partition exceeds recorded alive set" + round_tag(l, r));
            std::vector<int> cand(rec.alive_indices.begin(), rec.alive_indices.begin() + covered);
            for (int g : cand)
                NGC_CHECK_STATE(g >= 0 && g < p,
                                "candidate beyond the round boundary" + round_tag(l, r));

            std::vector<Tensor> q_sel, k_sel;
            for (int h = 0; h < cfg.n_heads; ++h) {
                q_sel.push_back(gather_rows(fwd.traces[l].q_heads[h], window_rows));
                k_sel.push_back(gather_rows(fwd.traces[l].k_heads[h], cand));
            }
            Tensor psi = ngc_key_scores(q_sel, k_sel);
            Tensor block_scores = aggregate_blocks_t(psi, part);
            round_lps.push_back(sequence_logprob(block_scores, rec.kept_blocks));
            round_recorded.push_back(rec.logprob);
        }
        res.eviction_logprobs.push_back(std::move(round_lps));
        res.recorded_logprobs.push_back(std::move(round_recorded));
    }
    return res;
}

}  // namespace ngc
