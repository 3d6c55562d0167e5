// SPDX-License-Identifier: Apache-2.0
#include "ngc/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ngc/common.hpp"
#include "ngc/sampler.hpp"

namespace ngc {

ScorerKind scorer_from_string(const std::string& name) {
    if (name == "NgcAttention") return ScorerKind::NgcAttention;
    if (name == "StreamingWindow") return ScorerKind::StreamingWindow;
    if (name == "SnapAttention") return ScorerKind::SnapAttention;
    if (name == "KeyNorm") return ScorerKind::KeyNorm;
    if (name == "KeyDiversity") return ScorerKind::KeyDiversity;
    throw std::invalid_argument("unknown scorer: " + name);
}

std::string scorer_to_string(ScorerKind kind) {
    switch (kind) {
        case ScorerKind::NgcAttention: return "NgcAttention";
        case ScorerKind::StreamingWindow: return "StreamingWindow";
        case ScorerKind::SnapAttention: return "SnapAttention";
        case ScorerKind::KeyNorm: return "KeyNorm";
        case ScorerKind::KeyDiversity: return "KeyDiversity";
    }
    throw std::invalid_argument("unknown scorer kind");
}

Tensor ngc_key_scores(const std::vector<Tensor>& q_heads, const std::vector<Tensor>& k_heads,
                      const std::vector<uint8_t>* valid) {
    NGC_CHECK_ARG(!q_heads.empty() && q_heads.size() == k_heads.size(),
                  "query/key head count mismatch");
    const int H = static_cast<int>(q_heads.size());
    const int w = q_heads[0].shape()[0];
    const int dh = q_heads[0].shape()[1];
    const int C = k_heads[0].shape()[0];
    NGC_CHECK_ARG(C >= 1, "zero candidate keys");
    if (valid) {
        NGC_CHECK_ARG(static_cast<int>(valid->size()) == C, "validity mask length mismatch");
        bool any = false;
        for (uint8_t m : *valid) any = any || m;
        NGC_CHECK_ARG(any, "zero valid candidate keys");
    }
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<uint8_t> row_mask;
    if (valid) {
        row_mask.resize(static_cast<long>(w) * C);
        for (int r = 0; r < w; ++r)
            std::copy(valid->begin(), valid->end(), row_mask.begin() + static_cast<long>(r) * C);
    }

    Tensor ones_row = Tensor::full({1, w}, 1.0);
    Tensor total;
    for (int h = 0; h < H; ++h) {
        NGC_CHECK_ARG(k_heads[h].shape()[0] == C && q_heads[h].shape()[0] == w,
                      "inconsistent head shapes");
        Tensor scores = scale(matmul_nt(q_heads[h], k_heads[h]), inv_sqrt_dh);
        if (valid) scores = masked_fill(scores, row_mask, kMaskedScore);
        Tensor attn = softmax_lastdim(scores);       // w x C
        Tensor col_sum = matmul(ones_row, attn);     // 1 x C
        total = total.defined() ? add(total, col_sum) : col_sum;
    }
    Tensor psi = reshape(scale(total, 1.0 / (static_cast<double>(H) * w)), {C});
    if (valid) {
        // Masked-out keys carry exact zeros already; re-masking keeps the
        // invariant under later arithmetic.
        psi = masked_fill(psi, *valid, 0.0);
    }
    return psi;
}

KeyScores ngc_key_scores_raw(const std::vector<std::vector<double>>& recent_queries,
                             const std::vector<std::vector<double>>& cand_keys, int n_heads,
                             int d_head, int w) {
    NGC_CHECK_ARG(static_cast<int>(recent_queries.size()) >= w, "not enough recent queries");
    NGC_CHECK_ARG(!cand_keys.empty(), "zero candidate keys");
    const int C = static_cast<int>(cand_keys.size());
    std::vector<Tensor> q_heads, k_heads;
    for (int h = 0; h < n_heads; ++h) {
        std::vector<double> qv(static_cast<long>(w) * d_head);
        for (int r = 0; r < w; ++r) {
            const auto& src = recent_queries[recent_queries.size() - w + r];
            std::copy(src.begin() + static_cast<long>(h) * d_head,
                      src.begin() + static_cast<long>(h + 1) * d_head,
                      qv.begin() + static_cast<long>(r) * d_head);
        }
        std::vector<double> kv(static_cast<long>(C) * d_head);
        for (int c = 0; c < C; ++c)
            std::copy(cand_keys[c].begin() + static_cast<long>(h) * d_head,
                      cand_keys[c].begin() + static_cast<long>(h + 1) * d_head,
                      kv.begin() + static_cast<long>(c) * d_head);
        q_heads.push_back(Tensor::from({w, d_head}, std::move(qv)));
        k_heads.push_back(Tensor::from({C, d_head}, std::move(kv)));
    }
    KeyScores out;
    out.psi = ngc_key_scores(q_heads, k_heads).values();
    out.valid.assign(C, 1);
    return out;
}

std::vector<double> aggregate_blocks(const KeyScores& scores, const BlockPartition& partition) {
    NGC_CHECK_ARG(scores.psi.size() == scores.valid.size(), "psi/validity length mismatch");
    NGC_CHECK_ARG(partition.total() <= static_cast<long>(scores.psi.size()),
                  "partition exceeds scored keys");
    std::vector<double> out(partition.count());
    long off = 0;
    for (int b = 0; b < partition.count(); ++b) {
        double sum = 0.0;
        long n_valid = 0;
        for (int j = 0; j < partition.sizes[b]; ++j) {
            if (scores.valid[off + j]) {
                sum += scores.psi[off + j];
                n_valid += 1;
            }
        }
        out[b] = n_valid > 0 ? sum / static_cast<double>(n_valid)
                             : -std::numeric_limits<double>::infinity();
        off += partition.sizes[b];
    }
    return out;
}

Tensor aggregate_blocks_t(const Tensor& psi, const BlockPartition& partition) {
    return block_mean(psi, partition.sizes);
}

// --- heuristic baselines -------------------------------------------------------

namespace {

std::vector<long> block_offsets(const BlockPartition& p) {
    std::vector<long> off(p.count());
    long o = 0;
    for (int b = 0; b < p.count(); ++b) {
        off[b] = o;
        o += p.sizes[b];
    }
    return off;
}

std::vector<int> keep_streaming(const ScorerParams& params, const RoundLayerInputs& inputs,
                                const BlockPartition& partition, int keep_k) {
    const auto off = block_offsets(partition);
    std::vector<int> sinks;
    for (int b = 0; b < partition.count(); ++b) {
        for (int j = 0; j < partition.sizes[b]; ++j) {
            if (inputs.cand_global[off[b] + j] < params.n_sink_tokens) {
                sinks.push_back(b);
                break;
            }
        }
    }
    std::vector<uint8_t> chosen(partition.count(), 0);
    std::vector<int> kept;
    for (int b : sinks) {
        if (static_cast<int>(kept.size()) >= keep_k) break;
        chosen[b] = 1;
        kept.push_back(b);
    }
    // Fill with the most recent blocks; the oldest middle is dropped first.
    for (int b = partition.count() - 1; b >= 0 && static_cast<int>(kept.size()) < keep_k; --b) {
        if (!chosen[b]) {
            chosen[b] = 1;
            kept.push_back(b);
        }
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

std::vector<double> block_mean_keys(const RoundLayerInputs& inputs,
                                    const BlockPartition& partition, int b,
                                    const std::vector<long>& off) {
    const size_t dim = inputs.cand_keys[0].size();
    std::vector<double> mean(dim, 0.0);
    for (int j = 0; j < partition.sizes[b]; ++j) {
        const auto& k = inputs.cand_keys[off[b] + j];
        for (size_t c = 0; c < dim; ++c) mean[c] += k[c];
    }
    for (double& v : mean) v /= static_cast<double>(partition.sizes[b]);
    return mean;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0.0 ? dot / denom : 0.0;
}

}  // namespace

std::vector<int> baseline_keep_set(ScorerKind kind, const ScorerParams& params,
                                   const RoundLayerInputs& inputs, const BlockPartition& partition,
                                   int keep_k, int n_heads, int d_head) {
    NGC_CHECK_ARG(keep_k >= 1 && keep_k <= partition.count(), "keep count exceeds block count");
    NGC_CHECK_ARG(partition.total() == static_cast<long>(inputs.cand_keys.size()),
                  "partition does not cover the candidates");
    const auto off = block_offsets(partition);
    std::vector<double> score(partition.count());
    switch (kind) {
        case ScorerKind::StreamingWindow:
            return keep_streaming(params, inputs, partition, keep_k);
        case ScorerKind::SnapAttention: {
            KeyScores ks = ngc_key_scores_raw(inputs.recent_queries, inputs.cand_keys, n_heads,
                                              d_head, params.observation_window);
            score = aggregate_blocks(ks, partition);
            break;
        }
        case ScorerKind::KeyNorm: {
            for (int b = 0; b < partition.count(); ++b) {
                double sum = 0.0;
                for (int j = 0; j < partition.sizes[b]; ++j) {
                    double n2 = 0.0;
                    for (double v : inputs.cand_keys[off[b] + j]) n2 += v * v;
                    sum += std::sqrt(n2);
                }
                score[b] = -sum / static_cast<double>(partition.sizes[b]);
            }
            break;
        }
        case ScorerKind::KeyDiversity: {
            std::vector<std::vector<double>> means(partition.count());
            for (int b = 0; b < partition.count(); ++b)
                means[b] = block_mean_keys(inputs, partition, b, off);
            for (int b = 0; b < partition.count(); ++b) {
                double max_sim = -std::numeric_limits<double>::infinity();
                for (int b2 = 0; b2 < partition.count(); ++b2) {
                    if (b2 == b) continue;
                    max_sim = std::max(max_sim, cosine(means[b], means[b2]));
                }
                score[b] = partition.count() > 1 ? -max_sim : 0.0;
            }
            break;
        }
        case ScorerKind::NgcAttention:
            throw std::invalid_argument("NgcAttention is sampled/greedy, not a heuristic keep set");
    }
    std::vector<int> kept = greedy_topk(score, keep_k);
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace ngc
