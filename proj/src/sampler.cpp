// SPDX-License-Identifier: Apache-2.0
#include "ngc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ngc/common.hpp"

namespace ngc {

namespace {

int count_finite(const std::vector<double>& scores) {
    int n = 0;
    for (double s : scores)
        if (std::isfinite(s)) ++n;
    return n;
}

}  // namespace

SubsetDraw gumbel_topk(const std::vector<double>& scores, int k, CounterRng& rng) {
    NGC_CHECK_ARG(k >= 1, "k must be >= 1");
    NGC_CHECK_ARG(k <= count_finite(scores), "k exceeds number of finite-score blocks");
    const int n = static_cast<int>(scores.size());
    std::vector<std::pair<double, int>> perturbed;
    perturbed.reserve(n);
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i])) continue;  // sentinel blocks are never sampled
        perturbed.emplace_back(scores[i] + rng.next_gumbel(), i);
    }
    std::sort(perturbed.begin(), perturbed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    SubsetDraw draw;
    draw.sigma.reserve(k);
    for (int j = 0; j < k; ++j) draw.sigma.push_back(perturbed[j].second);
    draw.logprob = sequence_logprob_value(scores, draw.sigma);
    return draw;
}

Tensor sequence_logprob(const Tensor& scores, const std::vector<int>& sigma) {
    NGC_CHECK_ARG(scores.ndim() == 1, "scores must be 1-D");
    const int n = scores.shape()[0];
    std::vector<uint8_t> used(n, 0);
    for (int id : sigma) {
        NGC_CHECK_ARG(id >= 0 && id < n, "sigma id out of range");
        NGC_CHECK_ARG(!used[id], "sigma ids must be distinct");
        used[id] = 1;
    }

    Tensor total = Tensor::scalar(0.0);
    Tensor log_mass = logsumexp_lastdim(scores);  // Z_0
    NGC_CHECK_STATE(std::isfinite(log_mass.item()), "no probability mass among scores");
    std::vector<uint8_t> removed(n, 0);
    for (size_t j = 0; j < sigma.size(); ++j) {
        Tensor s_j = gather_rows(scores, {sigma[j]});
        total = add(total, sub(s_j, log_mass));
        removed[sigma[j]] = 1;
        if (j + 1 == sigma.size()) break;
        // Remaining mass: Z + log(1 - exp(s_j - Z)). Near-total cancellation
        // falls back to an exact logsumexp over the surviving ids.
        Tensor ratio = exp(sub(s_j, log_mass));
        if (ratio.item() > 1.0 - 1e-12) {
            std::vector<int> rest;
            for (int t = 0; t < n; ++t)
                if (!removed[t]) rest.push_back(t);
            NGC_CHECK_STATE(!rest.empty(), "sigma exhausted all blocks early");
            log_mass = logsumexp_lastdim(gather_rows(scores, rest));
        } else {
            log_mass = add(log_mass, log(sub(Tensor::scalar(1.0), ratio)));
        }
        NGC_CHECK_STATE(std::isfinite(log_mass.item()),
                        "remaining probability mass vanished with draws outstanding");
    }
    return total;
}

double sequence_logprob_value(const std::vector<double>& scores, const std::vector<int>& sigma) {
    Tensor s = Tensor::from({static_cast<int>(scores.size())}, scores);
    return sequence_logprob(s, sigma).item();
}

std::vector<int> greedy_topk(const std::vector<double>& scores, int k) {
    NGC_CHECK_ARG(k >= 1, "k must be >= 1");
    NGC_CHECK_ARG(k <= count_finite(scores), "k exceeds number of finite-score blocks");
    std::vector<int> ids;
    for (int i = 0; i < static_cast<int>(scores.size()); ++i)
        if (std::isfinite(scores[i])) ids.push_back(i);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    ids.resize(k);
    return ids;
}

}  // namespace ngc
