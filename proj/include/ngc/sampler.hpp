// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ngc/rng.hpp"
#include "ngc/tensor.hpp"

namespace ngc {

// Ordered kept-block subset with its exact log-probability under sampling
// without replacement.
struct SubsetDraw {
    std::vector<int> sigma;  // block ids, descending perturbed score
    double logprob = 0.0;
};

// Samples k blocks by perturbing each finite score with i.i.d. Gumbel(0,1)
// noise and keeping the k largest perturbed values, in descending order. The
// noise itself is not differentiated through; gradients reach the scores only
// via sequence_logprob.
SubsetDraw gumbel_topk(const std::vector<double>& scores, int k, CounterRng& rng);

// log p(sigma | s) for ordered sampling without replacement:
//   sum_j [ s_{sigma_j} - log sum_{t not in sigma_{<j}} exp(s_t) ]
// The running partition function uses stable log-subtraction with an exact
// recomputation fallback when nearly all mass has been removed. Differentiable
// with respect to s.
Tensor sequence_logprob(const Tensor& scores, const std::vector<int>& sigma);
double sequence_logprob_value(const std::vector<double>& scores, const std::vector<int>& sigma);

// Deterministic evaluation-time selection: the k highest scores, descending;
// ties go to the lower block id.
std::vector<int> greedy_topk(const std::vector<double>& scores, int k);

}  // namespace ngc
