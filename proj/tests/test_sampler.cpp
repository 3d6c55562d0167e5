// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "ngc/sampler.hpp"
#include "testutil.hpp"

using namespace ngc;
using test::finite_diff_grad;
using test::random_tensor;
using test::rel_err;

namespace {

// Enumeration oracle: every ordered k-sequence of distinct ids.
void enumerate_sequences(int n, int k, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
    if (static_cast<int>(cur.size()) == k) {
        out.push_back(cur);
        return;
    }
    for (int i = 0; i < n; ++i) {
        bool used = false;
        for (int c : cur) used |= (c == i);
        if (used) continue;
        cur.push_back(i);
        enumerate_sequences(n, k, cur, out);
        cur.pop_back();
    }
}

std::vector<std::vector<int>> all_sequences(int n, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    enumerate_sequences(n, k, cur, out);
    return out;
}

}  // namespace

TEST_CASE("sequence_logprob hand fixtures") {
    // uniform scores: p(sigma) = 1/3 * 1/2
    std::vector<double> uniform = {0.0, 0.0, 0.0};
    CHECK(sequence_logprob_value(uniform, {0, 1}) ==
          doctest::Approx(-std::log(6.0)).epsilon(1e-12));

    // s = (ln2, 0): p(0 then 1) = 2/3, p(1 then 0) = 1/3
    std::vector<double> two = {std::log(2.0), 0.0};
    CHECK(sequence_logprob_value(two, {0, 1}) ==
          doctest::Approx(std::log(2.0 / 3.0)).epsilon(1e-12));
    CHECK(sequence_logprob_value(two, {1, 0}) ==
          doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("ordered sequence probabilities sum to one (enumeration oracle)") {
    CounterRng rng(17);
    for (int n = 1; n <= 6; ++n) {
        for (int k = 1; k <= std::min(n, 3); ++k) {
            std::vector<double> s(n);
            for (auto& v : s) v = (rng.next_uniform() * 2 - 1) * 3.0;
            double total = 0.0;
            for (const auto& sigma : all_sequences(n, k))
                total += std::exp(sequence_logprob_value(s, sigma));
            CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("sequence_logprob is finite across wide score ranges") {
    std::vector<double> s = {-30.0, 30.0, 0.0, -30.0, 30.0};
    for (const auto& sigma : all_sequences(5, 3)) {
        double lp = sequence_logprob_value(s, sigma);
        CHECK(std::isfinite(lp));
        CHECK(lp <= 1e-12);
    }
}

TEST_CASE("sequence_logprob gradient matches finite differences") {
    Tensor s = random_tensor({5}, 7, true, -2.0, 2.0);
    std::vector<int> sigma = {3, 0, 4};
    auto eval = [&]() { return sequence_logprob(s, sigma).item(); };
    sequence_logprob(s, sigma).backward();
    auto fd = finite_diff_grad(s, eval);
    CHECK(rel_err(s.grad(), fd) < 1e-6);
}

TEST_CASE("adding a constant to all scores leaves the logprob unchanged") {
    CounterRng rng(23);
    std::vector<double> s(4);
    for (auto& v : s) v = rng.next_uniform() * 4 - 2;
    std::vector<double> shifted = s;
    for (auto& v : shifted) v += 7.5;
    for (const auto& sigma : all_sequences(4, 2)) {
        CHECK(sequence_logprob_value(s, sigma) ==
              doctest::Approx(sequence_logprob_value(shifted, sigma)).epsilon(1e-9));
    }
}

TEST_CASE("gumbel_topk basic properties") {
    std::vector<double> s = {0.3, -0.2, 0.9};
    CounterRng rng(41);

    SUBCASE("k equals n gives a permutation") {
        SubsetDraw d = gumbel_topk(s, 3, rng);
        std::vector<int> sorted = d.sigma;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<int>{0, 1, 2});
    }
    SUBCASE("a dominant score is always drawn first") {
        std::vector<double> dom = {0.0, 50.0, 0.0};
        for (int i = 0; i < 200; ++i) {
            CounterRng r(41, i);
            SubsetDraw d = gumbel_topk(dom, 2, r);
            CHECK(d.sigma[0] == 1);
        }
    }
    SUBCASE("k beyond finite scores is rejected") {
        std::vector<double> with_sentinel = {0.0, -std::numeric_limits<double>::infinity()};
        CHECK_THROWS_AS(gumbel_topk(with_sentinel, 2, rng), std::invalid_argument);
        CHECK_NOTHROW(gumbel_topk(with_sentinel, 1, rng));
    }
}

TEST_CASE("uniform scores: every ordered pair near 1/6 over 60k draws") {
    std::vector<double> s = {0.0, 0.0, 0.0};
    std::map<std::pair<int, int>, long> counts;
    const long n_draws = 60000;
    for (long i = 0; i < n_draws; ++i) {
        CounterRng rng(101, i);
        SubsetDraw d = gumbel_topk(s, 2, rng);
        counts[{d.sigma[0], d.sigma[1]}] += 1;
    }
    CHECK(counts.size() == 6);
    const double p = 1.0 / 6.0;
    const double sigma3 = 3.0 * std::sqrt(p * (1 - p) / n_draws);
    for (const auto& [pair, c] : counts) {
        double freq = static_cast<double>(c) / n_draws;
        CHECK(std::fabs(freq - p) <= sigma3);
    }
}

TEST_CASE("empirical frequencies match exp(sequence_logprob)") {
    std::vector<double> s = {0.8, -0.5, 0.1, 0.4};
    const int k = 2;
    std::map<std::vector<int>, long> counts;
    const long n_draws = 40000;
    for (long i = 0; i < n_draws; ++i) {
        CounterRng rng(7, i);
        counts[gumbel_topk(s, k, rng).sigma] += 1;
    }
    double chi2 = 0.0;
    int cells = 0;
    for (const auto& sigma : all_sequences(4, k)) {
        double expected = std::exp(sequence_logprob_value(s, sigma)) * n_draws;
        double observed = static_cast<double>(counts[sigma]);
        chi2 += (observed - expected) * (observed - expected) / expected;
        ++cells;
    }
    CHECK(test::chi2_sf(chi2, cells - 1) > 0.01);
}

TEST_CASE("greedy_topk") {
    CHECK(greedy_topk({3.0, 1.0, 2.0}, 2) == std::vector<int>{0, 2});
    CHECK(greedy_topk({1.0, 1.0, 1.0}, 2) == std::vector<int>{0, 1});  // tie: lower id wins

    // Greedy choice equals the mode of the sampled first element.
    std::vector<double> s = {0.2, 1.1, -0.3, 0.8};
    std::map<int, long> first_counts;
    for (long i = 0; i < 20000; ++i) {
        CounterRng rng(55, i);
        first_counts[gumbel_topk(s, 2, rng).sigma[0]] += 1;
    }
    int mode = -1;
    long best = -1;
    for (auto [id, c] : first_counts)
        if (c > best) {
            best = c;
            mode = id;
        }
    CHECK(mode == greedy_topk(s, 1)[0]);
}
