// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ngc/tensor.hpp"
#include "testutil.hpp"

using namespace ngc;
using test::finite_diff_grad;
using test::random_tensor;
using test::rel_err;

TEST_CASE("matmul identity and orthogonal cases") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(eye, a);
    CHECK(out.values() == a.values());

    Tensor row = Tensor::from({1, 2}, {1, 0});
    Tensor col = Tensor::from({2, 1}, {0, 1});
    CHECK(matmul(row, col).item() == 0.0);

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("matmul gradient of sum equals broadcast column sums") {
    Tensor a = random_tensor({3, 4}, 11);
    Tensor b = random_tensor({4, 2}, 12, false);
    auto eval = [&]() { return sum_all(matmul(a, b)).item(); };
    Tensor loss = sum_all(matmul(a, b));
    loss.backward();
    auto fd = finite_diff_grad(a, eval);
    CHECK(rel_err(a.grad(), fd) < 1e-6);
    // Analytic expectation: grad a[i][k] = sum_j b[k][j], same for every row i.
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 4; ++k) {
            double colsum = b.at(k, 0) + b.at(k, 1);
            CHECK(a.grad()[i * 4 + k] == doctest::Approx(colsum).epsilon(1e-9));
        }
}

TEST_CASE("softmax basics") {
    Tensor x = Tensor::from({2}, {0.0, 0.0});
    auto y = softmax_lastdim(x);
    CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor big = Tensor::from({2}, {1000.0, 0.0});
    auto yb = softmax_lastdim(big);
    CHECK(yb.at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(yb.at(1) == doctest::Approx(0.0).epsilon(1e-12));

    Tensor three = Tensor::from({3}, {std::log(2.0), 0.0, 0.0});
    auto y3 = softmax_lastdim(three);
    CHECK(y3.at(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y3.at(1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y3.at(2) == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(softmax_lastdim(Tensor::zeros({2, 0})), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one for large-magnitude inputs") {
    CounterRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(6);
        for (auto& x : v) x = (rng.next_uniform() * 2 - 1) * 1e4;
        auto y = softmax_lastdim(Tensor::from({6}, v));
        double s = 0;
        for (int i = 0; i < 6; ++i) s += y.at(i);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("logsumexp values") {
    CHECK(logsumexp_lastdim(Tensor::from({2}, {0.0, 0.0})).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(logsumexp_lastdim(Tensor::from({1}, {3.25})).item() ==
          doctest::Approx(3.25).epsilon(1e-15));
    Tensor x = Tensor::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(logsumexp_lastdim(x).item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("elementwise examples") {
    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor g = gather_rows(m, {1});
    CHECK(g.shape() == Shape{1, 2});
    CHECK(g.at(0, 0) == 3.0);
    CHECK(g.at(0, 1) == 4.0);

    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor loss = sum_all(mul(x, x));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));

    // rmsnorm of a constant vector with unit weight: x / sqrt(mean x^2)
    Tensor c = Tensor::from({1, 3}, {2.0, 2.0, 2.0});
    Tensor w = Tensor::full({3}, 1.0);
    Tensor r = rmsnorm(c, w);
    for (int j = 0; j < 3; ++j) CHECK(r.at(0, j) == doctest::Approx(1.0).epsilon(1e-9));
    Tensor cneg = Tensor::from({1, 2}, {-0.5, -0.5});
    Tensor r2 = rmsnorm(cneg, Tensor::full({2}, 1.0));
    CHECK(r2.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));

    CHECK_THROWS_AS(log(Tensor::from({1}, {-1.0})), std::domain_error);
    CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), std::domain_error);
}

TEST_CASE("backward basics") {
    Tensor w = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
    Tensor x = Tensor::from({3}, {3.0, 4.0, 5.0});
    Tensor loss = sum_all(mul(w, x));
    loss.backward();
    CHECK(w.grad() == x.values());

    // zero-weight path contributes zero grad
    Tensor a = Tensor::from({1}, {1.5}, true);
    Tensor zero = Tensor::scalar(0.0);
    Tensor l2 = sum_all(mul(a, zero));
    l2.backward();
    CHECK(a.grad()[0] == 0.0);

    CHECK_THROWS_AS(Tensor::zeros({2}, true).backward(), std::invalid_argument);
}

TEST_CASE("backward accumulates across calls until reset") {
    Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
    auto build = [&]() { return sum_all(mul(w, w)); };
    build().backward();
    std::vector<double> once = w.grad();
    build().backward();
    for (int i = 0; i < 2; ++i) CHECK(w.grad()[i] == doctest::Approx(2 * once[i]));
    w.zero_grad();
    build().backward();
    for (int i = 0; i < 2; ++i) CHECK(w.grad()[i] == doctest::Approx(once[i]));
}

TEST_CASE("two-layer composite matches finite differences") {
    Tensor w1 = random_tensor({4, 5}, 21);
    Tensor w2 = random_tensor({5, 3}, 22);
    Tensor x = random_tensor({2, 4}, 23, false);
    auto build = [&]() {
        Tensor h = gelu(matmul(x, w1));
        return mean_all(mul(matmul(h, w2), matmul(h, w2)));
    };
    build().backward();
    auto fd1 = finite_diff_grad(w1, [&]() { return build().item(); });
    auto fd2 = finite_diff_grad(w2, [&]() { return build().item(); });
    CHECK(rel_err(w1.grad(), fd1) < 1e-6);
    CHECK(rel_err(w2.grad(), fd2) < 1e-6);
}

TEST_CASE("shared subexpressions accumulate additively") {
    Tensor x = random_tensor({3}, 31);
    auto build = [&]() {
        Tensor s = mul(x, x);          // reused three times
        Tensor a = add(s, x);
        Tensor b = mul(s, add_const(x, 2.0));
        Tensor c = sub(s, scale(x, 0.5));
        return sum_all(add(add(a, b), c));
    };
    build().backward();
    auto fd = finite_diff_grad(x, [&]() { return build().item(); });
    CHECK(rel_err(x.grad(), fd) < 1e-6);
}

TEST_CASE("every registered op passes a finite-difference check") {
    Tensor a = random_tensor({3, 4}, 41);
    Tensor b = random_tensor({3, 4}, 42);
    Tensor sq = random_tensor({4, 4}, 43);
    Tensor pos = random_tensor({3, 4}, 44, true, 0.5, 1.5);
    Tensor w = random_tensor({4}, 45);
    std::vector<int> positions = {0, 5, 11};

    struct Case {
        std::string name;
        Tensor* leaf;
        std::function<Tensor()> build;
    };
    std::vector<Case> cases = {
        {"matmul", &a, [&]() { return matmul(a, sq); }},
        {"matmul_nt", &a, [&]() { return matmul_nt(a, b); }},
        {"add", &a, [&]() { return add(a, b); }},
        {"sub", &a, [&]() { return sub(a, b); }},
        {"mul", &a, [&]() { return mul(a, b); }},
        {"div", &a, [&]() { return div(a, pos); }},
        {"div_denom", &pos, [&]() { return div(b, pos); }},
        {"exp", &a, [&]() { return exp(a); }},
        {"log", &pos, [&]() { return log(pos); }},
        {"neg", &a, [&]() { return neg(a); }},
        {"scale", &a, [&]() { return scale(a, -1.7); }},
        {"add_const", &a, [&]() { return add_const(a, 0.3); }},
        {"mean_all", &a, [&]() { return mean_all(a); }},
        {"gather_rows", &a, [&]() { return gather_rows(a, {2, 0, 2}); }},
        {"gather_elements", &a, [&]() { return gather_elements(a, {1, 3, 0}); }},
        {"reshape", &a, [&]() { return reshape(a, {4, 3}); }},
        {"concat_cols", &a, [&]() { return concat_cols({a, b}); }},
        {"slice_cols", &a, [&]() { return slice_cols(a, 1, 2); }},
        {"rmsnorm_x", &a, [&]() { return rmsnorm(a, w); }},
        {"rmsnorm_w", &w, [&]() { return rmsnorm(a, w); }},
        {"softmax", &a, [&]() { return softmax_lastdim(a); }},
        {"logsumexp", &a, [&]() { return logsumexp_lastdim(a); }},
        {"gelu", &a, [&]() { return gelu(a); }},
        {"rope", &a, [&]() { return rope(a, positions); }},
        {"masked_fill", &a,
         [&]() { return masked_fill(a, {1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 0}, 0.25); }},
        {"block_mean", &w, [&]() { return block_mean(w, {2, 1}); }},
    };
    for (auto& c : cases) {
        CAPTURE(c.name);
        auto eval = [&]() {
            // Squared-sum readout makes every output element influence the loss
            // with a distinct weight pattern.
            Tensor y = c.build();
            return sum_all(mul(y, y)).item();
        };
        c.leaf->zero_grad();
        Tensor y = c.build();
        sum_all(mul(y, y)).backward();
        auto fd = finite_diff_grad(*c.leaf, eval);
        CHECK_MESSAGE(rel_err(c.leaf->grad(), fd) < 1e-6, c.name);
    }
}

TEST_CASE("non-finite forward values are rejected") {
    Tensor big = Tensor::from({1}, {800.0});
    CHECK_THROWS_AS(exp(big), std::runtime_error);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0}), std::invalid_argument);
    Tensor t = Tensor::zeros({2, 3}, true);
    CHECK(t.grad().size() == 6);
}
