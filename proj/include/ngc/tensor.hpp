// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ngc {

using Shape = std::vector<int>;

long shape_numel(const Shape& s);

// Dense 64-bit tensor participating in a reverse-mode graph. A Tensor is a cheap
// handle to a shared node; ops build new nodes that keep their parents alive.
// Graphs are acyclic by construction and single-threaded per graph; leaves
// (parameters) may be shared read-only across threads.
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;  // allocated lazily during backward
        bool requires_grad = false;
        bool is_leaf = true;
        std::vector<std::shared_ptr<Node>> parents;
        // Reads this->grad, accumulates into parents' grad.
        std::function<void(Node&)> backward_fn;
    };

    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    long numel() const;
    const std::vector<double>& values() const;
    std::vector<double>& values_mut();  // leaf mutation (init / optimizer) only
    bool requires_grad() const;
    bool is_leaf() const;

    // Gradient of the most recent backward pass(es); zeros when never populated.
    const std::vector<double>& grad() const;
    std::vector<double>& grad_mut();
    void zero_grad();

    double item() const;                 // scalar only
    double at(int i) const;              // 1-D
    double at(int r, int c) const;       // 2-D

    // Reverse-mode pass from a scalar. Leaf grads accumulate across calls; the
    // caller zeroes them between optimizer steps. Intermediate grads are reset
    // per call.
    void backward() const;

    std::shared_ptr<Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_op_node(Shape shape, std::vector<double> values,
                               std::vector<Tensor> parents,
                               std::function<void(Tensor::Node&)> backward_fn,
                               const char* opname);
};

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor sum_all(const Tensor& x);   // -> scalar [1]
Tensor mean_all(const Tensor& x);  // -> scalar [1]

// Gather along axis 0. For 1-D input this selects elements.
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);
Tensor reshape(const Tensor& x, Shape shape);  // same numel, identity backward
// out[r] = x[r, cols[r]] for a 2-D x; one column pick per row.
Tensor gather_elements(const Tensor& x, const std::vector<int>& cols);
Tensor concat_cols(const std::vector<Tensor>& xs);          // 2-D, equal row counts
Tensor slice_cols(const Tensor& x, int start, int len);     // 2-D

// Row-wise x / sqrt(mean(x^2) + eps) * weight. eps guards the all-zero row.
Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps = 1e-12);

Tensor softmax_lastdim(const Tensor& x);
// Reduces the last dimension: [.., n] -> [..]; 1-D input yields a scalar.
Tensor logsumexp_lastdim(const Tensor& x);

Tensor gelu(const Tensor& x);  // exact erf form

// Rotary position transform on [T, d] with per-row absolute positions; d even.
Tensor rope(const Tensor& x, const std::vector<int>& positions, double base = 10000.0);

// Entries where mask is false are replaced by `fill` and carry no gradient.
// mask is row-major over x's elements.
Tensor masked_fill(const Tensor& x, const std::vector<uint8_t>& mask, double fill);

// Contiguous segment means over a 1-D tensor: sizes partition x front-to-back
// (a trailing remainder of x may be left uncovered).
Tensor block_mean(const Tensor& x, const std::vector<int>& sizes);

// Additive mask value used for invisible attention entries. exp(-1e30 - m)
// underflows to exactly 0, so masked keys contribute nothing to softmax sums
// and masked rows match attention computed over the visible subset alone.
inline constexpr double kMaskedScore = -1e30;

// --- scalar kernels shared by the graph ops and the no-grad decode path -----
namespace kernels {
void softmax_inplace(double* x, int n);
double logsumexp(const double* x, int n);
double gelu_fwd(double x);
double gelu_bwd(double x);
void rope_rotate(double* row, int d, int position, double base, bool inverse);
double rms_denom(const double* x, int n, double eps);
}  // namespace kernels

}  // namespace ngc
