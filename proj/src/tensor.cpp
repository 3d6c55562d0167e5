// SPDX-License-Identifier: Apache-2.0
#include "ngc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ngc/common.hpp"

namespace ngc {

long shape_numel(const Shape& s) {
    long n = 1;
    for (int d : s) {
        NGC_CHECK_ARG(d >= 0, "negative dimension");
        n *= d;
    }
    return n;
}

// --- Tensor basics -----------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    NGC_CHECK_ARG(shape_numel(shape) == static_cast<long>(values.size()),
                  "shape does not match value count");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    n->is_leaf = true;
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    long n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    long n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const {
    NGC_CHECK_STATE(node_, "undefined tensor");
    return node_->shape;
}

long Tensor::numel() const { return shape_numel(shape()); }

const std::vector<double>& Tensor::values() const {
    NGC_CHECK_STATE(node_, "undefined tensor");
    return node_->values;
}

std::vector<double>& Tensor::values_mut() {
    NGC_CHECK_STATE(node_, "undefined tensor");
    NGC_CHECK_ARG(node_->is_leaf, "values_mut on non-leaf tensor");
    return node_->values;
}

bool Tensor::requires_grad() const {
    NGC_CHECK_STATE(node_, "undefined tensor");
    return node_->requires_grad;
}

bool Tensor::is_leaf() const {
    NGC_CHECK_STATE(node_, "undefined tensor");
    return node_->is_leaf;
}

const std::vector<double>& Tensor::grad() const {
    NGC_CHECK_STATE(node_, "undefined tensor");
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    return node_->grad;
}

std::vector<double>& Tensor::grad_mut() {
    NGC_CHECK_STATE(node_, "undefined tensor");
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    NGC_CHECK_STATE(node_, "undefined tensor");
    node_->grad.assign(node_->values.size(), 0.0);
}

double Tensor::item() const {
    NGC_CHECK_ARG(numel() == 1, "item() on non-scalar tensor");
    return values()[0];
}

double Tensor::at(int i) const {
    NGC_CHECK_ARG(ndim() == 1, "at(i) requires 1-D tensor");
    NGC_CHECK_ARG(i >= 0 && i < shape()[0], "index out of range");
    return values()[i];
}

double Tensor::at(int r, int c) const {
    NGC_CHECK_ARG(ndim() == 2, "at(r,c) requires 2-D tensor");
    NGC_CHECK_ARG(r >= 0 && r < shape()[0] && c >= 0 && c < shape()[1], "index out of range");
    return values()[static_cast<long>(r) * shape()[1] + c];
}

Tensor make_op_node(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                    std::function<void(Tensor::Node&)> backward_fn, const char* opname) {
    for (double v : values) {
        NGC_CHECK_STATE(std::isfinite(v), std::string("non-finite value produced by ") + opname);
    }
    auto n = std::make_shared<Tensor::Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->is_leaf = false;
    for (const Tensor& p : parents) {
        if (p.requires_grad()) n->requires_grad = true;
        n->parents.push_back(p.node());
    }
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    NGC_CHECK_ARG(numel() == 1, "backward requires a scalar loss");
    // Iterative post-order DFS; reversed, it yields an order in which every node
    // is processed after everything that consumes it.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    if (node_->requires_grad) {
        stack.push_back({node_.get(), 0});
        visited.insert(node_.get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            Node* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.n);
            stack.pop_back();
        }
    }
    // Fresh intermediate grads per pass; leaf grads persist and accumulate.
    for (Node* n : topo) {
        if (!n->is_leaf) n->grad.assign(n->values.size(), 0.0);
        if (n->is_leaf && n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
    }
    if (topo.empty()) return;  // loss does not require grad
    node_->grad.assign(1, 0.0);
    node_->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// --- helpers -----------------------------------------------------------------

namespace {

std::vector<double>& ensure_grad(Tensor::Node& n) {
    if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
    return n.grad;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    NGC_CHECK_ARG(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
}

}  // namespace

// --- kernels -----------------------------------------------------------------

namespace kernels {

void softmax_inplace(double* x, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    for (int i = 0; i < n; ++i) x[i] /= sum;
}

double logsumexp(const double* x, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    if (!std::isfinite(mx)) return mx;  // all -inf stays -inf, surfaced by callers
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
    return mx + std::log(sum);
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x / M_SQRT2)); }

double gelu_bwd(double x) {
    return 0.5 * (1.0 + std::erf(x / M_SQRT2)) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

void rope_rotate(double* row, int d, int position, double base, bool inverse) {
    for (int i = 0; i < d / 2; ++i) {
        double theta = static_cast<double>(position) *
                       std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        double c = std::cos(theta);
        double s = inverse ? -std::sin(theta) : std::sin(theta);
        double x0 = row[2 * i];
        double x1 = row[2 * i + 1];
        row[2 * i] = x0 * c - x1 * s;
        row[2 * i + 1] = x0 * s + x1 * c;
    }
}

double rms_denom(const double* x, int n, double eps) {
    double ms = 0.0;
    for (int i = 0; i < n; ++i) ms += x[i] * x[i];
    ms /= static_cast<double>(n);
    return std::sqrt(ms + eps);
}

}  // namespace kernels

// --- matmul ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    NGC_CHECK_ARG(a.ndim() == 2 && b.ndim() == 2, "matmul: 2-D tensors required");
    int m = a.shape()[0], k = a.shape()[1];
    int k2 = b.shape()[0], n = b.shape()[1];
    NGC_CHECK_ARG(k == k2, "matmul: inner dimensions disagree");
    std::vector<double> out(static_cast<long>(m) * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
            double aik = av[static_cast<long>(i) * k + kk];
            for (int j = 0; j < n; ++j) out[static_cast<long>(i) * n + j] += aik * bv[static_cast<long>(kk) * n + j];
        }
    auto an = a.node();
    auto bn = b.node();
    return make_op_node(
        {m, n}, std::move(out), {a, b},
        [an, bn, m, k, n](Tensor::Node& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                auto& ga = ensure_grad(*an);
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += g[static_cast<long>(i) * n + j] * bn->values[static_cast<long>(kk) * n + j];
                        ga[static_cast<long>(i) * k + kk] += acc;
                    }
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(*bn);
                for (int kk = 0; kk < k; ++kk)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += an->values[static_cast<long>(i) * k + kk] * g[static_cast<long>(i) * n + j];
                        gb[static_cast<long>(kk) * n + j] += acc;
                    }
            }
        },
        "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    NGC_CHECK_ARG(a.ndim() == 2 && b.ndim() == 2, "matmul_nt: 2-D tensors required");
    int m = a.shape()[0], k = a.shape()[1];
    int n = b.shape()[0];
    NGC_CHECK_ARG(b.shape()[1] == k, "matmul_nt: inner dimensions disagree");
    std::vector<double> out(static_cast<long>(m) * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk)
                acc += av[static_cast<long>(i) * k + kk] * bv[static_cast<long>(j) * k + kk];
            out[static_cast<long>(i) * n + j] = acc;
        }
    auto an = a.node();
    auto bn = b.node();
    return make_op_node(
        {m, n}, std::move(out), {a, b},
        [an, bn, m, k, n](Tensor::Node& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                auto& ga = ensure_grad(*an);
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += g[static_cast<long>(i) * n + j] * bn->values[static_cast<long>(j) * k + kk];
                        ga[static_cast<long>(i) * k + kk] += acc;
                    }
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(*bn);
                for (int j = 0; j < n; ++j)
                    for (int kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i)
                            acc += g[static_cast<long>(i) * n + j] * an->values[static_cast<long>(i) * k + kk];
                        gb[static_cast<long>(j) * k + kk] += acc;
                    }
            }
        },
        "matmul_nt");
}

// --- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_node(
        a.shape(), std::move(out), {a, b},
        [an, bn](Tensor::Node& self) {
            if (an->requires_grad) {
                auto& ga = ensure_grad(*an);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(*bn);
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i];
            }
        },
        "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_node(
        a.shape(), std::move(out), {a, b},
        [an, bn](Tensor::Node& self) {
            if (an->requires_grad) {
                auto& ga = ensure_grad(*an);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(*bn);
                for (size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
            }
        },
        "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_node(
        a.shape(), std::move(out), {a, b},
        [an, bn](Tensor::Node& self) {
            if (an->requires_grad) {
                auto& ga = ensure_grad(*an);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * bn->values[i];
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(*bn);
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * an->values[i];
            }
        },
        "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    const auto& bv = b.values();
    for (double d : bv) NGC_CHECK_DOMAIN(d != 0.0, "div: zero denominator");
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    auto an = a.node();
    auto bn = b.node();
    return make_op_node(
        a.shape(), std::move(out), {a, b},
        [an, bn](Tensor::Node& self) {
            if (an->requires_grad) {
                auto& ga = ensure_grad(*an);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] / bn->values[i];
            }
            if (bn->requires_grad) {
                auto& gb = ensure_grad(*bn);
                for (size_t i = 0; i < gb.size(); ++i)
                    gb[i] -= self.grad[i] * an->values[i] / (bn->values[i] * bn->values[i]);
            }
        },
        "div");
}

Tensor exp(const Tensor& x) {
    std::vector<double> out(x.values());
    for (double& v : out) v = std::exp(v);
    auto xn = x.node();
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * self.values[i];
        },
        "exp");
}

Tensor log(const Tensor& x) {
    for (double v : x.values()) NGC_CHECK_DOMAIN(v > 0.0, "log: nonpositive operand");
    std::vector<double> out(x.values());
    for (double& v : out) v = std::log(v);
    auto xn = x.node();
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] / xn->values[i];
        },
        "log");
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.values());
    for (double& v : out) v *= c;
    auto xn = x.node();
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn, c](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * c;
        },
        "scale");
}

Tensor add_const(const Tensor& x, double c) {
    std::vector<double> out(x.values());
    for (double& v : out) v += c;
    auto xn = x.node();
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
        },
        "add_const");
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto xn = x.node();
    return make_op_node(
        {1}, {s}, {x},
        [xn](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[0];
        },
        "sum_all");
}

Tensor mean_all(const Tensor& x) {
    NGC_CHECK_ARG(x.numel() > 0, "mean_all: empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    double inv = 1.0 / static_cast<double>(x.numel());
    auto xn = x.node();
    return make_op_node(
        {1}, {s * inv}, {x},
        [xn, inv](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[0] * inv;
        },
        "mean_all");
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    NGC_CHECK_ARG(x.ndim() >= 1, "gather_rows: tensor required");
    int rows = x.shape()[0];
    long row_len = x.numel() / std::max(rows, 1);
    for (int i : idx) NGC_CHECK_ARG(i >= 0 && i < rows, "gather_rows: index out of range");
    Shape out_shape = x.shape();
    out_shape[0] = static_cast<int>(idx.size());
    std::vector<double> out(static_cast<long>(idx.size()) * row_len);
    const auto& xv = x.values();
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(xv.begin() + static_cast<long>(idx[r]) * row_len,
                  xv.begin() + static_cast<long>(idx[r] + 1) * row_len,
                  out.begin() + static_cast<long>(r) * row_len);
    auto xn = x.node();
    auto idx_copy = idx;
    return make_op_node(
        std::move(out_shape), std::move(out), {x},
        [xn, idx_copy, row_len](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t r = 0; r < idx_copy.size(); ++r)
                for (long j = 0; j < row_len; ++j)
                    gx[static_cast<long>(idx_copy[r]) * row_len + j] +=
                        self.grad[static_cast<long>(r) * row_len + j];
        },
        "gather_rows");
}

Tensor reshape(const Tensor& x, Shape shape) {
    NGC_CHECK_ARG(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
    auto xn = x.node();
    return make_op_node(
        std::move(shape), x.values(), {x},
        [xn](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
        },
        "reshape");
}

Tensor gather_elements(const Tensor& x, const std::vector<int>& cols) {
    NGC_CHECK_ARG(x.ndim() == 2, "gather_elements: 2-D tensor required");
    int rows = x.shape()[0], n = x.shape()[1];
    NGC_CHECK_ARG(static_cast<int>(cols.size()) == rows, "gather_elements: one column per row");
    std::vector<double> out(rows);
    const auto& xv = x.values();
    for (int r = 0; r < rows; ++r) {
        NGC_CHECK_ARG(cols[r] >= 0 && cols[r] < n, "gather_elements: column out of range");
        out[r]= xv[static_cast<long>(r) * n + cols[r]];
    }
    auto xn = x.node();
    auto c = cols;
    return make_op_node(
        {rows}, std::move(out), {x},
        [xn, c, n](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t r = 0; r < c.size(); ++r)
                gx[static_cast<long>(r) * n + c[r]] += self.grad[r];
        },
        "gather_elements");
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    NGC_CHECK_ARG(!xs.empty(), "concat_cols: empty input");
    int rows = xs[0].shape()[0];
    int total_cols = 0;
    for (const Tensor& t : xs) {
        NGC_CHECK_ARG(t.ndim() == 2 && t.shape()[0] == rows, "concat_cols: row count mismatch");
        total_cols += t.shape()[1];
    }
    std::vector<double> out(static_cast<long>(rows) * total_cols);
    int col_off = 0;
    for (const Tensor& t : xs) {
        int c = t.shape()[1];
        const auto& tv = t.values();
        for (int r = 0; r < rows; ++r)
            std::copy(tv.begin() + static_cast<long>(r) * c, tv.begin() + static_cast<long>(r + 1) * c,
                      out.begin() + static_cast<long>(r) * total_cols + col_off);
        col_off += c;
    }
    std::vector<std::shared_ptr<Tensor::Node>> pnodes;
    std::vector<int> widths;
    for (const Tensor& t : xs) {
        pnodes.push_back(t.node());
        widths.push_back(t.shape()[1]);
    }
    return make_op_node(
        {rows, total_cols}, std::move(out), xs,
        [pnodes, widths, rows, total_cols](Tensor::Node& self) {
            int off = 0;
            for (size_t p = 0; p < pnodes.size(); ++p) {
                int c = widths[p];
                if (pnodes[p]->requires_grad) {
                    auto& gp = ensure_grad(*pnodes[p]);
                    for (int r = 0; r < rows; ++r)
                        for (int j = 0; j < c; ++j)
                            gp[static_cast<long>(r) * c + j] +=
                                self.grad[static_cast<long>(r) * total_cols + off + j];
                }
                off += c;
            }
        },
        "concat_cols");
}

Tensor slice_cols(const Tensor& x, int start, int len) {
    NGC_CHECK_ARG(x.ndim() == 2, "slice_cols: 2-D tensor required");
    int rows = x.shape()[0], cols = x.shape()[1];
    NGC_CHECK_ARG(start >= 0 && len >= 1 && start + len <= cols, "slice_cols: range out of bounds");
    std::vector<double> out(static_cast<long>(rows) * len);
    const auto& xv = x.values();
    for (int r = 0; r < rows; ++r)
        std::copy(xv.begin() + static_cast<long>(r) * cols + start,
                  xv.begin() + static_cast<long>(r) * cols + start + len,
                  out.begin() + static_cast<long>(r) * len);
    auto xn = x.node();
    return make_op_node(
        {rows, len}, std::move(out), {x},
        [xn, rows, cols, start, len](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < len; ++j)
                    gx[static_cast<long>(r) * cols + start + j] += self.grad[static_cast<long>(r) * len + j];
        },
        "slice_cols");
}

Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps) {
    NGC_CHECK_ARG(x.ndim() == 2, "rmsnorm: 2-D tensor required");
    int rows = x.shape()[0], d = x.shape()[1];
    NGC_CHECK_ARG(weight.ndim() == 1 && weight.shape()[0] == d, "rmsnorm: weight length mismatch");
    std::vector<double> out(static_cast<long>(rows) * d);
    std::vector<double> denom(rows);
    const auto& xv = x.values();
    const auto& wv = weight.values();
    for (int r = 0; r < rows; ++r) {
        denom[r] = kernels::rms_denom(&xv[static_cast<long>(r) * d], d, eps);
        for (int j = 0; j < d; ++j)
            out[static_cast<long>(r) * d + j] = xv[static_cast<long>(r) * d + j] / denom[r] * wv[j];
    }
    auto xn = x.node();
    auto wn = weight.node();
    return make_op_node(
        {rows, d}, std::move(out), {x, weight},
        [xn, wn, rows, d, denom](Tensor::Node& self) {
            // y_j = x_j * w_j / D with D = sqrt(mean(x^2) + eps)
            // dx_i = w_i*g_i/D - (x_i / (n*D^3)) * sum_j g_j*w_j*x_j
            for (int r = 0; r < rows; ++r) {
                const double* xr = &xn->values[static_cast<long>(r) * d];
                const double* gr = &self.grad[static_cast<long>(r) * d];
                double D = denom[r];
                if (xn->requires_grad) {
                    double dot = 0.0;
                    for (int j = 0; j < d; ++j) dot += gr[j] * wn->values[j] * xr[j];
                    auto& gx = ensure_grad(*xn);
                    for (int j = 0; j < d; ++j)
                        gx[static_cast<long>(r) * d + j] +=
                            wn->values[j] * gr[j] / D - xr[j] * dot / (static_cast<double>(d) * D * D * D);
                }
                if (wn->requires_grad) {
                    auto& gw = ensure_grad(*wn);
                    for (int j = 0; j < d; ++j) gw[j] += gr[j] * xr[j] / D;
                }
            }
        },
        "rmsnorm");
}

Tensor softmax_lastdim(const Tensor& x) {
    NGC_CHECK_ARG(x.ndim() >= 1 && x.shape().back() >= 1, "softmax_lastdim: empty last dimension");
    int n = x.shape().back();
    long rows = x.numel() / n;
    std::vector<double> out(x.values());
    for (long r = 0; r < rows; ++r) kernels::softmax_inplace(&out[r * n], n);
    auto xn = x.node();
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn, rows, n](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (long r = 0; r < rows; ++r) {
                const double* y = &self.values[r * n];
                const double* g = &self.grad[r * n];
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += g[j] * y[j];
                for (int j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
            }
        },
        "softmax_lastdim");
}

Tensor logsumexp_lastdim(const Tensor& x) {
    NGC_CHECK_ARG(x.ndim() >= 1 && x.shape().back() >= 1, "logsumexp_lastdim: empty last dimension");
    int n = x.shape().back();
    long rows = x.numel() / n;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(rows);
    const auto& xv = x.values();
    for (long r = 0; r < rows; ++r) out[r] = kernels::logsumexp(&xv[r * n], n);
    auto xn = x.node();
    return make_op_node(
        std::move(out_shape), std::move(out), {x},
        [xn, rows, n](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (long r = 0; r < rows; ++r) {
                double lse = self.values[r];
                for (int j = 0; j < n; ++j)
                    gx[r * n + j] += self.grad[r] * std::exp(xn->values[r * n + j] - lse);
            }
        },
        "logsumexp_lastdim");
}

Tensor gelu(const Tensor& x) {
    std::vector<double> out(x.values());
    for (double& v : out) v = kernels::gelu_fwd(v);
    auto xn = x.node();
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i)
                gx[i] += self.grad[i] * kernels::gelu_bwd(xn->values[i]);
        },
        "gelu");
}

Tensor rope(const Tensor& x, const std::vector<int>& positions, double base) {
    NGC_CHECK_ARG(x.ndim() == 2, "rope: 2-D tensor required");
    int rows = x.shape()[0], d = x.shape()[1];
    NGC_CHECK_ARG(d % 2 == 0, "rope: head dimension must be even");
    NGC_CHECK_ARG(static_cast<int>(positions.size()) == rows, "rope: one position per row required");
    std::vector<double> out(x.values());
    for (int r = 0; r < rows; ++r)
        kernels::rope_rotate(&out[static_cast<long>(r) * d], d, positions[r], base, false);
    auto xn = x.node();
    auto pos = positions;
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn, pos, rows, d, base](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (int r = 0; r < rows; ++r) {
                std::vector<double> g(self.grad.begin() + static_cast<long>(r) * d,
                                      self.grad.begin() + static_cast<long>(r + 1) * d);
                kernels::rope_rotate(g.data(), d, pos[r], base, true);
                for (int j = 0; j < d; ++j) gx[static_cast<long>(r) * d + j] += g[j];
            }
        },
        "rope");
}

Tensor masked_fill(const Tensor& x, const std::vector<uint8_t>& mask, double fill) {
    NGC_CHECK_ARG(static_cast<long>(mask.size()) == x.numel(), "masked_fill: mask size mismatch");
    std::vector<double> out(x.values());
    for (size_t i = 0; i < out.size(); ++i)
        if (!mask[i]) out[i] = fill;
    auto xn = x.node();
    auto m = mask;
    return make_op_node(
        x.shape(), std::move(out), {x},
        [xn, m](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            for (size_t i = 0; i < gx.size(); ++i)
                if (m[i]) gx[i] += self.grad[i];
        },
        "masked_fill");
}

Tensor block_mean(const Tensor& x, const std::vector<int>& sizes) {
    NGC_CHECK_ARG(x.ndim() == 1, "block_mean: 1-D tensor required");
    long covered = 0;
    for (int s : sizes) {
        NGC_CHECK_ARG(s >= 1, "block_mean: block sizes must be positive");
        covered += s;
    }
    NGC_CHECK_ARG(covered <= x.numel(), "block_mean: blocks exceed tensor length");
    std::vector<double> out(sizes.size());
    const auto& xv = x.values();
    long off = 0;
    for (size_t b = 0; b < sizes.size(); ++b) {
        double s = 0.0;
        for (int j = 0; j < sizes[b]; ++j) s += xv[off + j];
        out[b] = s / static_cast<double>(sizes[b]);
        off += sizes[b];
    }
    auto xn = x.node();
    auto sz = sizes;
    return make_op_node(
        {static_cast<int>(sizes.size())}, std::move(out), {x},
        [xn, sz](Tensor::Node& self) {
            auto& gx = ensure_grad(*xn);
            long off = 0;
            for (size_t b = 0; b < sz.size(); ++b) {
                double g = self.grad[b] / static_cast<double>(sz[b]);
                for (int j = 0; j < sz[b]; ++j) gx[off + j] += g;
                off += sz[b];
            }
        },
        "block_mean");
}

}  // namespace ngc
