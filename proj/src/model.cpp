// SPDX-License-Identifier: Apache-2.0
#include "ngc/model.hpp"

#include <cmath>

#include "ngc/common.hpp"
#include "ngc/rng.hpp"

namespace ngc {

void ModelConfig::validate() const {
    NGC_CHECK_ARG(n_layers >= 1, "layer count must be >= 1");
    NGC_CHECK_ARG(n_heads >= 1 && d_model % n_heads == 0, "heads must divide d_model");
    NGC_CHECK_ARG(d_head() % 2 == 0, "head dimension must be even for rotary positions");
    NGC_CHECK_ARG(vocab >= 8, "vocab must be >= 8");
    NGC_CHECK_ARG(max_seq >= 1, "max_seq must be >= 1");
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("tok_embed", &tok_embed);
    for (size_t l = 0; l < layers.size(); ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        out.emplace_back(p + "wq", &layers[l].wq);
        out.emplace_back(p + "wk", &layers[l].wk);
        out.emplace_back(p + "wv", &layers[l].wv);
        out.emplace_back(p + "wo", &layers[l].wo);
        out.emplace_back(p + "w_in", &layers[l].w_in);
        out.emplace_back(p + "w_out", &layers[l].w_out);
        out.emplace_back(p + "ln1", &layers[l].ln1);
        out.emplace_back(p + "ln2", &layers[l].ln2);
    }
    out.emplace_back("ln_f", &ln_f);
    out.emplace_back("head", &head);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors() const {
    auto mut = const_cast<ModelParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

void ModelParams::zero_grad() {
    for (auto& [name, t] : named_tensors()) t->zero_grad();
}

long ModelParams::param_count() const {
    long n = 0;
    for (auto& [name, t] : named_tensors()) n += t->numel();
    return n;
}

namespace {

Tensor gaussian_tensor(Shape shape, double std_dev, CounterRng rng) {
    long n = shape_numel(shape);
    std::vector<double> v(n);
    for (long i = 0; i < n; ++i) v[i] = rng.next_gaussian() * std_dev;
    return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    const double std_dev = 0.02;
    const double resid_std = std_dev / std::sqrt(2.0 * cfg.n_layers);
    const int d = cfg.d_model;
    ModelParams p;
    uint64_t stream = 0;
    auto next = [&](Shape shape, double sd) { return gaussian_tensor(std::move(shape), sd, CounterRng(cfg.seed, stream++)); };
    p.tok_embed = next({cfg.vocab, d}, std_dev);
    p.layers.resize(cfg.n_layers);
    for (auto& layer : p.layers) {
        layer.wq = next({d, d}, std_dev);
        layer.wk = next({d, d}, std_dev);
        layer.wv = next({d, d}, std_dev);
        layer.wo = next({d, d}, resid_std);
        layer.w_in = next({d, 4 * d}, std_dev);
        layer.w_out = next({4 * d, d}, resid_std);
        layer.ln1 = Tensor::full({d}, 1.0, true);
        layer.ln2 = Tensor::full({d}, 1.0, true);
        stream += 2;  // keep the stream advancing past the norm slots
    }
    p.ln_f = Tensor::full({d}, 1.0, true);
    stream += 1;
    p.head = next({d, cfg.vocab}, std_dev);
    return p;
}

MaskedForwardResult forward_masked(const ModelParams& params, const ModelConfig& cfg,
                                   const std::vector<int>& tokens, const ReplayMaskSet& masks) {
    const int T = static_cast<int>(tokens.size());
    NGC_CHECK_ARG(T >= 1, "empty token sequence");
    NGC_CHECK_ARG(masks.seq_len == T, "mask/sequence length mismatch");
    NGC_CHECK_ARG(static_cast<int>(masks.layers.size()) == cfg.n_layers,
                  "mask layer count mismatch");
    masks.validate();
    for (int t : tokens) NGC_CHECK_ARG(t >= 0 && t < cfg.vocab, "token id out of range");

    const int H = cfg.n_heads;
    const int dh = cfg.d_head();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<int> positions(T);
    for (int i = 0; i < T; ++i) positions[i] = i;

    MaskedForwardResult res;
    res.traces.resize(cfg.n_layers);
    Tensor x = gather_rows(params.tok_embed, tokens);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& layer = params.layers[l];
        Tensor xn = rmsnorm(x, layer.ln1);
        Tensor q = matmul(xn, layer.wq);
        Tensor k = matmul(xn, layer.wk);
        Tensor v = matmul(xn, layer.wv);
        std::vector<Tensor> head_outs;
        head_outs.reserve(H);
        for (int h = 0; h < H; ++h) {
            Tensor qh = rope(slice_cols(q, h * dh, dh), positions, cfg.rope_base);
            Tensor kh = rope(slice_cols(k, h * dh, dh), positions, cfg.rope_base);
            Tensor vh = slice_cols(v, h * dh, dh);
            res.traces[l].q_heads.push_back(qh);
            res.traces[l].k_heads.push_back(kh);
            Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dh);
            Tensor attn = softmax_lastdim(masked_fill(scores, masks.layers[l], kMaskedScore));
            head_outs.push_back(matmul(attn, vh));
        }
        x = add(x, matmul(concat_cols(head_outs), layer.wo));
        Tensor xn2 = rmsnorm(x, layer.ln2);
        x = add(x, matmul(gelu(matmul(xn2, layer.w_in)), layer.w_out));
    }
    res.logits = matmul(rmsnorm(x, params.ln_f), params.head);
    return res;
}

// --- incremental decode (no-grad path) ----------------------------------------
//
// Mirrors forward_masked arithmetic exactly: same kernels, same summation
// order, so a replay pass under the reconstructed masks reproduces these
// logits to the last bit or near it.

namespace {

// y[j] = sum_k x[k] * w[k][j], with w stored row-major [rows x cols].
void vecmat(const std::vector<double>& x, const Tensor& w, std::vector<double>& out) {
    const int rows = w.shape()[0];
    const int cols = w.shape()[1];
    const auto& wv = w.values();
    out.assign(cols, 0.0);
    for (int k = 0; k < rows; ++k) {
        double xk = x[k];
        for (int j = 0; j < cols; ++j) out[j] += xk * wv[static_cast<long>(k) * cols + j];
    }
}

void rmsnorm_row(const std::vector<double>& x, const Tensor& weight, std::vector<double>& out) {
    const int d = static_cast<int>(x.size());
    double denom = kernels::rms_denom(x.data(), d, 1e-12);
    const auto& wv = weight.values();
    out.resize(d);
    for (int j = 0; j < d; ++j) out[j] = x[j] / denom * wv[j];
}

}  // namespace

DecodeResult decode_step(const ModelParams& params, const ModelConfig& cfg, CacheState& cache,
                         int token) {
    NGC_CHECK_ARG(token >= 0 && token < cfg.vocab, "token id out of range");
    NGC_CHECK_STATE(static_cast<int>(cache.layers.size()) == cfg.n_layers,
                    "cache layer count mismatch");
    cache.assert_uniform_alive();

    const int H = cfg.n_heads;
    const int dh = cfg.d_head();
    const int d = cfg.d_model;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    const int position = static_cast<int>(cache.tokens_seen_total);

    DecodeResult res;
    res.queries.resize(cfg.n_layers);

    const auto& emb = params.tok_embed.values();
    std::vector<double> x(emb.begin() + static_cast<long>(token) * d,
                          emb.begin() + static_cast<long>(token + 1) * d);

    std::vector<double> xn, q, k, v, attn_concat(d), proj, hidden, mlp;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& layer = params.layers[l];
        rmsnorm_row(x, layer.ln1, xn);
        vecmat(xn, layer.wq, q);
        vecmat(xn, layer.wk, k);
        vecmat(xn, layer.wv, v);
        for (int h = 0; h < H; ++h) {
            kernels::rope_rotate(&q[static_cast<long>(h) * dh], dh, position, cfg.rope_base, false);
            kernels::rope_rotate(&k[static_cast<long>(h) * dh], dh, position, cfg.rope_base, false);
        }
        auto& entries = cache.layers[l].entries;
        NGC_CHECK_STATE(entries.empty() || entries.back().global_index < position,
                        "cache entries out of order");
        entries.push_back(CacheEntry{position, k, v});
        res.queries[l] = q;

        const int n_alive = static_cast<int>(entries.size());
        std::vector<double> scores(n_alive);
        for (int h = 0; h < H; ++h) {
            const double* qh = &q[static_cast<long>(h) * dh];
            for (int j = 0; j < n_alive; ++j) {
                const double* kj = &entries[j].key[static_cast<long>(h) * dh];
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += qh[c] * kj[c];
                scores[j] = dot * inv_sqrt_dh;
            }
            kernels::softmax_inplace(scores.data(), n_alive);
            double* out_h = &attn_concat[static_cast<long>(h) * dh];
            for (int c = 0; c < dh; ++c) out_h[c] = 0.0;
            for (int j = 0; j < n_alive; ++j) {
                const double* vj = &entries[j].value[static_cast<long>(h) * dh];
                for (int c = 0; c < dh; ++c) out_h[c] += scores[j] * vj[c];
            }
        }
        vecmat(attn_concat, layer.wo, proj);
        for (int j = 0; j < d; ++j) x[j] += proj[j];

        rmsnorm_row(x, layer.ln2, xn);
        vecmat(xn, layer.w_in, hidden);
        for (double& hv : hidden) hv = kernels::gelu_fwd(hv);
        vecmat(hidden, layer.w_out, mlp);
        for (int j = 0; j < d; ++j) x[j] += mlp[j];
    }

    rmsnorm_row(x, params.ln_f, xn);
    vecmat(xn, params.head, res.logits);
    for (double lv : res.logits) NGC_CHECK_STATE(std::isfinite(lv), "non-finite logit");

    cache.tokens_seen_total += 1;
    cache.tokens_since_round += 1;
    cache.peak_entries_per_layer =
        std::max(cache.peak_entries_per_layer, cache.alive_count(0));
    return res;
}

}  // namespace ngc
