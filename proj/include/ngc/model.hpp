// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ngc/cache.hpp"
#include "ngc/mask.hpp"
#include "ngc/tensor.hpp"

namespace ngc {

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 2;
    int d_model = 32;
    int vocab = 32;
    int max_seq = 512;
    uint64_t seed = 0;
    double rope_base = 10000.0;

    int d_head() const { return d_model / n_heads; }
    void validate() const;
};

// Pre-norm decoder blocks, GELU MLP (hidden 4*d_model), RMS norms, no biases.
// One parameter set serves both token generation and eviction scoring.
struct ModelParams {
    struct Layer {
        Tensor wq, wk, wv, wo;      // d_model x d_model
        Tensor w_in, w_out;         // d_model x 4d, 4d x d_model
        Tensor ln1, ln2;            // d_model
    };
    Tensor tok_embed;               // vocab x d_model
    std::vector<Layer> layers;
    Tensor ln_f;                    // d_model
    Tensor head;                    // d_model x vocab

    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
    void zero_grad();
    long param_count() const;
};

// Post-rope queries and keys per layer and head, in attention layout, attached
// to the live graph so eviction scores can be recomputed differentiably.
struct LayerTrace {
    std::vector<Tensor> q_heads;  // [head] T x d_head
    std::vector<Tensor> k_heads;  // [head] T x d_head
};

struct MaskedForwardResult {
    Tensor logits;                   // T x vocab
    std::vector<LayerTrace> traces;  // per layer
};

// Deterministic scaled-normal init: std 0.02, residual output projections
// (wo, w_out) scaled down by 1/sqrt(2L), norm weights 1.
ModelParams init_params(const ModelConfig& cfg);

// Full-sequence forward under per-layer visibility masks. Attention at layer l
// uses exactly masks.layers[l]; positions use original token indices.
MaskedForwardResult forward_masked(const ModelParams& params, const ModelConfig& cfg,
                                   const std::vector<int>& tokens, const ReplayMaskSet& masks);

struct DecodeResult {
    std::vector<double> logits;                    // vocab
    std::vector<std::vector<double>> queries;      // per layer: H * d_head (post-rope)
};

// Incremental step against a CacheState: appends this token's K/V in every
// layer, attends to the alive entries (self included), and returns the query
// vectors used, which later form the scoring window.
DecodeResult decode_step(const ModelParams& params, const ModelConfig& cfg, CacheState& cache,
                         int token);

}  // namespace ngc
