// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ngc {

// Per-layer TxT visibility: row t lists the keys token t could attend to when
// it was generated. Unlike plain causal masks, visibility is not monotone in
// query position once eviction happens, so a full 2-D mask per layer is needed.
struct ReplayMaskSet {
    int seq_len = 0;
    std::vector<std::vector<uint8_t>> layers;  // [layer][q * seq_len + k]

    static ReplayMaskSet causal(int n_layers, int seq_len);

    bool visible(int layer, int q, int k) const {
        return layers[layer][static_cast<long>(q) * seq_len + k] != 0;
    }
    void set(int layer, int q, int k, bool v) {
        layers[layer][static_cast<long>(q) * seq_len + k] = v ? 1 : 0;
    }

    // Diagonal true, nothing above the diagonal.
    void validate() const;

    // '#' visible, '.' hidden; one grid per layer, P1-style header line.
    std::string to_ascii(int layer) const;

    // Sparse per-row visible sets, for serialization / inspection.
    std::vector<std::vector<int>> visible_sets(int layer) const;
};

}  // namespace ngc
