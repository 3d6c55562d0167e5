// SPDX-License-Identifier: Apache-2.0
#include "ngc/mask.hpp"

#include <sstream>

#include "ngc/common.hpp"

namespace ngc {

ReplayMaskSet ReplayMaskSet::causal(int n_layers, int seq_len) {
    ReplayMaskSet m;
    m.seq_len = seq_len;
    m.layers.assign(n_layers, std::vector<uint8_t>(static_cast<long>(seq_len) * seq_len, 0));
    for (int l = 0; l < n_layers; ++l)
        for (int q = 0; q < seq_len; ++q)
            for (int k = 0; k <= q; ++k) m.set(l, q, k, true);
    return m;
}

void ReplayMaskSet::validate() const {
    for (size_t l = 0; l < layers.size(); ++l) {
        NGC_CHECK_ARG(static_cast<long>(layers[l].size()) ==
                          static_cast<long>(seq_len) * seq_len,
                      "mask size mismatch");
        for (int q = 0; q < seq_len; ++q) {
            NGC_CHECK_ARG(visible(static_cast<int>(l), q, q), "mask diagonal must be true");
            for (int k = q + 1; k < seq_len; ++k)
                NGC_CHECK_ARG(!visible(static_cast<int>(l), q, k),
                              "mask must not look above the diagonal");
        }
    }
}

std::string ReplayMaskSet::to_ascii(int layer) const {
    std::ostringstream os;
    os << "P1 " << seq_len << " " << seq_len << "\n";
    for (int q = 0; q < seq_len; ++q) {
        for (int k = 0; k < seq_len; ++k) os << (visible(layer, q, k) ? '#' : '.');
        os << "\n";
    }
    return os.str();
}

std::vector<std::vector<int>> ReplayMaskSet::visible_sets(int layer) const {
    std::vector<std::vector<int>> out(seq_len);
    for (int q = 0; q < seq_len; ++q)
        for (int k = 0; k <= q; ++k)
            if (visible(layer, q, k)) out[q].push_back(k);
    return out;
}

}  // namespace ngc
