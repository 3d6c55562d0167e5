// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ngc/model.hpp"

namespace ngc {

// Checkpoint layout: 8-byte magic "NGCCKPT1", u64 little-endian JSON header
// length, the JSON header (config + ordered tensor name/shape table), then all
// tensor data as 64-bit little-endian reals in table order.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params);

struct LoadedCheckpoint {
    ModelConfig config;
    ModelParams params;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ngc
