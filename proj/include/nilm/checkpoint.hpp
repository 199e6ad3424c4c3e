// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "nilm/model.hpp"

namespace nilm {

inline constexpr const char* kCheckpointVersion = "nilm-forge/1";

/*
 * Binary checkpoint. All integers are unsigned little-endian, all reals are
 * IEEE-754 binary64 little-endian.
 *
 *   "nilm-forge/1\n"                      13 bytes, version line
 *   u64 config_len, config_len bytes     ModelConfig as key = value text
 *   u64 tensor_count
 *   per tensor:
 *     u32 name_len, name bytes           e.g. "cnn.conv1.kernels"
 *     u32 rank, u64 extent[rank]
 *     f64 value[product(extents)]         row-major
 *
 * Tensors appear in HybridParams::tensors() order.
 */
std::string encode_checkpoint(const HybridParams& params);
HybridParams decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const HybridParams& params);
HybridParams load_checkpoint(const std::filesystem::path& path);

}  // namespace nilm
