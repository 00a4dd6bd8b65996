// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoint container. Layout: magic "EMODCKPT", version u32,
// count u32, then per parameter: name length u16 + UTF-8 name, rank u8,
// extents u32[rank], little-endian float32 data.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "emod/tensor.hpp"

namespace emod {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

template <typename S>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<S>>>& params);

std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

// Strict by-name restore: every model parameter must appear with a matching
// shape and the file may not contain unknown entries.
template <typename S>
void load_checkpoint(const std::string& path,
                     std::vector<std::pair<std::string, Tensor<S>>>& params);

}  // namespace emod
