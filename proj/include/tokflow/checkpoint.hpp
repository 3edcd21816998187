#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tokflow/tensor.hpp"

namespace tokflow {

// FDCK checkpoint container: magic "FDCK", u32 version=1, u32 count, then per
// tensor u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 LE data.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_fdck(const std::string& path, const NamedTensors& tensors);
NamedTensors read_fdck(const std::string& path);

// Copies values from `loaded` into `dest` by name; throws on missing names or
// shape mismatches.
void load_into(const NamedTensors& loaded, const NamedTensors& dest);

}  // namespace tokflow
