#pragma once

#include "kinflow/tensor.hpp"

#include <string>

namespace kinflow {

// Binary tensor container, little-endian throughout:
//   magic   8 bytes  "KFTENSR\0"
//   version u32      currently 1
//   rank    u32      1..4
//   dims    rank x u64
//   payload product(dims) x float64, row-major
// Round-trips are bitwise for finite payloads.
inline constexpr std::uint32_t kTensorFileVersion = 1;

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace kinflow
