#pragma once

#include <filesystem>

#include "cimq/tensor.hpp"

namespace cimq {

// Binary tensor file, little-endian:
//   magic "CIMT" | version u8 = 1 | dtype u8 (0 = f32) | ndim u8 | reserved u8 = 0
//   | ndim x u64 dims | row-major f32 payload, no padding.
// Values are narrowed to f32 on write; read(write(t)) is bit-exact once the
// payload is f32-representable.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace cimq
