#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "traitfuse/tensor.hpp"

namespace traitfuse {

/// Storage precision of a serialized tensor. In memory every tensor is f64.
enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

/// MPRT layout: "MPRT", u8 version (1), u8 dtype, u8 rank, rank x u32 LE
/// extents, row-major LE payload.
std::vector<std::uint8_t> encode_mprt(const Tensor& tensor, Dtype dtype);
/// Throws DataError on a malformed buffer.
Tensor decode_mprt(const std::vector<std::uint8_t>& bytes);

void write_mprt(const std::filesystem::path& path, const Tensor& tensor, Dtype dtype = Dtype::f32);
Tensor read_mprt(const std::filesystem::path& path);

}  // namespace traitfuse
