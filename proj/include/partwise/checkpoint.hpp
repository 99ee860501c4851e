#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "partwise/tensor.hpp"

namespace partwise {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Tensor file layout, all integers u32 little-endian:
//   "PWT1" | count | count x { name_len | name (UTF-8) | rank | dims[rank] | f32 data }
// Floats are written as their IEEE-754 bit patterns, so a round trip is exact.

std::string encode_tensors(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_tensors(std::string_view bytes);

void save_tensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// First tensor named `name`; throws IoError if absent.
const Tensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name);

/// 64-bit FNV-1a of a byte string, used as a content id.
std::uint64_t fnv1a64(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace partwise
