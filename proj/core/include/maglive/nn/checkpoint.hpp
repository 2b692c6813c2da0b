#pragma once

#include "maglive/nn/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace maglive::nn {

// Binary container of named 64-bit tensors:
//   "MLCK" | u32 version | u32 count | { u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[] }*
// All integers and floats little-endian, independent of host byte order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<const Parameter*>& params);
// Loads values into matching parameters by name; shapes must agree and every
// parameter must be present.
void load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter*>& params);

}  // namespace maglive::nn
