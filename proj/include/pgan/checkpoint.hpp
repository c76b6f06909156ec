#pragma once

#include "pgan/params.hpp"
#include "pgan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pgan {

/// On-disk layout (all integers and floats little-endian):
///   "PGANCKPT" | u32 version | u64 record count
///   per record: u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 data[prod(dims)]
inline constexpr char kCheckpointMagic[8] = {'P', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> data;

    bool operator==(const NamedTensor&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `params`, names prefixed with `prefix`.
std::vector<NamedTensor> collect_tensors(const NetParams& params, const std::string& prefix);
/// Copies matching records back into `params`; every tensor must be present with its shape.
void restore_tensors(NetParams& params, const std::vector<NamedTensor>& records, const std::string& prefix);

}  // namespace pgan
