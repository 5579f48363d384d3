#pragma once

// Binary checkpoint layout, all integers and floats little-endian:
//
//   "SWNF"                      4 bytes magic
//   u32 version                 currently 1
//   u32 dim, u32 n_layers
//   u32 n_hidden, u32 hidden[n_hidden]
//   per parameter, in FlowModel::parameters() order:
//     u32 rank, u64 extent[rank], f64 values[prod(extent)]

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "swnf/flow.hpp"

namespace swnf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const FlowModel& model);
FlowModel deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_checkpoint(const std::filesystem::path& path);

}  // namespace swnf
