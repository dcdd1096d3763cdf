#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "webguard/nn/module.hpp"

namespace webguard::nn {

// Checkpoint byte layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "WGCKPT01"
//   offset 8   u64       manifest length M in bytes
//   offset 16  M bytes   manifest, UTF-8 JSON:
//                          { "format_version": 1,
//                            "config_hash": "<16 hex digits>",
//                            "config": { ... },
//                            "tensors": [ { "name", "kind": "parameter"|"buffer",
//                                           "dtype": "float64", "shape": [...],
//                                           "offset": <bytes into data>, "count": n } ] }
//   offset 16+M          data section: each tensor's values as IEEE-754
//                        binary64, little-endian, row-major, at its offset.
inline constexpr char kCheckpointMagic[9] = "WGCKPT01";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  bool trainable = true;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  int format_version = kCheckpointVersion;
  std::string config_hash;
  nlohmann::json config;
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params, const nlohmann::json& config,
                                            const std::string& config_hash);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& config,
                     const std::string& config_hash);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into `params`. Every registered tensor must be
// present with the same shape, and the config hash must match.
void load_into(const Checkpoint& checkpoint, ParameterSet& params, const std::string& expected_config_hash);

}  // namespace webguard::nn
