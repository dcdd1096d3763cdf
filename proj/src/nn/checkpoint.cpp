#include "webguard/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "webguard/error.hpp"

namespace webguard::nn {

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : tensors)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params, const nlohmann::json& config,
                                            const std::string& config_hash) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config_hash"] = config_hash;
  manifest["config"] = config;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    manifest["tensors"].push_back({{"name", e.name},
                                   {"kind", e.trainable ? "parameter" : "buffer"},
                                   {"dtype", "float64"},
                                   {"shape", e.tensor.shape()},
                                   {"offset", offset},
                                   {"count", e.tensor.numel()}});
    offset += 8 * e.tensor.numel();
  }
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : params.entries())
    for (double v : e.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw InputError("checkpoint: bad magic");
  }
  const std::uint64_t m = get_u64(bytes.data() + 8);
  if (m > bytes.size() - 16) throw InputError("checkpoint: truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(m));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: manifest is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  ck.format_version = manifest.at("format_version").get<int>();
  if (ck.format_version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported format version " + std::to_string(ck.format_version));
  }
  ck.config_hash = manifest.at("config_hash").get<std::string>();
  ck.config = manifest.at("config");
  const std::uint8_t* data = bytes.data() + 16 + m;
  const std::uint64_t data_len = bytes.size() - 16 - m;
  for (const auto& t : manifest.at("tensors")) {
    CheckpointEntry e;
    e.name = t.at("name").get<std::string>();
    e.trainable = t.at("kind").get<std::string>() == "parameter";
    if (t.at("dtype").get<std::string>() != "float64") throw InputError("checkpoint: unsupported dtype for " + e.name);
    e.shape = t.at("shape").get<Shape>();
    const std::uint64_t off = t.at("offset").get<std::uint64_t>();
    const std::uint64_t count = t.at("count").get<std::uint64_t>();
    if (count != numel(e.shape) || off + 8 * count > data_len) {
      throw InputError("checkpoint: tensor '" + e.name + "' out of bounds");
    }
    e.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) e.values[i] = std::bit_cast<double>(get_u64(data + off + 8 * i));
    ck.tensors.push_back(std::move(e));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& config,
                     const std::string& config_hash) {
  const auto bytes = encode_checkpoint(params, config, config_hash);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_into(const Checkpoint& checkpoint, ParameterSet& params, const std::string& expected_config_hash) {
  if (checkpoint.config_hash != expected_config_hash) {
    throw ConfigError("checkpoint config hash " + checkpoint.config_hash + " does not match model config hash " +
                      expected_config_hash);
  }
  for (const auto& e : params.entries()) {
    const CheckpointEntry* src = checkpoint.find(e.name);
    if (!src) throw ConfigError("checkpoint is missing tensor '" + e.name + "'");
    if (src->shape != e.tensor.shape()) {
      throw ConfigError("checkpoint tensor '" + e.name + "' has shape " + to_string(src->shape) + ", model expects " +
                        to_string(e.tensor.shape()));
    }
    Tensor dst = e.tensor;
    std::copy(src->values.begin(), src->values.end(), dst.mutable_data().begin());
  }
  if (checkpoint.tensors.size() != params.entries().size()) {
    throw ConfigError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) + " tensors, model has " +
                      std::to_string(params.entries().size()));
  }
}

}  // namespace webguard::nn
