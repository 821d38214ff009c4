#pragma once

#include "reenact/config.hpp"
#include "reenact/nn/layers.hpp"

#include <filesystem>
#include <span>

namespace reenact {

// Raised for checkpoints written by a different container version.
struct CheckpointVersionError : FormatError {
  using FormatError::FormatError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Weights plus the configuration snapshot and label space they were trained with.
struct Checkpoint {
  std::string kind;  // "p2b", "b2f" or "fr"
  Config config;
  LabelSpace labels = LabelSpace::standard();
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;

  const nn::Tensor<float>& tensor(const std::string& name) const;
  bool operator==(const Checkpoint&) const;
};

// Layout: "RECK", u32 version, then kind, config text, label names and named
// tensors, closed by a CRC-32 of everything before it. Little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters and buffers of a module under "prefix.".
void store_module(nn::Module<float>& m, const std::string& prefix, Checkpoint& c);
// Throws FormatError on a missing tensor or a shape mismatch.
void restore_module(nn::Module<float>& m, const std::string& prefix, const Checkpoint& c);

// Throws ConfigError unless the checkpoint was written for the expected kind
// and the standard label space.
void require_compatible(const Checkpoint& c, const std::string& kind);

}  // namespace reenact
