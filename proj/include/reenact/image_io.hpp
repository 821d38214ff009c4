#pragma once

#include "reenact/core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace reenact {

// 8-bit quantization used by every image file. Values written are round(v*255).
inline float quantize8(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return float(int(c * 255.f + 0.5f)) / 255.f;
}
void quantize(Frame& f);

// Semantic maps travel as palette PNGs. Decoding rejects indices at or above
// n_labels.
std::vector<std::uint8_t> encode_map(const SemanticMap& map);
SemanticMap decode_map(std::span<const std::uint8_t> bytes, int n_labels = kConditionLabelCount);

std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_mask(const BlendMask& mask);
BlendMask decode_mask(std::span<const std::uint8_t> bytes);

// Dense render: U and V quantized to 8 bits, channel 2 holds the part index.
std::vector<std::uint8_t> encode_dense(const Frame& dense);
Frame decode_dense(std::span<const std::uint8_t> bytes);

std::string encode_keypoints(const std::vector<Keypoint>& keypoints);
std::vector<Keypoint> decode_keypoints(const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

inline void save_map(const std::filesystem::path& p, const SemanticMap& m) { write_file(p, encode_map(m)); }
inline SemanticMap load_map(const std::filesystem::path& p, int n_labels = kConditionLabelCount) {
  return decode_map(read_file(p), n_labels);
}
inline void save_frame(const std::filesystem::path& p, const Frame& f) { write_file(p, encode_frame(f)); }
inline Frame load_frame(const std::filesystem::path& p) { return decode_frame(read_file(p)); }

// Fixed display palette for the conditioning label space.
const std::array<std::array<std::uint8_t, 3>, kConditionLabelCount>& label_palette();

}  // namespace reenact
