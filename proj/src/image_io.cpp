#include "reenact/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace reenact {
namespace {

struct PngImage {
  int width = 0;
  int height = 0;
  int color_type = 0;  // PNG_COLOR_TYPE_*
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
  std::vector<png_color> palette;
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}
void on_png_warning(png_structp, png_const_charp) {}

std::vector<std::uint8_t> write_png(const PngImage& img) {
  if (img.width <= 0 || img.height <= 0) throw FormatError("cannot encode an empty image");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png encode failed: " + err);
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + len);
      },
      nullptr);
  png_set_IHDR(png, info, img.width, img.height, 8, img.color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (img.color_type == PNG_COLOR_TYPE_PALETTE)
    png_set_PLTE(png, info, img.palette.data(), int(img.palette.size()));
  // Fixed compression settings keep the byte stream reproducible.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::size_t stride = std::size_t(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

PngImage read_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a png stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png_create_info_struct(png);
  struct Cursor {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;
  } cursor{bytes, 0};
  PngImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep out, png_size_t len) {
    auto* c = static_cast<Cursor*>(png_get_io_ptr(p));
    if (c->pos + len > c->data.size()) png_error(p, "truncated stream");
    std::memcpy(out, c->data.data() + c->pos, len);
    c->pos += len;
  });
  png_read_info(png, info);
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("only 8-bit png supported");
  }
  if (img.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_colorp pal = nullptr;
    int n = 0;
    if (png_get_PLTE(png, info, &pal, &n)) img.palette.assign(pal, pal + n);
  }
  png_read_update_info(png, info);
  img.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  img.pixels.resize(stride * img.height);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::uint8_t to_byte(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return std::uint8_t(int(c * 255.f + 0.5f));
}

PngImage rgb_image(const Frame& f, int part_channel = -1) {
  PngImage img;
  img.width = f.width();
  img.height = f.height();
  img.color_type = PNG_COLOR_TYPE_RGB;
  img.channels = 3;
  img.pixels.resize(std::size_t(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = f.rgb[c](y, x);
        img.pixels[(std::size_t(y) * img.width + x) * 3 + c] =
            c == part_channel ? std::uint8_t(std::lround(v)) : to_byte(v);
      }
  return img;
}

Frame frame_from(const PngImage& img, int part_channel = -1) {
  if (img.color_type != PNG_COLOR_TYPE_RGB || img.channels != 3) throw FormatError("expected an RGB png");
  Frame f(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::uint8_t b = img.pixels[(std::size_t(y) * img.width + x) * 3 + c];
        f.rgb[c](y, x) = c == part_channel ? float(b) : float(b) / 255.f;
      }
  return f;
}

}  // namespace

void quantize(Frame& f) {
  for (auto& p : f.rgb) p = p.unaryExpr([](float v) { return quantize8(v); });
}

const std::array<std::array<std::uint8_t, 3>, kConditionLabelCount>& label_palette() {
  static const std::array<std::array<std::uint8_t, 3>, kConditionLabelCount> pal = {{
      {0, 0, 0},       {128, 0, 0},     {255, 200, 160}, {220, 170, 130}, {0, 0, 128},
      {0, 128, 128},   {128, 0, 128},   {0, 64, 0},      {64, 0, 64},     {255, 128, 0},
      {255, 255, 0},   {0, 255, 0},     {0, 255, 255},   {64, 64, 255},   {255, 64, 64},
      {128, 128, 128}, {255, 0, 255},   {192, 192, 0},   {0, 128, 255},   {32, 32, 32},
      {255, 0, 128},   {128, 255, 0},   {80, 40, 0},     {255, 255, 255}, {200, 100, 50},
      {230, 30, 60},   {120, 0, 20},
  }};
  return pal;
}

std::vector<std::uint8_t> encode_map(const SemanticMap& map) {
  if (map.width() == 0 || map.height() == 0) throw FormatError("cannot encode an empty map");
  PngImage img;
  img.width = map.width();
  img.height = map.height();
  img.color_type = PNG_COLOR_TYPE_PALETTE;
  img.channels = 1;
  for (const auto& c : label_palette()) img.palette.push_back(png_color{c[0], c[1], c[2]});
  img.pixels.assign(map.labels.data(), map.labels.data() + map.labels.size());
  for (auto v : img.pixels)
    if (v >= kConditionLabelCount) throw InvalidLabelError("map label outside label space");
  return write_png(img);
}

SemanticMap decode_map(std::span<const std::uint8_t> bytes, int n_labels) {
  const PngImage img = read_png(bytes);
  if (img.color_type != PNG_COLOR_TYPE_PALETTE || img.channels != 1)
    throw FormatError("semantic map must be a palette png");
  if (img.width == 0 || img.height == 0) throw FormatError("empty semantic map");
  SemanticMap map(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (img.pixels[i] >= n_labels || img.pixels[i] >= img.palette.size())
      throw FormatError("palette index " + std::to_string(img.pixels[i]) + " is not a known label");
    map.labels.data()[i] = img.pixels[i];
  }
  return map;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) { return write_png(rgb_image(frame)); }
Frame decode_frame(std::span<const std::uint8_t> bytes) { return frame_from(read_png(bytes)); }

std::vector<std::uint8_t> encode_dense(const Frame& dense) {
  for (Eigen::Index i = 0; i < dense.rgb[2].size(); ++i) {
    const float p = dense.rgb[2].data()[i];
    if (p < 0.f || p > float(kMaxDensePart) || p != std::floor(p))
      throw FormatError("dense part index must be an integer in 0..24");
  }
  return write_png(rgb_image(dense, 2));
}
Frame decode_dense(std::span<const std::uint8_t> bytes) {
  Frame f = frame_from(read_png(bytes), 2);
  if (f.rgb[2].maxCoeff() > float(kMaxDensePart)) throw FormatError("dense part index above 24");
  return f;
}

std::vector<std::uint8_t> encode_mask(const BlendMask& mask) {
  PngImage img;
  img.width = mask.width();
  img.height = mask.height();
  img.color_type = PNG_COLOR_TYPE_GRAY;
  img.channels = 1;
  img.pixels.resize(std::size_t(img.width) * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = to_byte(mask.alpha.data()[i]);
  return write_png(img);
}

BlendMask decode_mask(std::span<const std::uint8_t> bytes) {
  const PngImage img = read_png(bytes);
  if (img.color_type != PNG_COLOR_TYPE_GRAY) throw FormatError("mask must be a grayscale png");
  BlendMask m(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.alpha.data()[i] = float(img.pixels[i]) / 255.f;
  return m;
}

std::string encode_keypoints(const std::vector<Keypoint>& keypoints) {
  std::string out;
  char buf[160];
  for (const auto& k : keypoints) {
    if (k.name.empty() || k.name.find_first_of(" \t\n") != std::string::npos)
      throw FormatError("keypoint names must be non-empty single tokens");
    std::snprintf(buf, sizeof buf, " %.9g %.9g %d\n", double(k.x), double(k.y), k.visible ? 1 : 0);
    out += k.name;
    out += buf;
  }
  return out;
}

std::vector<Keypoint> decode_keypoints(const std::string& text) {
  std::vector<Keypoint> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Keypoint k;
    int vis = 0;
    if (!(ls >> k.name >> k.x >> k.y >> vis) || (vis != 0 && vis != 1))
      throw FormatError("malformed keypoint record on line " + std::to_string(line_no));
    k.visible = vis == 1;
    out.push_back(std::move(k));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace reenact
