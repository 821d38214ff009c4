#include "reenact/checkpoint.hpp"

#include "reenact/image_io.hpp"

#include <zlib.h>

#include <cstring>

namespace reenact {

namespace {

constexpr char kMagic[4] = {'R', 'E', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
    bytes(b, 4);
  }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  const std::uint8_t* take(std::size_t n) {
    if (n > b_.size() - pos_) throw FormatError("checkpoint truncated");
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::uint8_t* p, std::size_t n) {
  return std::uint32_t(crc32(crc32(0L, Z_NULL, 0), p, uInt(n)));
}

}  // namespace

const nn::Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::operator==(const Checkpoint& o) const {
  if (kind != o.kind || !(config == o.config) || !(labels == o.labels) || tensors.size() != o.tensors.size())
    return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [na, a] = tensors[i];
    const auto& [nb, b] = o.tensors[i];
    if (na != nb || !(a.shape == b.shape) || !(a.data == b.data).all()) return false;
  }
  return true;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(c.kind);
  w.str(c.config.to_text());
  w.u32(std::uint32_t(c.labels.body_labels.size()));
  for (const auto& l : c.labels.body_labels) w.str(l);
  w.u32(std::uint32_t(c.labels.face_labels.size()));
  for (const auto& l : c.labels.face_labels) w.str(l);
  w.u32(std::uint32_t(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.str(name);
    for (int d : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) w.u32(std::uint32_t(d));
    for (Eigen::Index i = 0; i < t.data.size(); ++i) w.f32(t.data[i]);
  }
  w.u32(crc(w.out.data(), w.out.size()));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint file");
  Reader r(bytes);
  r.take(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint container version " + std::to_string(version) + ", this build reads " +
                                 std::to_string(kCheckpointVersion) + "; re-export it with a matching build");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.subspan(body));
  if (tail.u32() != crc(bytes.data(), body)) throw FormatError("checkpoint checksum mismatch");

  Reader in(bytes.first(body));
  in.take(8);
  Checkpoint c;
  c.kind = in.str();
  c.config = Config::parse(in.str());
  c.labels.body_labels.resize(in.u32());
  for (auto& l : c.labels.body_labels) l = in.str();
  c.labels.face_labels.resize(in.u32());
  for (auto& l : c.labels.face_labels) l = in.str();
  const std::uint32_t n = in.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    std::string name = in.str();
    nn::Shape s{int(in.u32()), int(in.u32()), int(in.u32()), int(in.u32())};
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw FormatError("bad tensor shape in checkpoint");
    if (std::size_t(s.size()) * 4 > body) throw FormatError("tensor larger than checkpoint");
    nn::Tensor<float> t(s);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = in.f32();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!in.done()) throw FormatError("trailing bytes in checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void store_module(nn::Module<float>& m, const std::string& prefix, Checkpoint& c) {
  for (const auto& [name, p] : m.named_parameters()) c.tensors.emplace_back(prefix + "." + name, p.value());
  for (const auto& [name, b] : m.named_buffers()) c.tensors.emplace_back(prefix + "." + name, *b);
}

void restore_module(nn::Module<float>& m, const std::string& prefix, const Checkpoint& c) {
  auto fetch = [&](const std::string& name, const nn::Shape& shape) -> const nn::Tensor<float>& {
    const auto& t = c.tensor(prefix + "." + name);
    if (!(t.shape == shape))
      throw FormatError("tensor " + prefix + "." + name + " has shape " + t.shape.str() + ", model expects " +
                        shape.str());
    return t;
  };
  for (auto [name, p] : m.named_parameters()) p.mutable_value() = fetch(name, p.shape());
  for (auto& [name, b] : m.named_buffers()) *b = fetch(name, b->shape);
}

void require_compatible(const Checkpoint& c, const std::string& kind) {
  if (c.kind != kind) throw ConfigError("expected a " + kind + " checkpoint, got " + c.kind);
  if (!(c.labels == LabelSpace::standard())) throw ConfigError(kind + " checkpoint uses a different label space");
}

}  // namespace reenact
