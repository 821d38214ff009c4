#include "reenact/pipeline.hpp"

#include "reenact/augment.hpp"
#include "reenact/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <iostream>

namespace reenact {

namespace {

void put_providers(const ProviderConfig& p, Config& c) {
  c.set("providers.face_embed.dim", double(p.face_dim));
  c.set("providers.image_embed.dim", double(p.image_dim));
  c.set("providers.face_embed.seed", double(p.face_seed));
  c.set("providers.image_embed.seed", double(p.image_seed));
}

void require_providers(const Checkpoint& c, const Providers& providers) {
  const ProviderConfig want = ProviderConfig::from(c.config), have = providers.config();
  if (want.face_dim != have.face_dim || want.image_dim != have.image_dim || want.face_seed != have.face_seed ||
      want.image_seed != have.image_seed)
    throw ConfigError(c.kind + " checkpoint was trained with different embedding providers");
}

}  // namespace

Checkpoint to_checkpoint(P2BModel& m) {
  Checkpoint c;
  c.kind = "p2b";
  c.config = m.config().to_config();
  store_module(m.generator(), "generator", c);
  store_module(m.discriminator(), "discriminator", c);
  return c;
}

Checkpoint to_checkpoint(B2FModel& m) {
  Checkpoint c;
  c.kind = "b2f";
  c.config = m.config().to_config();
  put_providers(m.providers().config(), c.config);
  store_module(m.generator(), "generator", c);
  store_module(m.discriminator(), "discriminator", c);
  return c;
}

Checkpoint to_checkpoint(FRModel& m) {
  Checkpoint c;
  c.kind = "fr";
  c.config = m.config().to_config();
  put_providers(m.providers().config(), c.config);
  store_module(m.network(), "network", c);
  store_module(m.discriminator(), "discriminator", c);
  return c;
}

std::unique_ptr<P2BModel> load_p2b(const Checkpoint& c) {
  require_compatible(c, "p2b");
  auto m = std::make_unique<P2BModel>(P2BConfig::from(c.config), 0);
  restore_module(m->generator(), "generator", c);
  restore_module(m->discriminator(), "discriminator", c);
  return m;
}

std::unique_ptr<B2FModel> load_b2f(const Checkpoint& c, const Providers& providers) {
  require_compatible(c, "b2f");
  require_providers(c, providers);
  auto m = std::make_unique<B2FModel>(B2FConfig::from(c.config), providers, 0);
  restore_module(m->generator(), "generator", c);
  restore_module(m->discriminator(), "discriminator", c);
  return m;
}

std::unique_ptr<FRModel> load_fr(const Checkpoint& c, const Providers& providers) {
  require_compatible(c, "fr");
  require_providers(c, providers);
  auto m = std::make_unique<FRModel>(FRConfig::from(c.config), providers, 0);
  restore_module(m->network(), "network", c);
  restore_module(m->discriminator(), "discriminator", c);
  return m;
}

std::string checkpoint_id(const std::filesystem::path& path) {
  // The trailing CRC is excluded: a CRC over data plus its own CRC is a constant.
  const auto bytes = read_file(path);
  if (bytes.size() < 4) throw FormatError("checkpoint truncated");
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", crc32(crc32(0L, Z_NULL, 0), bytes.data(), uInt(bytes.size() - 4)));
  return buf;
}

PipelineConfig PipelineConfig::from(const Config& c) {
  PipelineConfig p;
  p.height = c.get("resolution.height", p.height);
  p.width = c.get("resolution.width", p.width);
  p.providers = ProviderConfig::from(c);
  p.p2b_checkpoint = c.get("pipeline.p2b", std::string());
  p.b2f_checkpoint = c.get("pipeline.b2f", std::string());
  p.fr_checkpoint = c.get("pipeline.fr", std::string());
  const std::string bg = c.get("pipeline.background", std::string("inpaint-driving"));
  if (bg == "inpaint-driving") {
    p.background = BackgroundSource::kInpaintDriving;
  } else if (bg == "inpaint-target") {
    p.background = BackgroundSource::kInpaintTarget;
  } else if (bg.rfind("static:", 0) == 0) {
    p.background = BackgroundSource::kStatic;
    p.background_path = bg.substr(7);
  } else if (bg.rfind("dir:", 0) == 0) {
    p.background = BackgroundSource::kDirectory;
    p.background_path = bg.substr(4);
  } else {
    throw ConfigError("pipeline.background must be inpaint-driving, inpaint-target, static:FILE or dir:DIR");
  }
  p.dilation = c.get("pipeline.dilation", p.dilation);
  p.zero_masks = c.get("pipeline.zero_masks", p.zero_masks);
  p.seed = std::uint64_t(c.get("seed", 0));
  if (p.dilation < 0) throw ConfigError("pipeline.dilation must be non-negative");
  return p;
}

void PipelineConfig::validate() const {
  auto need = [](const std::filesystem::path& f, const char* what) {
    if (f.empty()) throw ConfigError(std::string("no ") + what + " given");
    if (!std::filesystem::exists(f)) throw ConfigError(std::string(what) + " " + f.string() + " does not exist");
  };
  need(p2b_checkpoint, "P2B checkpoint");
  need(b2f_checkpoint, "B2F checkpoint");
  if (!fr_checkpoint.empty()) need(fr_checkpoint, "FR checkpoint");
  if (background == BackgroundSource::kStatic || background == BackgroundSource::kDirectory)
    need(background_path, "background");
}

BlendMask figure_mask(const SemanticMap& p_star, int radius) {
  const BlendMask fig = binarize(p_star);
  if (radius <= 0) return fig;
  const int h = fig.height(), w = fig.width();
  BlendMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (fig.alpha(y, x) == 0.f) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (dy * dy + dx * dx <= radius * radius && yy >= 0 && yy < h && xx >= 0 && xx < w) out.alpha(yy, xx) = 1.f;
        }
    }
  return out;
}

Frame extract_target_background(const SampleRecord& target, const SemanticMap& p_star, const Providers& providers,
                                int radius) {
  return providers.inpaint(target, figure_mask(p_star, radius));
}

Reenactor::Reenactor(P2BModel& p2b, B2FModel& b2f, FRModel* fr, const Providers& providers, bool zero_masks)
    : p2b_(p2b), b2f_(b2f), fr_(fr), providers_(providers), zero_masks_(zero_masks) {
  const auto& pc = p2b.config();
  const auto& bc = b2f.config();
  if (pc.height != bc.height || pc.width != bc.width)
    throw ConfigError("P2B and B2F checkpoints were trained at different resolutions");
}

void Reenactor::set_target(const SampleRecord& target) {
  TargetConstants t;
  const PoseBundle pose = providers_.op(target);
  t.p_star = inject_hand_labels(providers_.hp(target), pose.keypoints);
  t.identity = make_identity(target.frame, t.p_star, providers_);
  t.base = b2f_.project(t.identity.e_z);
  ++projections_;
  if (fr_) {
    try {
      const Box box = face_box(pose.keypoints, target.frame.height(), target.frame.width());
      t.face_identity = providers_.face_embed(crop_face(target.frame, box, fr_->config().crop));
    } catch (const NoFaceError&) {
      warnings_.push_back("no face found in the target image; face refinement is skipped");
      std::cerr << "warning: " << warnings_.back() << '\n';
    }
  }
  target_ = std::move(t);
}

const TargetConstants& Reenactor::target() const {
  if (!target_) throw std::logic_error("set_target has not been called");
  return *target_;
}

FrameResult Reenactor::frame(const SampleRecord& driving, const Frame& background) const {
  const TargetConstants& t = target();
  FrameResult r;
  r.pose = providers_.op(driving);
  r.pose.dense_render = providers_.dp(driving);
  if (!background.same_dims(t.p_star.height(), t.p_star.width()))
    throw ShapeError("background does not match the target resolution");
  r.map = p2b_.forward(t.p_star, r.pose).map;
  const B2FOutput out = b2f_.decode(inject_face_labels(r.map, r.pose.keypoints), t.base);
  r.z = out.z;
  r.mask = zero_masks_ ? BlendMask(out.m.height(), out.m.width()) : out.m;
  r.coarse = blend(r.z, r.mask, background);
  r.frame = r.coarse;
  r.face.valid = false;
  if (fr_ && t.face_identity) {
    try {
      r.face = providers_.face_align(r.pose, background.height(), background.width());
    } catch (const NoFaceError&) {
      return r;
    }
    const FROutput refined = fr_->forward(crop_face(r.coarse, r.face, fr_->config().crop), *t.face_identity);
    const BlendMask mc = zero_masks_ ? BlendMask(refined.m.height(), refined.m.width()) : refined.m;
    r.frame = blend_back(r.coarse, r.face, refined.c, mc);
  }
  return r;
}

std::vector<FrameResult> Reenactor::run(const std::vector<SampleRecord>& driving,
                                        const std::vector<Frame>& backgrounds) const {
  if (driving.empty()) throw ShapeError("no driving frames");
  if (backgrounds.size() != driving.size())
    throw ShapeError("need one background per driving frame, got " + std::to_string(backgrounds.size()) + " for " +
                     std::to_string(driving.size()));
  std::vector<FrameResult> out;
  out.reserve(driving.size());
  for (std::size_t i = 0; i < driving.size(); ++i) out.push_back(frame(driving[i], backgrounds[i]));
  return out;
}

std::vector<Frame> load_backgrounds(const PipelineConfig& cfg, const std::vector<SampleRecord>& driving,
                                    const SampleRecord& target, const Reenactor& r, const Providers& providers) {
  std::vector<Frame> out;
  switch (cfg.background) {
    case BackgroundSource::kStatic:
      out.assign(driving.size(), load_frame(cfg.background_path));
      break;
    case BackgroundSource::kDirectory: {
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(cfg.background_path))
        if (e.path().extension() == ".png") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      if (files.size() != driving.size())
        throw ShapeError("background directory holds " + std::to_string(files.size()) + " frames for " +
                         std::to_string(driving.size()) + " driving frames");
      for (const auto& f : files) out.push_back(load_frame(f));
      break;
    }
    case BackgroundSource::kInpaintDriving:
      for (const auto& d : driving) out.push_back(providers.inpaint(d, figure_mask(providers.hp(d), cfg.dilation)));
      break;
    case BackgroundSource::kInpaintTarget:
      out.assign(driving.size(), extract_target_background(target, r.target().p_star, providers, cfg.dilation));
      break;
  }
  return out;
}

Dataset as_dataset(const std::vector<FrameResult>& results, const std::vector<SampleRecord>& driving,
                   const std::vector<Frame>& backgrounds) {
  Dataset ds;
  ds.size = {results.at(0).frame.height(), results.at(0).frame.width()};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const FrameResult& r = results[i];
    SampleRecord rec;
    rec.frame = r.frame;
    rec.parsing = r.map;
    rec.pose = r.pose;
    for (int y = 0; y < r.mask.height(); ++y)
      for (int x = 0; x < r.mask.width(); ++x)
        if (r.mask.alpha(y, x) < 0.5f) {
          rec.parsing(y, x) = kBackground;
          for (auto& p : rec.pose.dense_render.rgb) p(y, x) = 0.f;
        }
    rec.background = backgrounds[i];
    rec.person_id = driving[i].person_id;
    rec.frame_index = driving[i].frame_index;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_debug(const std::vector<FrameResult>& results, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < results.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    const auto base = dir / stem;
    const FrameResult& r = results[i];
    save_map(base.string() + ".p2b.png", r.map);
    write_file(base.string() + ".mask.png", encode_mask(r.mask));
    save_frame(base.string() + ".z.png", r.z);
    save_frame(base.string() + ".coarse.png", r.coarse);
    save_frame(base.string() + ".final.png", r.frame);
  }
}

}  // namespace reenact
