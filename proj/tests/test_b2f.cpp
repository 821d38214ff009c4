#include "doctest.h"
#include "gradcheck.hpp"
#include "reenact/augment.hpp"
#include "reenact/b2f.hpp"
#include "reenact/nn/convert.hpp"

#include <algorithm>
#include <cmath>

using namespace reenact;
using reenact::testing::gradcheck;
using reenact::testing::random_tensor;
using reenact::testing::TensorD;
using reenact::testing::VarD;

namespace {

VarD filled(nn::Shape s, double v) { return VarD::constant(TensorD(s, v)); }

const SampleRecord& person() {
  static const SampleRecord r = [] {
    Rng rng(31);
    return sample_sequence(BodyParams::random(rng), 3, 4).back();
  }();
  return r;
}

// Two-tap embedder that fits 4x4 inputs.
EmbedderSpec tiny_spec() {
  EmbedderSpec s;
  s.layers = {{"a", 3, 3, 1}, {"b", 4, 2, 2}};
  s.dims = 4;
  return s;
}

B2FConfig small_config() {
  B2FConfig c;
  c.height = 32;
  c.width = 24;
  c.ngf = 4;
  c.max_channels = 8;
  c.spade_hidden = 4;
  c.ndf = 4;
  c.batch = 2;
  c.window = 3;
  return c;
}

}  // namespace

TEST_CASE("part extraction") {
  const auto& r = person();
  const IdentityCrops c = part_extract(r.frame, r.parsing);
  for (const auto& f : c.crops) {
    CHECK(f.height() == kFaceCropSize);
    CHECK(f.width() == kFaceCropSize);
  }
  CHECK_FALSE(c.empty[0]);
  CHECK_FALSE(c.empty[4]);

  // Skin crop: per-channel (lower) median over the skin-group pixels.
  const auto& skin = part_groups()[4];
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<float> v;
    for (int y = 0; y < r.parsing.height(); ++y)
      for (int x = 0; x < r.parsing.width(); ++x)
        if (std::count(skin.begin(), skin.end(), r.parsing(y, x))) v.push_back(r.frame.rgb[ch](y, x));
    std::sort(v.begin(), v.end());
    const float median = v[(v.size() - 1) / 2];
    CHECK((c.crops[4].rgb[ch] == median).all());
  }

  // Only face pixels: crop 1 carries them, crops 2-4 are zero and flagged.
  SemanticMap face_only(r.parsing.height(), r.parsing.width());
  Frame white(r.parsing.height(), r.parsing.width(), 1.f);
  for (int y = 10; y < 20; ++y)
    for (int x = 30; x < 40; ++x) face_only(y, x) = kFace;
  const IdentityCrops f = part_extract(white, face_only);
  CHECK_FALSE(f.empty[0]);
  CHECK(f.crops[0].rgb[0].maxCoeff() == doctest::Approx(1.f));
  for (int g = 1; g < 4; ++g) {
    CHECK(f.empty[g]);
    CHECK(f.crops[g].rgb[0].abs().maxCoeff() == 0.f);
  }
  // A square group fills its crop; background pixels of the image never leak in.
  CHECK(f.crops[0].rgb[1](112, 112) == doctest::Approx(1.f));
  SemanticMap with_bg = face_only;
  for (int y = 12; y < 15; ++y)
    for (int x = 32; x < 35; ++x) with_bg(y, x) = kBackground;
  const IdentityCrops g = part_extract(white, with_bg);
  CHECK(g.crops[0].rgb[0].minCoeff() == 0.f);

  CHECK_THROWS_AS(part_extract(r.frame, SemanticMap(r.parsing.height(), r.parsing.width())), NoFaceError);
  CHECK_THROWS_AS(part_extract(Frame(4, 4), r.parsing), ShapeError);
}

TEST_CASE("identity embedding") {
  Providers providers;
  const auto& r = person();
  const PersonIdentity a = make_identity(r.frame, r.parsing, providers);
  CHECK(a.e_z.size() == 256);
  CHECK(providers.counts().face_embed == 1);
  CHECK(providers.counts().image_embed == 4);
  const PersonIdentity b = make_identity(r.frame, r.parsing, providers);
  CHECK(a.e_z == b.e_z);
  CHECK(a.e_z.head(128) == providers.face_embed(a.crops.crops[0]));
  CHECK(a.e_z.tail(32) == providers.image_embed(a.crops.crops[4]));
  CHECK(identity_dim({2048, 512}) == 4096);

  IdentityCache cache(providers);
  providers.reset_counts();
  cache.get(r);
  cache.get(r);
  CHECK(cache.size() == 1);
  CHECK(providers.counts().face_embed == 1);
}

TEST_CASE("decoder geometry") {
  B2FConfig c;
  CHECK(c.stages() == 5);
  CHECK(c.canvas() == 128);
  c.height = 512;
  c.width = 320;
  CHECK(c.stages() == 7);
  CHECK(c.canvas() == 512);
}

TEST_CASE("generator forward") {
  Providers providers;
  B2FModel model(B2FConfig{}, providers, 3);
  const auto& r = person();
  const SemanticMap cond = inject_face_labels(r.parsing, r.pose.keypoints);
  const Eigen::VectorXf e = make_identity(r.frame, r.parsing, providers).e_z;
  const B2FOutput o = model.forward(cond, e);
  CHECK(o.z.height() == 128);
  CHECK(o.z.width() == 80);
  CHECK(o.m.height() == 128);
  CHECK(o.m.width() == 80);
  CHECK(o.m.alpha.minCoeff() >= 0.f);
  CHECK(o.m.alpha.maxCoeff() <= 1.f);
  const B2FOutput again = model.forward(cond, e);
  CHECK(o.z == again.z);
  CHECK((o.m.alpha == again.m.alpha).all());
  const B2FOutput other = model.forward(cond, Eigen::VectorXf(e * -3.f));
  double l2 = 0;
  for (int ch = 0; ch < 3; ++ch) l2 += (o.z.rgb[ch] - other.z.rgb[ch]).square().sum();
  CHECK(l2 > 0.0);
  // Cached projection gives the same frame.
  CHECK(model.decode(cond, model.project(e)).z == o.z);

  CHECK_THROWS_AS(model.forward(cond, Eigen::VectorXf::Zero(100)), ConfigError);
  CHECK_THROWS_AS(model.forward(SemanticMap(64, 40), e), ShapeError);
  SemanticMap bad = cond;
  bad(5, 5) = 27;
  CHECK_THROWS_AS(model.forward(bad, e), InvalidLabelError);
}

TEST_CASE("condition canvas") {
  B2FConfig c = small_config();
  SemanticMap m(32, 24, kPants);
  const auto t = b2f_condition<float>({&m}, c);
  CHECK(c.canvas() == 32);
  CHECK(t.shape == nn::Shape{1, 27, 32, 32});
  CHECK(t.at(0, kBackground, 0, 0) == 1.f);
  CHECK(t.at(0, kBackground, 0, 31) == 1.f);
  CHECK(t.at(0, kPants, 0, 4) == 1.f);
  CHECK(t.at(0, kBackground, 0, 4) == 0.f);
  CHECK(t.at(0, kPants, 0, 28) == 0.f);
}

TEST_CASE("hinge closed forms") {
  const nn::Shape s{2, 1, 4, 4};
  CHECK(loss_hinge_g<double>({filled(s, 2.0)}).item() == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(loss_hinge_g<double>({filled(s, 2.0), filled(s, 2.0)}).item() == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(loss_hinge_g<double>({filled(s, 0.0)}).item() == 0.0);
  CHECK(loss_hinge_d<double>({filled(s, 1.0)}, {filled(s, -1.0)}).item() == 0.0);
  CHECK(loss_hinge_d<double>({filled(s, 0.0)}, {filled(s, 0.0)}).item() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(loss_hinge_d<double>({filled(s, 0.0), filled(s, 0.0)}, {filled(s, 0.0), filled(s, 0.0)}).item() ==
        doctest::Approx(4.0).epsilon(1e-12));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const VarD a = VarD::constant(random_tensor(s, rng, -3, 3)), b = VarD::constant(random_tensor(s, rng, -3, 3));
    CHECK(loss_hinge_d<double>({a}, {b}).item() >= 0.0);
    // Linear in the discriminator output.
    CHECK(loss_hinge_g<double>({nn::add(a, b)}).item() ==
          doctest::Approx(loss_hinge_g<double>({a}).item() + loss_hinge_g<double>({b}).item()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loss_hinge_d<double>({filled(s, 0.0)}, {}), ShapeError);
}

TEST_CASE("perceptual and face losses") {
  const ToyEmbedder<double> emb(EmbedderKind::kImage, EmbedderSpec::standard(8), 5);
  std::mt19937_64 rng(8);
  const TensorD x = random_tensor({1, 3, 32, 32}, rng, 0, 1), o = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  CHECK(loss_perceptual(VarD::constant(x), VarD::constant(x), emb).item() == 0.0);
  double prev = 1e30;
  for (int k = 0; k <= 9; ++k) {
    // Walk o toward x; the loss must not grow.
    TensorD p = o;
    const double t = k / 9.0;
    p.data = (1 - t) * o.data + t * x.data;
    const double l = loss_perceptual(VarD::constant(x), VarD::constant(p), emb).item();
    CHECK(l >= 0.0);
    CHECK(l <= prev + 1e-12);
    prev = l;
  }
  CHECK(prev == doctest::Approx(0.0).epsilon(1e-12));

  const ToyEmbedder<double> face(EmbedderKind::kFace, EmbedderSpec::standard(8), 6);
  bool flagged = false;
  const std::vector<Box> boxes{{4, 4, 20, 20, true}};
  CHECK(loss_face_emphasis(VarD::constant(x), VarD::constant(x), boxes, face, &flagged, 32).item() == 0.0);
  CHECK_FALSE(flagged);
  CHECK(loss_face_emphasis(VarD::constant(o), VarD::constant(x), boxes, face, &flagged, 32).item() > 0.0);
  CHECK(loss_face_emphasis(VarD::constant(o), VarD::constant(x), {{0, 0, 0, 0, false}}, face, &flagged, 32)
            .item() == 0.0);
  CHECK(flagged);
  // Only the face box matters.
  TensorD outside = x;
  outside.at(0, 0, 28, 28) += 0.5;
  CHECK(loss_face_emphasis(VarD::constant(outside), VarD::constant(x), boxes, face, &flagged, 32).item() == 0.0);
}

TEST_CASE("mask loss") {
  const auto& r = person();
  const BlendMask gt = binarize(r.parsing);
  const VarD exact = VarD::constant(nn::masks_to_tensor<double>({&gt}));
  CHECK(loss_mask<double>(exact, {&r.parsing}).item() == 0.0);
  SemanticMap all(8, 8, kPants);
  CHECK(loss_mask<double>(filled({1, 1, 8, 8}, 0.0), {&all}).item() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(loss_mask<double>(filled({1, 1, 8, 8}, 0.0), {&all}, 2.0).item() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(B2FConfig{}.lambda_mask == 5.0);
  CHECK(B2FConfig::from(Config{}).lambda_mask == 5.0);
  CHECK_THROWS_AS(loss_mask<double>(filled({1, 1, 4, 8}, 0.0), {&all}), ShapeError);
}

TEST_CASE("loss gradients match finite differences") {
  const ToyEmbedder<double> emb(EmbedderKind::kImage, tiny_spec(), 12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const nn::Shape s{1, 1, 4, 4}, img{1, 3, 4, 4};
    CHECK(gradcheck([](const auto& v) { return loss_hinge_g<double>({v[0], v[1]}); },
                    {random_tensor(s, rng), random_tensor(s, rng)})
              .relative_error < 1e-4);
    CHECK(gradcheck([](const auto& v) { return loss_hinge_d<double>({v[0]}, {v[1]}); },
                    {random_tensor(s, rng, -2, 2), random_tensor(s, rng, -2, 2)})
              .relative_error < 1e-4);
    CHECK(gradcheck([](const auto& v) { return loss_fm_b2f<double>({{v[0], v[1]}}, {{v[1], v[0]}}); },
                    {random_tensor(s, rng), random_tensor(s, rng)})
              .relative_error < 1e-4);
    CHECK(gradcheck([&](const auto& v) { return loss_perceptual(v[0], v[1], emb); },
                    {random_tensor(img, rng, 0, 1), random_tensor(img, rng, 0, 1)})
              .relative_error < 1e-4);
    CHECK(gradcheck(
              [&](const auto& v) {
                return loss_face_emphasis<double>(v[0], v[1], {{0, 0, 3, 3, true}}, emb, nullptr, 4);
              },
              {random_tensor(img, rng, 0, 1), random_tensor(img, rng, 0, 1)})
              .relative_error < 1e-4);
    SemanticMap m(4, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) m(y, x) = std::uint8_t(rng() % 3);
    CHECK(gradcheck([&](const auto& v) { return loss_mask<double>(v[0], {&m}); },
                    {random_tensor(s, rng, 0.05, 0.45)})
              .relative_error < 1e-4);
  }
}

TEST_CASE("training samples and steps") {
  Providers providers;
  const Dataset ds = generate_dataset(2, 3, {32, 24}, 4);
  IdentityCache cache(providers);
  const B2FSample s = make_b2f_sample(ds.records[0], ds.records[1], cache);
  CHECK(s.gt_frame == ds.records[1].frame);
  CHECK(s.e_z == cache.get(ds.records[0]));
  CHECK(s.face.valid);
  bool has_face_label = false;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 24; ++x) has_face_label |= s.cond(y, x) >= kEyebrows;
  CHECK(has_face_label);

  const B2FConfig cfg = small_config();
  B2FModel m1(cfg, providers, 9), m2(cfg, providers, 9);
  Rng r1(5), r2(5);
  for (int step = 0; step < 2; ++step) {
    const LossReport a = m1.train_step(make_b2f_batch(ds, cfg, cache, r1));
    const LossReport b = m2.train_step(make_b2f_batch(ds, cfg, cache, r2));
    CHECK(a == b);
    for (const auto& [name, value] : a.terms) CHECK(std::isfinite(value));
    CHECK(a.get("perceptual") > 0.0);
  }
  B2FConfig nan_cfg = cfg;
  nan_cfg.lambda_face = std::nan("");
  B2FModel bad(nan_cfg, providers, 1);
  CHECK_THROWS_AS(bad.train_step(make_b2f_batch(ds, cfg, cache, r1)), TrainingError);
}

TEST_CASE("config round trip") {
  B2FConfig c = small_config();
  c.lambda_face = 0.25;
  const B2FConfig back = B2FConfig::from(c.to_config());
  CHECK(back.lambda_face == 0.25);
  CHECK(back.ngf == c.ngf);
  CHECK(back.height == 32);
}
