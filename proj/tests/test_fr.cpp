#include "doctest.h"
#include "gradcheck.hpp"
#include "reenact/fr.hpp"
#include "reenact/nn/convert.hpp"

#include <cmath>

using namespace reenact;
using reenact::testing::gradcheck;
using reenact::testing::random_tensor;
using reenact::testing::TensorD;
using reenact::testing::VarD;

namespace {

Frame random_frame(int h, int w, std::mt19937_64& rng) {
  Frame f(h, w);
  std::uniform_real_distribution<float> d(0.f, 1.f);
  for (auto& p : f.rgb)
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = d(rng);
  return f;
}

FRConfig small_config() {
  FRConfig c;
  c.crop = 16;
  c.nf = 4;
  c.ndf = 4;
  c.batch = 2;
  c.window = 3;
  return c;
}

const Dataset& small_dataset() {
  static const Dataset ds = generate_dataset(2, 3, {64, 40}, 21);
  return ds;
}

}  // namespace

TEST_CASE("network shapes and conditioning") {
  Providers providers;
  FRModel model(small_config(), providers, 1);
  std::mt19937_64 rng(2);
  const Frame c0 = random_frame(16, 16, rng), ci = random_frame(16, 16, rng), cj = random_frame(16, 16, rng);
  const FROutput a = model.forward(c0, ci);
  CHECK(a.c.height() == 16);
  CHECK(a.c.width() == 16);
  CHECK(a.m.height() == 16);
  CHECK(a.m.alpha.minCoeff() >= 0.f);
  CHECK(a.m.alpha.maxCoeff() <= 1.f);
  CHECK(model.forward(c0, ci).c == a.c);
  const FROutput b = model.forward(c0, cj);
  double l2 = 0;
  for (int ch = 0; ch < 3; ++ch) l2 += (a.c.rgb[ch] - b.c.rgb[ch]).square().sum();
  CHECK(l2 > 0.0);
  CHECK_THROWS_AS(model.forward(random_frame(8, 8, rng), ci), ShapeError);
  CHECK_THROWS_AS(model.forward(c0, Eigen::VectorXf::Zero(5)), ShapeError);
}

TEST_CASE("face perceptual loss") {
  const ToyEmbedder<double> face(EmbedderKind::kFace, EmbedderSpec::standard(8), 3);
  std::mt19937_64 rng(4);
  const VarD a = VarD::constant(random_tensor({2, 3, 32, 32}, rng, 0, 1));
  const VarD b = VarD::constant(random_tensor({2, 3, 32, 32}, rng, 0, 1));
  CHECK(loss_facep(a, a, face).item() == 0.0);
  const double full = loss_facep(a, b, face).item();
  CHECK(full > 0.0);
  for (int first = 0; first < 3; ++first) CHECK(loss_facep(a, b, face, first).item() <= full);
  CHECK_THROWS_AS(loss_facep(a, b, face, 3), std::out_of_range);

  EmbedderSpec tiny;
  tiny.layers = {{"a", 3, 3, 1}, {"b", 4, 2, 2}};
  tiny.dims = 4;
  const ToyEmbedder<double> small(EmbedderKind::kFace, tiny, 9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 r(seed);
    CHECK(gradcheck([&](const auto& v) { return loss_facep(v[0], v[1], small); },
                    {random_tensor({1, 3, 4, 4}, r, 0, 1), random_tensor({1, 3, 4, 4}, r, 0, 1)})
              .relative_error < 1e-4);
  }
}

TEST_CASE("blend back") {
  std::mt19937_64 rng(5);
  const Frame frame = random_frame(40, 30, rng);
  const Box box{5, 8, 17, 20, true};
  const Frame c = random_frame(12, 12, rng);
  CHECK(blend_back(frame, box, c, BlendMask(12, 12, 0.f)) == frame);
  const Frame ones = blend_back(frame, box, c, BlendMask(12, 12, 1.f));
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 30; ++x)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(ones.rgb[ch](y, x) ==
              (box.contains(x + 0.5f, y + 0.5f) ? c.rgb[ch](y - box.y0, x - box.x0) : frame.rgb[ch](y, x)));

  std::uniform_int_distribution<int> pick(0, 1000);
  for (int trial = 0; trial < 200; ++trial) {
    const int x0 = pick(rng) % 25, y0 = pick(rng) % 35;
    const Box b{x0, y0, x0 + 1 + pick(rng) % (30 - x0), y0 + 1 + pick(rng) % (40 - y0), true};
    const int s = 4 + pick(rng) % 20;
    const Frame cc = random_frame(s, s, rng);
    BlendMask m(s, s);
    for (Eigen::Index i = 0; i < m.alpha.size(); ++i) m.alpha.data()[i] = float(pick(rng) % 2);
    const Frame once = blend_back(frame, b, cc, m);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 30; ++x)
        if (!b.contains(x + 0.5f, y + 0.5f))
          for (int ch = 0; ch < 3; ++ch) REQUIRE(once.rgb[ch](y, x) == frame.rgb[ch](y, x));
    // A binary mask makes the operation idempotent.
    CHECK(blend_back(once, b, cc, m) == once);
  }
  CHECK_THROWS_AS(blend_back(frame, Box{25, 0, 31, 6, true}, c, BlendMask(12, 12)), ShapeError);
  CHECK_THROWS_AS(blend_back(frame, Box{-1, 0, 5, 6, true}, c, BlendMask(12, 12)), ShapeError);
  CHECK_THROWS_AS(blend_back(frame, box, c, BlendMask(10, 12)), ShapeError);
}

TEST_CASE("crops and degradation") {
  std::mt19937_64 rng(6);
  const Frame f = random_frame(20, 20, rng);
  CHECK(crop_face(f, Box{0, 0, 20, 20, true}, 20) == f);
  const Frame flat(16, 16, 0.4f);
  const Frame blurred = gaussian_blur(flat, 1.5);
  for (const auto& p : blurred.rgb) CHECK((p - 0.4f).abs().maxCoeff() < 1e-6f);
  // Blur never raises the variance.
  const Frame bf = gaussian_blur(f, 1.0);
  auto var = [](const Plane& p) { return (p - p.mean()).square().mean(); };
  CHECK(var(bf.rgb[0]) < var(f.rgb[0]));

  const FRConfig cfg = small_config();
  Rng a(3), b(3);
  const Frame d1 = degrade(f, cfg, a), d2 = degrade(f, cfg, b);
  CHECK(d1 == d2);
  CHECK(d1.rgb[0].minCoeff() >= 0.f);
  CHECK(d1.rgb[0].maxCoeff() <= 1.f);
  CHECK_FALSE(d1 == f);
}

TEST_CASE("training samples and steps") {
  Providers providers;
  const FRConfig cfg = small_config();
  Rng rng(7);
  const auto& ds = small_dataset();
  const FRSample s = make_fr_sample(ds.records[0], ds.records[1], cfg, rng);
  CHECK(s.c0.height() == 16);
  CHECK(s.target == crop_face(ds.records[1].frame, face_box(ds.records[1].pose.keypoints, 64, 40), 16));
  const FRSample r = make_fr_sample(ds.records[0], ds.records[1], cfg, rng, &ds.records[2].frame);
  CHECK(r.c0 == crop_face(ds.records[2].frame, face_box(ds.records[1].pose.keypoints, 64, 40), 16));

  FRModel m1(cfg, providers, 4), m2(cfg, providers, 4);
  Rng r1(1), r2(1);
  for (int step = 0; step < 2; ++step) {
    const LossReport a = m1.train_step(make_fr_batch(ds, cfg, r1));
    const LossReport b = m2.train_step(make_fr_batch(ds, cfg, r2));
    CHECK(a == b);
    for (const auto& [name, value] : a.terms) CHECK(std::isfinite(value));
  }
  FRConfig bad = cfg;
  bad.lambda_rec = std::nan("");
  FRModel mb(bad, providers, 1);
  CHECK_THROWS_AS(mb.train_step(make_fr_batch(ds, cfg, r1)), TrainingError);
}

TEST_CASE("config round trip") {
  FRConfig c = small_config();
  c.blur_sigma = {0.25, 1.0};
  const FRConfig back = FRConfig::from(c.to_config());
  CHECK(back.crop == 16);
  CHECK(back.blur_sigma == c.blur_sigma);
  CHECK(back.adam.lr == 1e-4);
  Config bad = c.to_config();
  bad.set("fr.crop", 18.0);
  CHECK_THROWS_AS(FRConfig::from(bad), ConfigError);
}

TEST_CASE("toy-face training smoke") {
  Providers providers;
  const FRConfig cfg;
  const Dataset ds = generate_dataset(10, 20, {128, 80}, 5);
  FRModel m(cfg, providers, 1);
  Rng rng(3);
  std::vector<double> rec;
  for (int step = 0; step < 200; ++step) rec.push_back(m.train_step(make_fr_batch(ds, cfg, rng)).get("rec"));
  double head = 0, tail = 0;
  for (int i = 0; i < 5; ++i) {
    head += rec[i];
    tail += rec[rec.size() - 5 + i];
  }
  CHECK(tail <= 0.5 * head);
}
