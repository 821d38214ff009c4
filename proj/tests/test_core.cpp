#include "doctest.h"
#include "reenact/core.hpp"
#include "reenact/image_io.hpp"

#include <random>

using namespace reenact;

namespace {

SemanticMap random_map(int h, int w, int n_labels, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, n_labels - 1);
  SemanticMap m(h, w);
  for (Eigen::Index i = 0; i < m.labels.size(); ++i) m.labels.data()[i] = std::uint8_t(d(rng));
  return m;
}

Frame random_frame(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(0.f, 1.f);
  Frame f(h, w);
  for (auto& p : f.rgb) p = p.unaryExpr([&](float) { return d(rng); });
  return f;
}

}  // namespace

TEST_CASE("label space layout") {
  const auto& ls = LabelSpace::standard();
  CHECK(ls.body_count() == 22);
  CHECK(ls.total_count() == 27);
  CHECK(ls.name(0) == "background");
  CHECK(ls.name(kLeftHand) == "left-hand");
  CHECK(ls.name(kRightHand) == "right-hand");
  CHECK(int(kEyebrows) == 22);
  CHECK(int(kInnerMouth) == 26);
  CHECK_THROWS_AS(ls.name(27), InvalidLabelError);
}

TEST_CASE("one_hot") {
  SemanticMap bg(4, 3);
  auto oh = one_hot(bg, 22);
  REQUIRE(oh.size() == 22);
  CHECK((oh[0] == 1.f).all());
  for (int c = 1; c < 22; ++c) CHECK((oh[c] == 0.f).all());

  SemanticMap single(4, 3);
  single(2, 1) = 5;
  oh = one_hot(single, 22);
  CHECK(oh[5].sum() == 1.f);
  CHECK(oh[5](2, 1) == 1.f);

  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    auto m = random_map(7, 5, 22, rng);
    auto channels = one_hot(m, 22);
    Plane total = Plane::Zero(7, 5);
    for (auto& c : channels) total += c;
    CHECK((total == 1.f).all());
    CHECK(argmax(channels) == m);
    CHECK((binarize(m).alpha == 1.f - channels[0]).all());
  }
  single(0, 0) = 22;
  CHECK_THROWS_AS(one_hot(single, 22), InvalidLabelError);
}

TEST_CASE("binarize") {
  CHECK((binarize(SemanticMap(3, 3)).alpha == 0.f).all());
  CHECK((binarize(SemanticMap(3, 3, kFace)).alpha == 1.f).all());
  std::mt19937_64 rng(12);
  auto m = random_map(9, 6, 4, rng);
  int k = 0;
  for (Eigen::Index i = 0; i < m.labels.size(); ++i) k += m.labels.data()[i] != 0;
  CHECK(binarize(m).alpha.sum() == float(k));
}

TEST_CASE("blend limits and linearity") {
  std::mt19937_64 rng(13);
  auto z = random_frame(5, 4, rng), b = random_frame(5, 4, rng);
  CHECK(blend(z, BlendMask(5, 4, 1.f), b) == z);
  CHECK(blend(z, BlendMask(5, 4, 0.f), b) == b);
  auto half = blend(Frame(5, 4, 1.f), BlendMask(5, 4, 0.5f), Frame(5, 4, 0.f));
  for (auto& p : half.rgb) CHECK((p == 0.5f).all());
  BlendMask m(5, 4);
  std::uniform_real_distribution<float> d(0.f, 1.f);
  m.alpha = m.alpha.unaryExpr([&](float) { return d(rng); });
  auto f1 = blend(z, m, b), f2 = blend(b, m, z);
  for (int c = 0; c < 3; ++c) CHECK(((f1.rgb[c] + f2.rgb[c]) - (z.rgb[c] + b.rgb[c])).abs().maxCoeff() < 1e-6f);
  CHECK_THROWS_AS(blend(z, BlendMask(4, 4), b), ShapeError);
}

TEST_CASE("semantic map codec") {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 10; ++t) {
    auto m = random_map(13 + t, 7 + t, 22, rng);
    CHECK(decode_map(encode_map(m)) == m);
  }
  auto face = random_map(8, 8, 27, rng);
  CHECK(decode_map(encode_map(face), 27) == face);
  CHECK_THROWS_AS(decode_map(encode_map(face), 22), FormatError);
  CHECK_THROWS_AS(encode_map(SemanticMap(0, 0)), FormatError);
  CHECK_THROWS_AS(decode_map(std::vector<std::uint8_t>{1, 2, 3}), FormatError);
}

TEST_CASE("frame, dense and keypoint codecs are lossless on 8-bit data") {
  std::mt19937_64 rng(15);
  auto f = random_frame(11, 9, rng);
  quantize(f);
  CHECK(decode_frame(encode_frame(f)) == f);

  Frame dense(6, 5);
  std::uniform_int_distribution<int> part(0, 24);
  for (Eigen::Index i = 0; i < dense.rgb[2].size(); ++i) {
    dense.rgb[0].data()[i] = quantize8(float(i) / 30.f);
    dense.rgb[1].data()[i] = quantize8(1.f - float(i) / 30.f);
    dense.rgb[2].data()[i] = float(part(rng));
  }
  CHECK(decode_dense(encode_dense(dense)) == dense);
  dense.rgb[2](0, 0) = 25.f;
  CHECK_THROWS_AS(encode_dense(dense), FormatError);

  std::vector<Keypoint> kps{{"neck", 12.345678f, 3.25f, true}, {"l_wrist", -1.f / 3.f, 7.f, false}};
  CHECK(decode_keypoints(encode_keypoints(kps)) == kps);
  CHECK_THROWS_AS(decode_keypoints("neck 1 2\n"), FormatError);
}
