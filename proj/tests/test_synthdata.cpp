#include "doctest.h"
#include "reenact/image_io.hpp"
#include "reenact/synthdata.hpp"

#include <filesystem>
#include <set>
#include <sstream>

using namespace reenact;

namespace {

int count_labels(const SemanticMap& m, std::initializer_list<int> labels) {
  int n = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      for (int l : labels) n += m(y, x) == l;
  return n;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("reenact_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("render is deterministic and consistent") {
  BodyParams body;
  const auto a = render_person(body, PoseParams::canonical(), {}, 3);
  const auto b = render_person(body, PoseParams::canonical(), {}, 3);
  CHECK(a == b);
  CHECK(a.parsing.height() == 128);
  CHECK(a.parsing.width() == 80);
  CHECK(binarize(a.parsing).alpha.sum() > 0.f);

  // Dense part index is background exactly where the parsing is.
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 80; ++x) {
      const bool bg = a.parsing(y, x) == kBackground;
      CHECK_EQ(bg, a.pose.dense_render.rgb[2](y, x) == 0.f);
      CHECK(a.pose.dense_render.rgb[2](y, x) <= 24.f);
      if (bg)
        for (int c = 0; c < 3; ++c) CHECK(a.frame.rgb[c](y, x) == a.background.rgb[c](y, x));
    }
}

TEST_CASE("keypoints sit on the figure") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto seq = sample_sequence(BodyParams::random(rng), 6, rng());
    for (const auto& r : seq)
      for (const auto& k : r.pose.keypoints) {
        bool near = false;
        for (int dy = -2; dy <= 2 && !near; ++dy)
          for (int dx = -2; dx <= 2 && !near; ++dx) {
            const int y = int(k.y) + dy, x = int(k.x) + dx;
            near = y >= 0 && x >= 0 && y < 128 && x < 80 && r.parsing(y, x) != kBackground;
          }
        CHECK_MESSAGE(near, k.name);
      }
  }
}

TEST_CASE("one-hot channel sums equal brute-force label counts") {
  BodyParams body;
  body.outfit = Outfit::kDress;
  body.hat = true;
  const auto r = render_person(body, PoseParams::canonical(), {});
  const auto oh = one_hot(r.parsing, kBodyLabelCount);
  for (int l = 0; l < kBodyLabelCount; ++l) CHECK(int(oh[l].sum()) == count_labels(r.parsing, {l}));
}

TEST_CASE("doubling arm width doubles arm pixels") {
  BodyParams body;
  body.gloves = true;
  body.sleeves = false;
  body.arm_width = 0.03f;
  const int thin = count_labels(render_person(body, PoseParams::canonical(), {}).parsing, {kLeftArm, kRightArm});
  body.arm_width = 0.06f;
  const int wide = count_labels(render_person(body, PoseParams::canonical(), {}).parsing, {kLeftArm, kRightArm});
  const double ratio = double(wide) / double(thin);
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}

TEST_CASE("canonical pose is left/right symmetric") {
  auto mirror_label = [](int l) {
    switch (l) {
      case kLeftArm: return int(kRightArm);
      case kRightArm: return int(kLeftArm);
      case kLeftLeg: return int(kRightLeg);
      case kRightLeg: return int(kLeftLeg);
      case kLeftShoe: return int(kRightShoe);
      case kRightShoe: return int(kLeftShoe);
      case kLeftHand: return int(kRightHand);
      case kRightHand: return int(kLeftHand);
      default: return l;
    }
  };
  for (Outfit o : {Outfit::kShirtPants, Outfit::kDress, Outfit::kShirtSkirt}) {
    BodyParams body;
    body.outfit = o;
    const auto m = render_person(body, PoseParams::canonical(), {}).parsing;
    int mismatch = 0, fg = 0;
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        fg += m(y, x) != kBackground;
        mismatch += mirror_label(m(y, x)) != m(y, m.width() - 1 - x);
      }
    CHECK(double(mismatch) <= 0.01 * fg);
  }
}

TEST_CASE("placement and parameter errors") {
  BodyParams body;
  PoseParams pose;
  pose.tx = 0.4f;
  CHECK_THROWS_AS(render_person(body, pose, {}), PlacementError);
  body.torso_width = -1.f;
  CHECK_THROWS_AS(render_person(body, PoseParams::canonical(), {}), ConfigError);
  pose = PoseParams::canonical();
  pose.l_knee = 3.f;
  CHECK_THROWS_AS(render_person(BodyParams{}, pose, {}), ConfigError);
}

TEST_CASE("sequences") {
  BodyParams body;
  const auto one = sample_sequence(body, 1, 9);
  REQUIRE(one.size() == 1);
  const auto canonical = render_person(body, PoseParams::canonical(), {});
  CHECK(one[0].parsing == canonical.parsing);
  CHECK(one[0].pose == canonical.pose);

  SequenceOptions opt;
  std::vector<PoseParams> poses;
  const auto seq = sample_sequence(body, 40, 21, {}, "p007", opt, &poses);
  REQUIRE(seq.size() == 40);
  REQUIRE(poses.size() == 40);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(seq[i].person_id == "p007");
    CHECK(seq[i].frame_index == int(i));
    CHECK(poses[i].within_limits());
    if (i == 0) continue;
    const auto a = poses[i - 1].angles(), b = poses[i].angles();
    for (int j = 0; j < PoseParams::kAngleCount; ++j) CHECK(std::abs(a[j] - b[j]) <= opt.max_angle_delta + 1e-6f);
    CHECK(std::abs(poses[i].tx - poses[i - 1].tx) <= opt.max_drift + 1e-6f);
  }
  CHECK(sample_sequence(body, 40, 21, {}, "p007") == seq);
  CHECK_THROWS_AS(sample_sequence(body, 0, 1), ConfigError);
}

TEST_CASE("training pairs") {
  const Dataset ds = generate_dataset(2, 30, {}, 4);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    auto [a, b] = sample_training_pair(ds, 0, rng);
    CHECK(a == b);
  }
  for (int window : {3, 250}) {
    for (int i = 0; i < 10000; ++i) {
      auto [a, b] = sample_training_pair(ds, window, rng);
      REQUIRE(a->person_id == b->person_id);
      REQUIRE(std::abs(a->frame_index - b->frame_index) <= window);
    }
  }
  Dataset single;
  single.records.push_back(ds.records[0]);
  CHECK_THROWS_AS(sample_training_pair(single, 5, rng), ExhaustionError);
  CHECK_THROWS_AS(sample_training_pair(Dataset{}, 0, rng), ExhaustionError);
}

TEST_CASE("dataset round trip") {
  const Dataset ds = generate_dataset(2, 3, {64, 40}, 8);
  const auto dir = temp_dir("dataset");
  write_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  CHECK(back.size.height == 64);
  CHECK(back.size.width == 40);
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) CHECK(back.records[i] == ds.records[i]);

  // The manifest's person count matches a recount of the records.
  std::istringstream in(read_text(dir / "manifest"));
  std::string line;
  std::set<std::string> persons;
  while (std::getline(in, line))
    if (line.rfind("person ", 0) == 0) persons.insert(line.substr(7, line.find(' ', 7) - 7));
  CHECK(persons.size() == ds.persons().size());

  std::filesystem::remove(record_stem(dir, "p001", 2).string() + ".map.png");
  CHECK_THROWS(load_dataset(dir));
  write_text(dir / "manifest", "reenact-dataset 1\nsize 40 64\nperson p000 x\n");
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  write_text(dir / "manifest", "garbage");
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
}
