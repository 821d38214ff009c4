#include "reenact/synthdata.hpp"

#include "reenact/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

namespace reenact {
namespace {

struct Vec2 {
  float x = 0.f, y = 0.f;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(float s) const { return {x * s, y * s}; }
  float dot(Vec2 o) const { return x * o.x + y * o.y; }
  float norm() const { return std::sqrt(x * x + y * y); }
};

// Unit vector pointing "down" rotated by theta, and its right-hand normal.
Vec2 down(float theta) { return {std::sin(theta), std::cos(theta)}; }
Vec2 across(float theta) { return {std::cos(theta), -std::sin(theta)}; }

enum class Kind { kRect, kDisc, kEllipse, kCap };

// One painted primitive. Rect covers the axis a->b with half-widths r0 at a
// and r1 at b (a trapezoid when they differ). Disc: center a, radius r0.
// Ellipse: center a, radii (r0 across, r1 along), oriented by theta. Cap: the
// part of disc (a, r0) whose local y is below -r1*r0.
struct Primitive {
  Kind kind = Kind::kRect;
  Vec2 a, b;
  float r0 = 0.f, r1 = 0.f, theta = 0.f;
  std::uint8_t label = kBackground;
  std::uint8_t part = 0;
  std::uint8_t part_alt = 0;  // used on the image-left half of discs/caps when nonzero
  Color color;
};

struct Sample {
  float u = 0.f, v = 0.f;
  bool alt = false;
};

bool hit(const Primitive& s, Vec2 p, Sample& out) {
  switch (s.kind) {
    case Kind::kRect: {
      const Vec2 axis = s.b - s.a;
      const float len = axis.norm();
      if (len <= 0.f) return false;
      const Vec2 d = axis * (1.f / len);
      const Vec2 n{d.y, -d.x};
      const Vec2 q = p - s.a;
      const float t = q.dot(d) / len;
      if (t < 0.f || t > 1.f) return false;
      const float half = s.r0 + (s.r1 - s.r0) * t;
      const float off = q.dot(n);
      if (std::abs(off) > half) return false;
      out.u = t;
      out.v = 0.5f * (off / half + 1.f);
      return true;
    }
    case Kind::kDisc:
    case Kind::kCap: {
      const Vec2 q = p - s.a;
      const float dist = q.norm();
      if (dist > s.r0) return false;
      const Vec2 dn = down(s.theta), ac = across(s.theta);
      const float ly = q.dot(dn), lx = q.dot(ac);
      if (s.kind == Kind::kCap && ly > -s.r1 * s.r0) return false;
      out.u = float((std::atan2(ly, lx) + std::numbers::pi) / (2 * std::numbers::pi));
      out.v = dist / s.r0;
      out.alt = lx < 0.f;
      return true;
    }
    case Kind::kEllipse: {
      const Vec2 q = p - s.a;
      const float lx = q.dot(across(s.theta)) / s.r0, ly = q.dot(down(s.theta)) / s.r1;
      const float rr = lx * lx + ly * ly;
      if (rr > 1.f) return false;
      out.u = float((std::atan2(ly, lx) + std::numbers::pi) / (2 * std::numbers::pi));
      out.v = std::sqrt(rr);
      out.alt = lx < 0.f;
      return true;
    }
  }
  return false;
}

void bounds(const Primitive& s, float& x0, float& y0, float& x1, float& y1) {
  float r = 0.f;
  switch (s.kind) {
    case Kind::kRect:
      r = std::max(s.r0, s.r1);
      x0 = std::min(s.a.x, s.b.x) - r;
      x1 = std::max(s.a.x, s.b.x) + r;
      y0 = std::min(s.a.y, s.b.y) - r;
      y1 = std::max(s.a.y, s.b.y) + r;
      return;
    case Kind::kDisc:
    case Kind::kCap:
      r = s.r0;
      break;
    case Kind::kEllipse:
      r = std::max(s.r0, s.r1);
      break;
  }
  x0 = s.a.x - r;
  x1 = s.a.x + r;
  y0 = s.a.y - r;
  y1 = s.a.y + r;
}

float shade(float v) { return 0.8f + 0.2f * (1.f - (2.f * v - 1.f) * (2.f * v - 1.f)); }

Color mix(Color c, float k) { return {c.r * k, c.g * k, c.b * k}; }

// Dense part indices, following the usual 24-part body surface layout.
enum Part : std::uint8_t {
  kPartTorso = 2,
  kPartRightHand = 3,
  kPartLeftHand = 4,
  kPartLeftFoot = 5,
  kPartRightFoot = 6,
  kPartUpperLegRight = 9,
  kPartUpperLegLeft = 10,
  kPartLowerLegRight = 13,
  kPartLowerLegLeft = 14,
  kPartUpperArmLeft = 15,
  kPartUpperArmRight = 16,
  kPartLowerArmLeft = 19,
  kPartLowerArmRight = 20,
  kPartHeadRight = 23,
  kPartHeadLeft = 24,
};

struct Figure {
  std::vector<Primitive> prims;
  std::vector<Keypoint> keypoints;
  float head_radius_px = 0.f;
};

void add_keypoint(std::vector<Keypoint>& k, const std::string& name, Vec2 p) { k.push_back({name, p.x, p.y, true}); }

Figure build_figure(const BodyParams& body, const PoseParams& pose, RenderSize size) {
  Figure fig;
  const float u = float(size.height) * pose.scale;
  const Vec2 pelvis{0.5f * float(size.width) + pose.tx * float(size.height),
                    0.53f * float(size.height) + pose.ty * float(size.height)};
  const float lean = pose.torso_lean;
  const Vec2 neck = pelvis - down(lean) * (body.torso_length * u);
  const float head_angle = lean + pose.head_tilt;
  const Vec2 head = neck - down(head_angle) * ((body.neck_length + body.head_radius) * u);
  const float hr = body.head_radius * u;
  fig.head_radius_px = hr;

  const std::uint8_t torso_label = body.outfit == Outfit::kDress   ? kDress
                                   : body.outfit == Outfit::kCoatPants ? kCoat
                                                                      : kUpperClothes;
  const bool pants = body.outfit == Outfit::kShirtPants || body.outfit == Outfit::kCoatPants;
  auto rect = [&](Vec2 a, Vec2 b, float r0, float r1, std::uint8_t label, std::uint8_t part, Color c) {
    fig.prims.push_back({Kind::kRect, a, b, r0, r1, 0.f, label, part, 0, c});
  };
  auto disc = [&](Vec2 c, float r, std::uint8_t label, std::uint8_t part, Color col, float theta = 0.f,
                  std::uint8_t alt = 0) {
    fig.prims.push_back({Kind::kDisc, c, {}, r, 0.f, theta, label, part, alt, col});
  };

  if (body.long_hair)
    fig.prims.push_back({Kind::kEllipse, head + down(head_angle) * (0.6f * hr), {}, 1.2f * hr, 1.5f * hr, head_angle,
                         kHair, kPartHeadRight, kPartHeadLeft, body.hair});

  // Legs.
  const float leg_r = 0.5f * body.leg_width * u;
  struct LegJoints {
    Vec2 hip, knee, ankle;
    float lower_dir;
  } legs[2];
  for (int side = 0; side < 2; ++side) {
    const float sign = side == 0 ? 1.f : -1.f;  // 0 = left (image right)
    const float hip_angle = side == 0 ? pose.l_hip : pose.r_hip;
    const float knee_angle = side == 0 ? pose.l_knee : pose.r_knee;
    LegJoints& j = legs[side];
    j.hip = pelvis + across(lean) * (sign * (0.5f * body.torso_width - 0.5f * body.leg_width) * u);
    j.knee = j.hip + down(hip_angle) * (body.upper_leg_length * u);
    j.lower_dir = hip_angle + knee_angle;
    j.ankle = j.knee + down(j.lower_dir) * (body.lower_leg_length * u);
    const std::uint8_t leg_label = pants ? kPants : (side == 0 ? kLeftLeg : kRightLeg);
    const Color upper_col = pants ? body.lower : body.skin;
    const Color lower_col = pants ? body.lower : body.skin;
    rect(j.hip, j.knee, leg_r, leg_r, leg_label, side == 0 ? kPartUpperLegLeft : kPartUpperLegRight, upper_col);
    disc(j.knee, leg_r, leg_label, side == 0 ? kPartUpperLegLeft : kPartUpperLegRight, upper_col);
    rect(j.knee, j.ankle, leg_r, leg_r * 0.9f, leg_label, side == 0 ? kPartLowerLegLeft : kPartLowerLegRight,
         lower_col);
  }
  for (int side = 0; side < 2; ++side) {
    const LegJoints& j = legs[side];
    const float sign = side == 0 ? 1.f : -1.f;
    const Vec2 c = j.ankle + down(j.lower_dir) * (0.25f * leg_r) + across(j.lower_dir) * (sign * 0.2f * leg_r);
    fig.prims.push_back({Kind::kEllipse, c, {}, 1.3f * leg_r, 0.75f * leg_r, j.lower_dir,
                         std::uint8_t(side == 0 ? kLeftShoe : kRightShoe),
                         std::uint8_t(side == 0 ? kPartLeftFoot : kPartRightFoot), 0, body.shoes});
  }

  // Skirt or dress below the waist, then the torso itself.
  const float torso_r = 0.5f * body.torso_width * u;
  if (body.outfit == Outfit::kDress || body.outfit == Outfit::kShirtSkirt) {
    const float reach = body.outfit == Outfit::kDress ? 0.95f : 0.6f;
    const float flare = body.outfit == Outfit::kDress ? 1.45f : 1.3f;
    const Color c = body.outfit == Outfit::kDress ? body.upper : body.lower;
    rect(pelvis - down(lean) * (0.08f * u), pelvis + down(0.f) * (reach * body.upper_leg_length * u), torso_r,
         torso_r * flare, body.outfit == Outfit::kDress ? kDress : kSkirt, kPartTorso, c);
  }
  const Color torso_col = body.outfit == Outfit::kCoatPants ? body.accessory : body.upper;
  rect(pelvis + down(lean) * (0.02f * u), neck, torso_r, torso_r, torso_label, kPartTorso, torso_col);
  rect(neck + down(lean) * (0.01f * u), head, 0.3f * hr, 0.3f * hr, kTorsoSkin, kPartTorso, body.skin);

  // Head, hair cap, optional hat.
  disc(head, hr, kFace, kPartHeadRight, body.skin, head_angle, kPartHeadLeft);
  fig.prims.push_back({Kind::kCap, head, {}, hr, 0.35f, head_angle, kHair, kPartHeadRight, kPartHeadLeft, body.hair});
  if (body.hat)
    fig.prims.push_back({Kind::kEllipse, head - down(head_angle) * (0.8f * hr), {}, 1.15f * hr, 0.45f * hr,
                         head_angle, kHat, kPartHeadRight, kPartHeadLeft, body.accessory});

  // Arms and hands in front of the torso.
  const float arm_r = 0.5f * body.arm_width * u;
  Vec2 shoulders[2], elbows[2], wrists[2];
  float hand_dir[2];
  for (int side = 0; side < 2; ++side) {
    const float sign = side == 0 ? 1.f : -1.f;
    const float sh = lean + (side == 0 ? pose.l_shoulder : pose.r_shoulder);
    const float el = sh + (side == 0 ? pose.l_elbow : pose.r_elbow);
    const Vec2 shoulder = neck + across(lean) * (sign * (torso_r - arm_r)) + down(lean) * arm_r;
    const Vec2 elbow = shoulder + down(sh) * (body.upper_arm_length * u);
    const Vec2 wrist = elbow + down(el) * (body.lower_arm_length * u);
    shoulders[side] = shoulder;
    elbows[side] = elbow;
    wrists[side] = wrist;
    hand_dir[side] = el;
    const std::uint8_t arm_label = side == 0 ? kLeftArm : kRightArm;
    const std::uint8_t upper_label = body.sleeves ? torso_label : arm_label;
    const Color upper_col = body.sleeves ? torso_col : body.skin;
    rect(shoulder, elbow, arm_r, arm_r, upper_label, side == 0 ? kPartUpperArmLeft : kPartUpperArmRight, upper_col);
    disc(elbow, arm_r, arm_label, side == 0 ? kPartLowerArmLeft : kPartLowerArmRight, body.skin);
    rect(elbow, wrist, arm_r, arm_r, arm_label, side == 0 ? kPartLowerArmLeft : kPartLowerArmRight, body.skin);
  }
  std::vector<Keypoint>& k = fig.keypoints;
  add_keypoint(k, "head", head);
  add_keypoint(k, "neck", neck);
  const char* sides[2] = {"l", "r"};
  for (int side = 0; side < 2; ++side) {
    const std::string s = sides[side];
    add_keypoint(k, s + "_shoulder", shoulders[side]);
    add_keypoint(k, s + "_elbow", elbows[side]);
    add_keypoint(k, s + "_wrist", wrists[side]);
  }
  add_keypoint(k, "pelvis", pelvis);
  for (int side = 0; side < 2; ++side) {
    const std::string s = sides[side];
    add_keypoint(k, s + "_hip", legs[side].hip);
    add_keypoint(k, s + "_knee", legs[side].knee);
    add_keypoint(k, s + "_ankle", legs[side].ankle);
  }

  // Hands: palm disc plus three finger strokes ending at the hand landmarks.
  const float hs = body.hand_size * u;
  for (int side = 0; side < 2; ++side) {
    const float sign = side == 0 ? 1.f : -1.f;
    const float d = hand_dir[side];
    const Vec2 w = wrists[side];
    const Vec2 palm = w + down(d) * (0.5f * hs);
    const Vec2 index = w + down(d) * (1.3f * hs);
    const Vec2 thumb = w + down(d + sign * 0.7f) * (1.0f * hs);
    const Vec2 pinky = w + down(d - sign * 0.5f) * (1.1f * hs);
    const std::uint8_t label = body.gloves ? kGlove : (side == 0 ? kLeftArm : kRightArm);
    const std::uint8_t part = side == 0 ? kPartLeftHand : kPartRightHand;
    const Color col = body.gloves ? body.accessory : body.skin;
    disc(palm, 0.5f * hs, label, part, col);
    for (Vec2 tip : {index, thumb, pinky}) rect(palm, tip, 0.16f * hs, 0.12f * hs, label, part, col);
    const std::string s = sides[side];
    add_keypoint(k, s + "_hand_wrist", w);
    add_keypoint(k, s + "_hand_palm", palm);
    add_keypoint(k, s + "_hand_thumb", thumb);
    add_keypoint(k, s + "_hand_index", index);
    add_keypoint(k, s + "_hand_pinky", pinky);
  }

  // Face landmarks in head-local coordinates (x toward image right, y down).
  const Vec2 hx = across(head_angle), hy = down(head_angle);
  auto face_pt = [&](float lx, float ly) { return head + hx * (lx * hr) + hy * (ly * hr); };
  const std::pair<const char*, std::pair<float, float>> face[] = {
      {"face_brow_l_outer", {0.5f, -0.36f}}, {"face_brow_l_inner", {0.14f, -0.4f}},
      {"face_brow_r_inner", {-0.14f, -0.4f}}, {"face_brow_r_outer", {-0.5f, -0.36f}},
      {"face_eye_l", {0.32f, -0.17f}},        {"face_eye_r", {-0.32f, -0.17f}},
      {"face_nose_top", {0.f, -0.1f}},        {"face_nose_tip", {0.f, 0.16f}},
      {"face_lip_l", {0.3f, 0.46f}},          {"face_lip_top", {0.f, 0.37f}},
      {"face_lip_r", {-0.3f, 0.46f}},         {"face_lip_bottom", {0.f, 0.6f}},
      {"face_mouth_l", {0.17f, 0.47f}},       {"face_mouth_r", {-0.17f, 0.47f}},
  };
  for (const auto& [name, p] : face) add_keypoint(k, name, face_pt(p.first, p.second));
  return fig;
}

Frame render_background(RenderSize size, std::uint64_t seed) {
  Rng rng(seed * 0x9E3779B97F4A7C15ull + 17);
  std::uniform_real_distribution<float> uni(0.f, 1.f);
  const Color top{0.3f + 0.6f * uni(rng), 0.3f + 0.6f * uni(rng), 0.3f + 0.6f * uni(rng)};
  const Color floor{0.2f + 0.5f * uni(rng), 0.2f + 0.5f * uni(rng), 0.2f + 0.5f * uni(rng)};
  const float horizon = (0.78f + 0.08f * uni(rng)) * float(size.height);
  const float freq = 0.15f + 0.3f * uni(rng);
  Frame f(size.height, size.width);
  for (int y = 0; y < size.height; ++y)
    for (int x = 0; x < size.width; ++x) {
      const float t = float(y) / float(size.height);
      const bool is_floor = float(y) >= horizon;
      const Color base = is_floor ? floor : top;
      const float tex = 0.04f * std::sin(freq * float(x) + 0.7f * float(y) * freq);
      const float k = (is_floor ? 0.9f : 1.f - 0.25f * t) + tex;
      f.rgb[0](y, x) = base.r * k;
      f.rgb[1](y, x) = base.g * k;
      f.rgb[2](y, x) = base.b * k;
    }
  // A few flat props.
  const int props = 2 + int(uni(rng) * 3.f);
  for (int i = 0; i < props; ++i) {
    const int w = 4 + int(uni(rng) * float(size.width) * 0.3f);
    const int h = 4 + int(uni(rng) * float(size.height) * 0.3f);
    const int x0 = int(uni(rng) * float(size.width - w));
    const int y0 = int(uni(rng) * float(size.height - h));
    const Color c{uni(rng), uni(rng), uni(rng)};
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        f.rgb[0](y, x) = c.r;
        f.rgb[1](y, x) = c.g;
        f.rgb[2](y, x) = c.b;
      }
  }
  f.clamp();
  quantize(f);
  return f;
}

void paint_disc(Frame& f, Vec2 c, float r, Color col) {
  const int x0 = std::max(0, int(std::floor(c.x - r))), x1 = std::min(f.width() - 1, int(std::ceil(c.x + r)));
  const int y0 = std::max(0, int(std::floor(c.y - r))), y1 = std::min(f.height() - 1, int(std::ceil(c.y + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const Vec2 p{float(x) + 0.5f, float(y) + 0.5f};
      if ((p - c).norm() <= r) {
        f.rgb[0](y, x) = col.r;
        f.rgb[1](y, x) = col.g;
        f.rgb[2](y, x) = col.b;
      }
    }
}

void paint_segment(Frame& f, Vec2 a, Vec2 b, float half_width, Color col) {
  const Primitive seg{Kind::kRect, a, b, half_width, half_width, 0.f, 0, 0, 0, col};
  float bx0, by0, bx1, by1;
  bounds(seg, bx0, by0, bx1, by1);
  for (int y = std::max(0, int(by0)); y <= std::min(f.height() - 1, int(by1)); ++y)
    for (int x = std::max(0, int(bx0)); x <= std::min(f.width() - 1, int(bx1)); ++x) {
      Sample s;
      const Vec2 p{float(x) + 0.5f, float(y) + 0.5f};
      if (hit(seg, p, s) || (p - a).norm() <= half_width || (p - b).norm() <= half_width) {
        f.rgb[0](y, x) = col.r;
        f.rgb[1](y, x) = col.g;
        f.rgb[2](y, x) = col.b;
      }
    }
}

Vec2 kp(const std::vector<Keypoint>& k, const std::string& name) {
  for (const auto& p : k)
    if (p.name == name) return {p.x, p.y};
  throw std::invalid_argument("missing keypoint " + name);
}

}  // namespace

void BodyParams::validate() const {
  const float lengths[] = {head_radius, neck_length, torso_length, torso_width, upper_arm_length, lower_arm_length,
                           arm_width, upper_leg_length, lower_leg_length, leg_width, hand_size};
  for (float v : lengths)
    if (!(v > 0.f)) throw ConfigError("body lengths and widths must be positive");
  if (arm_width >= torso_width || leg_width >= torso_width)
    throw ConfigError("limb widths must be narrower than the torso");
}

BodyParams BodyParams::random(Rng& rng) {
  std::uniform_real_distribution<float> uni(0.f, 1.f);
  auto in = [&](float lo, float hi) { return lo + (hi - lo) * uni(rng); };
  auto color = [&](float lo, float hi) { return Color{in(lo, hi), in(lo, hi), in(lo, hi)}; };
  BodyParams b;
  b.head_radius = in(0.048f, 0.06f);
  b.neck_length = in(0.02f, 0.035f);
  b.torso_length = in(0.22f, 0.26f);
  b.torso_width = in(0.10f, 0.20f);
  const float limb = in(0.92f, 1.08f);
  b.upper_arm_length = 0.11f * limb;
  b.lower_arm_length = 0.10f * limb;
  b.upper_leg_length = 0.18f * limb;
  b.lower_leg_length = 0.16f * limb;
  b.arm_width = in(0.028f, 0.046f);
  b.leg_width = in(0.04f, std::min(0.07f, 0.45f * b.torso_width));
  b.hand_size = in(0.026f, 0.034f);
  const float o = uni(rng);
  b.outfit = o < 0.4f ? Outfit::kShirtPants : o < 0.6f ? Outfit::kDress : o < 0.8f ? Outfit::kShirtSkirt
                                                                                   : Outfit::kCoatPants;
  b.sleeves = uni(rng) < 0.5f;
  b.long_hair = uni(rng) < 0.4f;
  b.hat = uni(rng) < 0.2f;
  b.gloves = uni(rng) < 0.1f;
  const float tone = in(0.25f, 0.95f);
  b.skin = Color{tone, tone * in(0.7f, 0.8f), tone * in(0.55f, 0.65f)};
  b.hair = color(0.02f, 0.6f);
  b.upper = color(0.05f, 0.95f);
  b.lower = color(0.05f, 0.95f);
  b.shoes = color(0.0f, 0.4f);
  b.accessory = color(0.1f, 0.95f);
  return b;
}

std::array<float, PoseParams::kAngleCount> PoseParams::angles() const {
  return {torso_lean, head_tilt, l_shoulder, r_shoulder, l_elbow, r_elbow, l_hip, r_hip, l_knee, r_knee};
}

void PoseParams::set_angles(const std::array<float, kAngleCount>& a) {
  torso_lean = a[0];
  head_tilt = a[1];
  l_shoulder = a[2];
  r_shoulder = a[3];
  l_elbow = a[4];
  r_elbow = a[5];
  l_hip = a[6];
  r_hip = a[7];
  l_knee = a[8];
  r_knee = a[9];
}

const std::array<std::pair<float, float>, PoseParams::kAngleCount>& PoseParams::limits() {
  static const std::array<std::pair<float, float>, kAngleCount> lim = {{
      {-0.15f, 0.15f},  // torso lean
      {-0.3f, 0.3f},    // head tilt
      {-0.2f, 2.6f},    // left shoulder
      {-2.6f, 0.2f},    // right shoulder
      {-1.6f, 1.6f},    // left elbow
      {-1.6f, 1.6f},    // right elbow
      {-0.3f, 0.7f},    // left hip
      {-0.7f, 0.3f},    // right hip
      {-1.2f, 0.3f},    // left knee
      {-0.3f, 1.2f},    // right knee
  }};
  return lim;
}

void PoseParams::clamp_to_limits() {
  auto a = angles();
  for (int i = 0; i < kAngleCount; ++i) a[i] = std::clamp(a[i], limits()[i].first, limits()[i].second);
  set_angles(a);
}

bool PoseParams::within_limits() const {
  const auto a = angles();
  for (int i = 0; i < kAngleCount; ++i)
    if (a[i] < limits()[i].first || a[i] > limits()[i].second) return false;
  return true;
}

const std::vector<std::pair<std::string, std::string>>& skeleton_edges() {
  static const std::vector<std::pair<std::string, std::string>> edges = {
      {"head", "neck"},         {"neck", "l_shoulder"}, {"l_shoulder", "l_elbow"}, {"l_elbow", "l_wrist"},
      {"neck", "r_shoulder"},   {"r_shoulder", "r_elbow"}, {"r_elbow", "r_wrist"}, {"neck", "pelvis"},
      {"pelvis", "l_hip"},      {"l_hip", "l_knee"},    {"l_knee", "l_ankle"},     {"pelvis", "r_hip"},
      {"r_hip", "r_knee"},      {"r_knee", "r_ankle"},
  };
  return edges;
}

const std::vector<std::string>& face_landmark_names() {
  static const std::vector<std::string> names = {
      "face_brow_l_outer", "face_brow_l_inner", "face_brow_r_inner", "face_brow_r_outer", "face_eye_l",
      "face_eye_r",        "face_nose_top",     "face_nose_tip",     "face_lip_l",        "face_lip_top",
      "face_lip_r",        "face_lip_bottom",   "face_mouth_l",      "face_mouth_r"};
  return names;
}

std::vector<std::pair<std::string, std::string>> hand_chains(char side) {
  const std::string s(1, side);
  return {{s + "_hand_wrist", s + "_hand_palm"},
          {s + "_hand_palm", s + "_hand_thumb"},
          {s + "_hand_palm", s + "_hand_index"},
          {s + "_hand_palm", s + "_hand_pinky"}};
}

Frame render_stick_figure(const std::vector<Keypoint>& keypoints, int height, int width) {
  static const Color limb_colors[] = {
      {1.f, 0.f, 0.f},   {1.f, 0.33f, 0.f}, {1.f, 0.66f, 0.f}, {1.f, 1.f, 0.f},  {0.66f, 1.f, 0.f},
      {0.33f, 1.f, 0.f}, {0.f, 1.f, 0.f},   {0.f, 1.f, 0.33f}, {0.f, 1.f, 0.66f}, {0.f, 1.f, 1.f},
      {0.f, 0.66f, 1.f}, {0.f, 0.33f, 1.f}, {0.f, 0.f, 1.f},   {0.33f, 0.f, 1.f},
  };
  Frame f(height, width, 0.f);
  const float scale = float(height) / 128.f;
  const auto& edges = skeleton_edges();
  auto find = [&](const std::string& n) -> const Keypoint* {
    for (const auto& k : keypoints)
      if (k.name == n) return &k;
    return nullptr;
  };
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Keypoint* a = find(edges[i].first);
    const Keypoint* b = find(edges[i].second);
    if (!a || !b || !a->visible || !b->visible) continue;
    paint_segment(f, {a->x, a->y}, {b->x, b->y}, 1.0f * scale, limb_colors[i]);
  }
  for (char side : {'l', 'r'}) {
    const Color c = side == 'l' ? Color{1.f, 0.5f, 1.f} : Color{0.5f, 1.f, 1.f};
    for (const auto& [from, to] : hand_chains(side)) {
      const Keypoint* a = find(from);
      const Keypoint* b = find(to);
      if (a && b && a->visible && b->visible) paint_segment(f, {a->x, a->y}, {b->x, b->y}, 0.5f * scale, c);
    }
  }
  for (const auto& n : face_landmark_names()) {
    const Keypoint* k = find(n);
    if (k && k->visible) paint_disc(f, {k->x, k->y}, 0.75f * scale, {1.f, 1.f, 1.f});
  }
  quantize(f);
  return f;
}

SampleRecord render_person(const BodyParams& body, const PoseParams& pose, RenderSize size, std::uint64_t scene_seed,
                           const std::string& person_id, int frame_index) {
  body.validate();
  if (size.height <= 0 || size.width <= 0) throw ConfigError("render size must be positive");
  if (!pose.within_limits()) throw ConfigError("pose angles outside joint limits");
  const Figure fig = build_figure(body, pose, size);
  for (const auto& p : fig.prims) {
    float x0, y0, x1, y1;
    bounds(p, x0, y0, x1, y1);
    if (x0 < 0.f || y0 < 0.f || x1 > float(size.width) || y1 > float(size.height))
      throw PlacementError("figure extends outside the frame");
  }
  SampleRecord rec;
  rec.person_id = person_id;
  rec.frame_index = frame_index;
  rec.background = render_background(size, scene_seed);
  rec.frame = rec.background;
  rec.parsing = SemanticMap(size.height, size.width);
  rec.pose.dense_render = Frame(size.height, size.width, 0.f);
  for (const auto& p : fig.prims) {
    float bx0, by0, bx1, by1;
    bounds(p, bx0, by0, bx1, by1);
    for (int y = std::max(0, int(by0)); y <= std::min(size.height - 1, int(by1)); ++y)
      for (int x = std::max(0, int(bx0)); x <= std::min(size.width - 1, int(bx1)); ++x) {
        Sample s;
        if (!hit(p, {float(x) + 0.5f, float(y) + 0.5f}, s)) continue;
        rec.parsing(y, x) = p.label;
        rec.pose.dense_render.rgb[0](y, x) = quantize8(s.u);
        rec.pose.dense_render.rgb[1](y, x) = quantize8(s.v);
        rec.pose.dense_render.rgb[2](y, x) = float(s.alt && p.part_alt ? p.part_alt : p.part);
        const Color c = mix(p.color, shade(p.kind == Kind::kRect ? s.v : 1.f - 0.5f * s.v));
        rec.frame.rgb[0](y, x) = c.r;
        rec.frame.rgb[1](y, x) = c.g;
        rec.frame.rgb[2](y, x) = c.b;
      }
  }
  // Facial features are color-only detail on the face region.
  const float hr = fig.head_radius_px;
  const auto& k = fig.keypoints;
  const Color brow = mix(body.hair, 0.6f), eye{0.05f, 0.05f, 0.08f}, lip{0.75f, 0.2f, 0.25f};
  const Color mouth{0.3f, 0.02f, 0.05f}, nose = mix(body.skin, 0.8f);
  paint_segment(rec.frame, kp(k, "face_brow_l_outer"), kp(k, "face_brow_l_inner"), 0.08f * hr, brow);
  paint_segment(rec.frame, kp(k, "face_brow_r_inner"), kp(k, "face_brow_r_outer"), 0.08f * hr, brow);
  paint_disc(rec.frame, kp(k, "face_eye_l"), 0.13f * hr, eye);
  paint_disc(rec.frame, kp(k, "face_eye_r"), 0.13f * hr, eye);
  paint_segment(rec.frame, kp(k, "face_nose_top"), kp(k, "face_nose_tip"), 0.07f * hr, nose);
  paint_segment(rec.frame, kp(k, "face_lip_l"), kp(k, "face_lip_r"), 0.12f * hr, lip);
  paint_segment(rec.frame, kp(k, "face_mouth_l"), kp(k, "face_mouth_r"), 0.05f * hr, mouth);
  // Feature paint stays inside the face region of the parsing.
  for (int y = 0; y < size.height; ++y)
    for (int x = 0; x < size.width; ++x)
      if (rec.parsing(y, x) == kBackground)
        for (int c = 0; c < 3; ++c) rec.frame.rgb[c](y, x) = rec.background.rgb[c](y, x);
  rec.frame.clamp();
  quantize(rec.frame);
  rec.pose.keypoints = fig.keypoints;
  rec.pose.stick_render = render_stick_figure(rec.pose.keypoints, size.height, size.width);
  return rec;
}

std::vector<SampleRecord> sample_sequence(const BodyParams& body, int length, std::uint64_t seed, RenderSize size,
                                          const std::string& person_id, SequenceOptions options,
                                          std::vector<PoseParams>* poses_out) {
  if (length < 1) throw ConfigError("sequence length must be at least 1");
  Rng rng(seed);
  std::normal_distribution<float> noise(0.f, 1.f);
  const std::uint64_t scene = seed ^ 0xA5A5A5A5ull;
  std::vector<SampleRecord> out;
  PoseParams pose = PoseParams::canonical();
  std::array<float, PoseParams::kAngleCount> vel{};
  float vx = 0.f, vy = 0.f;
  out.push_back(render_person(body, pose, size, scene, person_id, 0));
  if (poses_out) poses_out->assign(1, pose);
  for (int i = 1; i < length; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 24 && !placed; ++attempt) {
      const float damp = attempt < 12 ? 1.f : 0.25f;
      auto a = pose.angles();
      auto nv = vel;
      for (int j = 0; j < PoseParams::kAngleCount; ++j) {
        nv[j] = std::clamp(0.75f * vel[j] + 0.5f * damp * options.max_angle_delta * noise(rng),
                           -options.max_angle_delta, options.max_angle_delta);
        a[j] += nv[j];
      }
      PoseParams next = pose;
      next.set_angles(a);
      next.clamp_to_limits();
      const float nvx = std::clamp(0.8f * vx + 0.5f * damp * options.max_drift * noise(rng), -options.max_drift,
                                   options.max_drift);
      const float nvy = std::clamp(0.8f * vy + 0.5f * damp * options.max_drift * noise(rng), -options.max_drift,
                                   options.max_drift);
      next.tx = std::clamp(pose.tx + nvx, -0.05f, 0.05f);
      next.ty = std::clamp(pose.ty + nvy, -0.02f, 0.02f);
      try {
        out.push_back(render_person(body, next, size, scene, person_id, i));
      } catch (const PlacementError&) {
        vel.fill(0.f);
        continue;
      }
      vel = nv;
      vx = nvx;
      vy = nvy;
      pose = next;
      placed = true;
    }
    if (!placed) out.push_back(render_person(body, pose, size, scene, person_id, i));
    if (poses_out) poses_out->push_back(pose);
  }
  return out;
}

std::vector<std::string> Dataset::persons() const {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.person_id) == out.end()) out.push_back(r.person_id);
  return out;
}

std::vector<const SampleRecord*> Dataset::frames_of(const std::string& person) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.person_id == person) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->frame_index < b->frame_index; });
  return out;
}

Dataset generate_dataset(int persons, int frames, RenderSize size, std::uint64_t seed) {
  if (persons < 1 || frames < 1) throw ConfigError("dataset needs at least one person and one frame");
  Dataset ds;
  ds.size = size;
  Rng rng(seed);
  for (int p = 0; p < persons; ++p) {
    char id[16];
    std::snprintf(id, sizeof id, "p%03d", p);
    BodyParams body = BodyParams::random(rng);
    auto seq = sample_sequence(body, frames, rng(), size, id);
    for (auto& r : seq) ds.records.push_back(std::move(r));
  }
  return ds;
}

std::pair<const SampleRecord*, const SampleRecord*> sample_training_pair(const Dataset& dataset, int window,
                                                                         Rng& rng) {
  if (window < 0) throw ConfigError("pair window must be non-negative");
  std::map<std::string, std::vector<const SampleRecord*>> by_person;
  for (const auto& r : dataset.records) by_person[r.person_id].push_back(&r);
  std::vector<const SampleRecord*> anchors;
  for (const auto& [id, recs] : by_person)
    if (window == 0 || recs.size() >= 2) anchors.insert(anchors.end(), recs.begin(), recs.end());
  if (anchors.empty()) throw ExhaustionError("no person has enough frames for a training pair");
  const SampleRecord* a = anchors[std::uniform_int_distribution<std::size_t>(0, anchors.size() - 1)(rng)];
  std::vector<const SampleRecord*> partners;
  for (const auto* r : by_person[a->person_id])
    if (r != a && std::abs(r->frame_index - a->frame_index) <= window) partners.push_back(r);
  if (partners.empty()) return {a, a};
  return {a, partners[std::uniform_int_distribution<std::size_t>(0, partners.size() - 1)(rng)]};
}

std::filesystem::path record_stem(const std::filesystem::path& dir, const std::string& person, int frame_index) {
  char name[32];
  std::snprintf(name, sizeof name, "%05d", frame_index);
  return dir / "persons" / person / "frames" / name;
}

namespace {
std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.string() + suffix;
}
}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "reenact-dataset 1\n";
  manifest << "size " << dataset.size.width << " " << dataset.size.height << "\n";
  for (const auto& person : dataset.persons()) {
    const auto frames = dataset.frames_of(person);
    manifest << "person " << person << " " << frames.size() << "\n";
    for (const auto* r : frames) {
      const auto stem = record_stem(dir, person, r->frame_index);
      save_frame(with_suffix(stem, ".frame.png"), r->frame);
      save_map(with_suffix(stem, ".map.png"), r->parsing);
      write_file(with_suffix(stem, ".dense.png"), encode_dense(r->pose.dense_render));
      save_frame(with_suffix(stem, ".stick.png"), r->pose.stick_render);
      save_frame(with_suffix(stem, ".bg.png"), r->background);
      write_text(with_suffix(stem, ".pose.txt"), encode_keypoints(r->pose.keypoints));
    }
  }
  write_text(dir / "manifest", manifest.str());
}

SampleRecord load_record(const std::filesystem::path& dir, const std::string& person, int frame_index) {
  const auto stem = record_stem(dir, person, frame_index);
  SampleRecord r;
  r.person_id = person;
  r.frame_index = frame_index;
  try {
    r.frame = load_frame(with_suffix(stem, ".frame.png"));
    r.parsing = load_map(with_suffix(stem, ".map.png"), kBodyLabelCount);
    r.pose.dense_render = decode_dense(read_file(with_suffix(stem, ".dense.png")));
    r.pose.stick_render = load_frame(with_suffix(stem, ".stick.png"));
    r.background = load_frame(with_suffix(stem, ".bg.png"));
    r.pose.keypoints = decode_keypoints(read_text(with_suffix(stem, ".pose.txt")));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("dataset record unreadable: ") + e.what());
  }
  return r;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest")) throw FormatError("missing dataset manifest in " + dir.string());
  std::istringstream in(read_text(dir / "manifest"));
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "reenact-dataset" || version != 1)
    throw FormatError("corrupt dataset manifest header");
  Dataset ds;
  std::string tag;
  if (!(in >> tag >> ds.size.width >> ds.size.height) || tag != "size" || ds.size.width <= 0 || ds.size.height <= 0)
    throw FormatError("corrupt dataset manifest size line");
  std::string person;
  int count = 0;
  while (in >> tag) {
    if (tag != "person" || !(in >> person >> count) || count < 1) throw FormatError("corrupt dataset manifest entry");
    for (int i = 0; i < count; ++i) ds.records.push_back(load_record(dir, person, i));
  }
  return ds;
}

}  // namespace reenact
