#include "reenact/metrics.hpp"

#include "reenact/image_io.hpp"
#include "reenact/nn/convert.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace reenact {

namespace {

void require_same(const SemanticMap& a, const SemanticMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("maps differ in size");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double binary_similarity(const SemanticMap& gt, const SemanticMap& gen) {
  require_same(gt, gen);
  const auto a = gt.labels != 0, b = gen.labels != 0;
  const long inter = (a && b).count(), uni = (a || b).count();
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double index_similarity(const SemanticMap& gt, const SemanticMap& gen) {
  require_same(gt, gen);
  std::array<long, 256> in_gt{}, in_gen{}, both{};
  for (Eigen::Index i = 0; i < gt.labels.size(); ++i) {
    const auto a = gt.labels.data()[i], b = gen.labels.data()[i];
    ++in_gt[a];
    ++in_gen[b];
    if (a == b) ++both[a];
  }
  double sum = 0.0;
  int n = 0;
  for (int l = 1; l < 256; ++l) {
    if (in_gt[l] == 0) continue;
    sum += double(both[l]) / double(in_gt[l] + in_gen[l] - both[l]);
    ++n;
  }
  if (n == 0) return in_gen[0] == gen.labels.size() ? 1.0 : 0.0;
  return sum / n;
}

SemanticMap dense_index_map(const Frame& dense) {
  SemanticMap m(dense.height(), dense.width());
  const Plane& idx = dense.rgb[2];
  for (Eigen::Index i = 0; i < idx.size(); ++i) {
    const float v = std::round(idx.data()[i]);
    m.labels.data()[i] = std::uint8_t(std::clamp(v, 0.f, float(kMaxDensePart)));
  }
  return m;
}

PlaneT<double> grayscale(const Frame& f) {
  return 0.299 * f.rgb[0].cast<double>() + 0.587 * f.rgb[1].cast<double>() + 0.114 * f.rgb[2].cast<double>();
}

namespace {

constexpr int kSsimWindow = 11;

// Separable Gaussian filter keeping only positions where the window fits.
PlaneT<double> filter_valid(const PlaneT<double>& p, const Eigen::ArrayXd& k) {
  const int r = int(k.size());
  const Eigen::Index h = p.rows() - r + 1, w = p.cols() - r + 1;
  PlaneT<double> tmp = PlaneT<double>::Zero(p.rows(), w);
  for (int i = 0; i < r; ++i) tmp += k[i] * p.middleCols(i, w);
  PlaneT<double> out = PlaneT<double>::Zero(h, w);
  for (int i = 0; i < r; ++i) out += k[i] * tmp.middleRows(i, h);
  return out;
}

}  // namespace

double ssim(const Frame& a, const Frame& b) {
  if (!a.same_dims(b.height(), b.width())) throw ShapeError("ssim on frames of different size");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) throw ShapeError("ssim needs frames of at least 11x11");
  Eigen::ArrayXd k(kSsimWindow);
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
  }
  k /= k.sum();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const PlaneT<double> x = grayscale(a), y = grayscale(b);
  const PlaneT<double> mx = filter_valid(x, k), my = filter_valid(y, k);
  const PlaneT<double> sxx = filter_valid(x * x, k) - mx * mx;
  const PlaneT<double> syy = filter_valid(y * y, k) - my * my;
  const PlaneT<double> sxy = filter_valid(x * y, k) - mx * my;
  const PlaneT<double> map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean();
}

double perceptual_distance(const Frame& a, const Frame& b, const ToyEmbedder<float>& embedder) {
  if (!a.same_dims(b.height(), b.width())) throw ShapeError("perceptual distance on frames of different size");
  nn::NoGradGuard guard;
  const auto ta = embedder(nn::Var<float>::constant(nn::frame_to_tensor<float>(a))).taps;
  const auto tb = embedder(nn::Var<float>::constant(nn::frame_to_tensor<float>(b))).taps;
  double total = 0.0;
  for (std::size_t j = 0; j < ta.size(); ++j) {
    const auto& x = ta[j].value();
    const auto& y = tb[j].value();
    const int c = x.shape.c, hw = x.shape.h * x.shape.w;
    // Channel-major data of sample 0 viewed as [C, H*W].
    Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xa(x.data.data(), c, hw),
        ya(y.data.data(), c, hw);
    const Eigen::ArrayXXd xd = xa.cast<double>(), yd = ya.cast<double>();
    const Eigen::ArrayXd nx = xd.square().colwise().sum().sqrt().transpose() + 1e-10;
    const Eigen::ArrayXd ny = yd.square().colwise().sum().sqrt().transpose() + 1e-10;
    const Eigen::ArrayXXd diff = xd.rowwise() / nx.transpose() - yd.rowwise() / ny.transpose();
    total += diff.square().colwise().sum().mean();
  }
  return total;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> moments(const std::vector<Eigen::VectorXd>& s) {
  const Eigen::Index d = s[0].size();
  Eigen::MatrixXd x(Eigen::Index(s.size()), d);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].size() != d) throw ShapeError("feature vectors of different length");
    x.row(Eigen::Index(i)) = s[i].transpose();
  }
  const Eigen::VectorXd mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
  return {mu, (c.transpose() * c) / double(s.size() - 1)};
}

}  // namespace

double fid(const std::vector<Eigen::VectorXd>& real, const std::vector<Eigen::VectorXd>& gen, double eps) {
  if (real.size() < 2 || gen.size() < 2) throw std::invalid_argument("fid needs at least two samples per set");
  if (real[0].size() != gen[0].size()) throw ShapeError("feature sets of different dimension");
  auto [mr, cr] = moments(real);
  auto [mg, cg] = moments(gen);
  const Eigen::Index d = mr.size();
  cr += eps * Eigen::MatrixXd::Identity(d, d);
  cg += eps * Eigen::MatrixXd::Identity(d, d);
  // tr((Cr Cg)^1/2) = tr((Cr^1/2 Cg Cr^1/2)^1/2), the latter symmetric.
  const Eigen::MatrixXd sr = psd_sqrt(cr);
  const Eigen::MatrixXd inner = sr * cg * sr;
  const double cross = psd_sqrt(0.5 * (inner + inner.transpose())).trace();
  return std::max(0.0, (mr - mg).squaredNorm() + cr.trace() + cg.trace() - 2 * cross);
}

const MetricValue& MetricReport::at(const std::string& name) const {
  for (const auto& m : metrics)
    if (m.name == name) return m;
  throw std::out_of_range("no metric " + name);
}

bool MetricReport::has(const std::string& name) const {
  return std::any_of(metrics.begin(), metrics.end(), [&](const MetricValue& m) { return m.name == name; });
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "# metric direction value n_frames\n";
  for (const auto& [k, v] : metadata) os << "meta " << k << ' ' << v << '\n';
  for (const auto& m : metrics)
    os << "metric " << m.name << ' ' << (m.direction == Direction::kHigherBetter ? "higher" : "lower") << ' '
       << fmt(m.value) << ' ' << m.n_frames << '\n';
  for (const auto& [name, values] : series) {
    os << "series " << name;
    for (double v : values) os << ' ' << fmt(v);
    os << '\n';
  }
  return os.str();
}

MetricReport MetricReport::parse(const std::string& text) {
  MetricReport r;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind, name;
    ls >> kind >> name;
    auto fail = [&] { return FormatError("report line " + std::to_string(line_no) + ": " + line); };
    if (name.empty()) throw fail();
    if (kind == "meta") {
      std::string rest;
      std::getline(ls, rest);
      if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
      r.metadata[name] = rest;
    } else if (kind == "metric") {
      MetricValue m;
      m.name = name;
      std::string dir, value;
      if (!(ls >> dir >> value >> m.n_frames)) throw fail();
      if (dir == "higher")
        m.direction = Direction::kHigherBetter;
      else if (dir == "lower")
        m.direction = Direction::kLowerBetter;
      else
        throw fail();
      m.value = std::strtod(value.c_str(), nullptr);
      r.metrics.push_back(m);
    } else if (kind == "series") {
      auto& s = r.series[name];
      std::string v;
      while (ls >> v) s.push_back(std::strtod(v.c_str(), nullptr));
    } else {
      throw fail();
    }
  }
  return r;
}

void MetricReport::save(const std::filesystem::path& path) const { write_text(path, to_text()); }
MetricReport MetricReport::load(const std::filesystem::path& path) { return parse(read_text(path)); }

const std::vector<std::string>& all_metrics() {
  static const std::vector<std::string> names{"ssbs", "ssis", "dpbs", "dpis", "ssim", "lpips_image", "lpips_face", "fid"};
  return names;
}

std::vector<std::string> enabled_metrics(const Config& c) {
  const std::string spec = c.get("metrics.enabled", std::string());
  if (spec.empty()) return all_metrics();
  std::vector<std::string> out;
  std::istringstream is(spec);
  std::string name;
  while (std::getline(is, name, ',')) {
    name.erase(0, name.find_first_not_of(' '));
    name.erase(name.find_last_not_of(' ') + 1);
    if (name.empty()) continue;
    if (std::find(all_metrics().begin(), all_metrics().end(), name) == all_metrics().end())
      throw ConfigError("unknown metric '" + name + "'");
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

namespace {

std::vector<const SampleRecord*> ordered(const Dataset& ds) {
  std::vector<const SampleRecord*> r;
  for (const auto& rec : ds.records) r.push_back(&rec);
  std::sort(r.begin(), r.end(), [](const SampleRecord* a, const SampleRecord* b) {
    return std::tie(a->person_id, a->frame_index) < std::tie(b->person_id, b->frame_index);
  });
  return r;
}

}  // namespace

MetricReport evaluate(const Dataset& gen, const Dataset& gt, const Providers& providers, const Config& config) {
  const auto g = ordered(gen);
  if (g.empty()) throw ShapeError("nothing to evaluate");
  std::map<std::pair<std::string, int>, const SampleRecord*> by_key;
  for (const auto& r : gt.records) by_key[{r.person_id, r.frame_index}] = &r;
  std::vector<const SampleRecord*> t;
  for (const auto* r : g) {
    const auto it = by_key.find({r->person_id, r->frame_index});
    if (it == by_key.end())
      throw ShapeError("generated frame " + r->person_id + ":" + std::to_string(r->frame_index) +
                       " has no ground truth");
    t.push_back(it->second);
  }
  const auto names = enabled_metrics(config);
  auto on = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };

  MetricReport report;
  std::map<std::string, std::vector<double>> series;
  std::vector<Eigen::VectorXd> feat_gen, feat_gt;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const SampleRecord& a = *t[i];
    const SampleRecord& b = *g[i];
    if (!a.frame.same_dims(b.frame.height(), b.frame.width()))
      throw ShapeError("frame " + std::to_string(i) + " differs in size from its ground truth");
    if (on("ssbs")) series["ssbs"].push_back(binary_similarity(a.parsing, b.parsing));
    if (on("ssis")) series["ssis"].push_back(index_similarity(a.parsing, b.parsing));
    if (on("dpbs") || on("dpis")) {
      const SemanticMap da = dense_index_map(a.pose.dense_render), db = dense_index_map(b.pose.dense_render);
      if (on("dpbs")) series["dpbs"].push_back(binary_similarity(da, db));
      if (on("dpis")) series["dpis"].push_back(index_similarity(da, db));
    }
    if (on("ssim")) series["ssim"].push_back(ssim(a.frame, b.frame));
    if (on("lpips_image"))
      series["lpips_image"].push_back(perceptual_distance(a.frame, b.frame, providers.image_embedder()));
    if (on("lpips_face"))
      series["lpips_face"].push_back(perceptual_distance(a.frame, b.frame, providers.face_embedder()));
    if (on("fid")) {
      // Unit-normalized: the raw toy embeddings are tiny next to the eps regularizer.
      feat_gt.push_back(providers.image_embed(a.frame).cast<double>().normalized());
      feat_gen.push_back(providers.image_embed(b.frame).cast<double>().normalized());
    }
  }
  const int n = int(g.size());
  for (const auto& name : names) {
    MetricValue m;
    m.name = name;
    m.n_frames = n;
    m.direction = (name == "fid" || name.rfind("lpips", 0) == 0) ? Direction::kLowerBetter : Direction::kHigherBetter;
    if (name == "fid") {
      m.value = fid(feat_gt, feat_gen);
    } else {
      const auto& s = series.at(name);
      double sum = 0.0;
      for (double v : s) sum += v;
      m.value = sum / n;
      report.series[name] = s;
    }
    report.metrics.push_back(m);
  }
  report.metadata["frames"] = std::to_string(n);
  report.metadata["features"] = "unit-normalized toy image embeddings, dim " + std::to_string(providers.config().image_dim);
  report.metadata["metrics"] = config.get("metrics.enabled", std::string("all"));
  return report;
}

MetricReport evaluate(const std::filesystem::path& gen_dir, const std::filesystem::path& gt_dir,
                      const Providers& providers, const Config& config, const std::filesystem::path& report_path) {
  MetricReport r = evaluate(load_dataset(gen_dir), load_dataset(gt_dir), providers, config);
  // Directory names only, so that reports of identical runs in different places match.
  r.metadata["generated"] = gen_dir.filename().string();
  r.metadata["dataset"] = gt_dir.filename().string();
  if (std::filesystem::exists(gen_dir / "run.txt")) {
    const Config run = Config::load(gen_dir / "run.txt");
    for (const auto& [k, v] : run.values())
      if (k.rfind("checkpoint.", 0) == 0) r.metadata[k] = v;
  }
  if (!report_path.empty()) r.save(report_path);
  return r;
}

}  // namespace reenact
