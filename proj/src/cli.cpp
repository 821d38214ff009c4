#include "reenact/cli.hpp"

#include "reenact/image_io.hpp"
#include "reenact/metrics.hpp"
#include "reenact/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>

namespace reenact {

namespace {

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string debug_dir;
};

Config load_config(const Globals& g) {
  Config c;
  if (!g.config_file.empty()) c = Config::load(g.config_file);
  if (g.seed) c.set("seed", std::to_string(*g.seed));
  return c;
}

std::uint64_t seed_of(const Config& c) { return std::uint64_t(std::stoull(c.get("seed", std::string("0")))); }

// Resolution follows the training data.
void set_resolution(Config& c, const Dataset& ds) {
  c.set("resolution.height", double(ds.size.height));
  c.set("resolution.width", double(ds.size.width));
}

struct TrainArgs {
  std::string model, data, out, b2f_source;
  int steps = 200;
  int log_every = 25;
};

class Logger {
 public:
  Logger(std::ostream& out, const std::string& debug_dir, const std::string& name) : out_(out) {
    if (!debug_dir.empty()) {
      std::filesystem::create_directories(debug_dir);
      file_.open(std::filesystem::path(debug_dir) / (name + ".log"));
    }
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    if (file_) file_ << s << '\n';
  }

 private:
  std::ostream& out_;
  std::ofstream file_;
};

template <typename Step>
void train_loop(int steps, int log_every, Logger& log, Step step) {
  for (int s = 0; s < steps; ++s) {
    const LossReport r = step();
    if (s % log_every == 0 || s == steps - 1) log.line("step " + std::to_string(s) + " " + r.str());
  }
}

void train(const TrainArgs& a, const Globals& g, std::ostream& out) {
  Config cfg = load_config(g);
  const Dataset ds = load_dataset(a.data);
  set_resolution(cfg, ds);
  const std::uint64_t seed = seed_of(cfg);
  Rng rng(seed + 1);
  Logger log(out, g.debug_dir, "train_" + a.model);
  Checkpoint ckpt;
  if (a.model == "p2b") {
    P2BModel m(P2BConfig::from(cfg), seed);
    train_loop(a.steps, a.log_every, log, [&] { return m.train_step(make_p2b_batch(ds, m.config(), rng)); });
    ckpt = to_checkpoint(m);
  } else if (a.model == "b2f") {
    const Providers providers(ProviderConfig::from(cfg));
    B2FModel m(B2FConfig::from(cfg), providers, seed);
    IdentityCache ids(providers);
    train_loop(a.steps, a.log_every, log, [&] { return m.train_step(make_b2f_batch(ds, m.config(), ids, rng)); });
    ckpt = to_checkpoint(m);
  } else {
    const Providers providers(ProviderConfig::from(cfg));
    FRModel m(FRConfig::from(cfg), providers, seed);
    std::unique_ptr<B2FModel> b2f;
    IdentityCache ids(providers);
    FrameRenderer render;
    if (!a.b2f_source.empty()) {
      b2f = load_b2f(load_checkpoint(a.b2f_source), providers);
      render = [&](const SampleRecord& x, const SampleRecord& y) {
        const B2FSample s = make_b2f_sample(x, y, ids);
        const B2FOutput o = b2f->forward(s.cond, s.e_z);
        return blend(o.z, o.m, y.background);
      };
    }
    train_loop(a.steps, a.log_every, log, [&] { return m.train_step(make_fr_batch(ds, m.config(), rng, render)); });
    ckpt = to_checkpoint(m);
  }
  ckpt.config.set("seed", std::to_string(seed));
  ckpt.config.set("train.steps", double(a.steps));
  save_checkpoint(ckpt, a.out);
  log.line("wrote " + a.out);
}

struct InferArgs {
  std::string p2b, b2f, fr, data, target, driving, out, background;
  int target_frame = 0, first = 0, frames = 0;
  bool zero_masks = false;
};

std::vector<SampleRecord> frames_of(const Dataset& ds, const std::string& person) {
  std::vector<SampleRecord> out;
  for (const auto* r : ds.frames_of(person)) out.push_back(*r);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.frame_index < y.frame_index; });
  if (out.empty()) throw ConfigError("no frames of person '" + person + "' in the dataset");
  return out;
}

void infer(const InferArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
  Config cfg = load_config(g);
  cfg.set("pipeline.p2b", a.p2b);
  cfg.set("pipeline.b2f", a.b2f);
  if (!a.fr.empty()) cfg.set("pipeline.fr", a.fr);
  if (!a.background.empty()) cfg.set("pipeline.background", a.background);
  if (a.zero_masks) cfg.set("pipeline.zero_masks", "true");
  const PipelineConfig pc = PipelineConfig::from(cfg);
  pc.validate();

  const Providers providers(pc.providers);
  auto p2b = load_p2b(load_checkpoint(pc.p2b_checkpoint));
  auto b2f = load_b2f(load_checkpoint(pc.b2f_checkpoint), providers);
  std::unique_ptr<FRModel> fr;
  if (!pc.fr_checkpoint.empty()) fr = load_fr(load_checkpoint(pc.fr_checkpoint), providers);

  const Dataset ds = load_dataset(a.data);
  const auto target_frames = frames_of(ds, a.target);
  const auto it = std::find_if(target_frames.begin(), target_frames.end(),
                               [&](const SampleRecord& r) { return r.frame_index == a.target_frame; });
  if (it == target_frames.end()) throw ConfigError("target frame " + std::to_string(a.target_frame) + " not found");
  const SampleRecord target = *it;
  auto driving = frames_of(ds, a.driving.empty() ? a.target : a.driving);
  if (a.first < 0 || a.first >= int(driving.size())) throw ConfigError("--first outside the driving sequence");
  driving.erase(driving.begin(), driving.begin() + a.first);
  if (a.frames > 0 && a.frames < int(driving.size())) driving.resize(a.frames);

  Reenactor r(*p2b, *b2f, fr.get(), providers, pc.zero_masks);
  r.set_target(target);
  for (const auto& w : r.warnings()) err << "warning: " << w << '\n';
  const auto backgrounds = load_backgrounds(pc, driving, target, r, providers);
  const auto results = r.run(driving, backgrounds);

  write_dataset(as_dataset(results, driving, backgrounds), a.out);
  Config run;
  run.set("checkpoint.p2b", checkpoint_id(pc.p2b_checkpoint));
  run.set("checkpoint.b2f", checkpoint_id(pc.b2f_checkpoint));
  if (fr) run.set("checkpoint.fr", checkpoint_id(pc.fr_checkpoint));
  run.set("target", a.target + ":" + std::to_string(a.target_frame));
  run.set("frames", double(results.size()));
  run.set("seed", std::to_string(seed_of(cfg)));
  write_text(std::filesystem::path(a.out) / "run.txt", run.to_text());
  if (!g.debug_dir.empty()) write_debug(results, g.debug_dir);
  out << "wrote " << results.size() << " frames to " << a.out << '\n';
}

struct EvalArgs {
  std::string gen, gt, report;
};

void evaluate_cmd(const EvalArgs& a, const Globals& g, std::ostream& out) {
  const Config cfg = load_config(g);
  const Providers providers(ProviderConfig::from(cfg));
  const MetricReport r = evaluate(a.gen, a.gt, providers, cfg, a.report);
  for (const auto& m : r.metrics)
    out << m.name << ' ' << (m.direction == Direction::kHigherBetter ? "higher" : "lower") << ' ' << m.value << '\n';
}

struct SynthArgs {
  std::string out;
  int persons = 10, frames = 20;
};

void synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  const Config cfg = load_config(g);
  const RenderSize size{cfg.get("resolution.height", 128), cfg.get("resolution.width", 80)};
  if (a.persons <= 0 || a.frames <= 0) throw ConfigError("--persons and --frames must be positive");
  write_dataset(generate_dataset(a.persons, a.frames, size, seed_of(cfg)), a.out);
  out << "wrote " << a.persons << " x " << a.frames << " frames to " << a.out << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Full-body reenactment on synthetic figures"};
  app.name("reenact");
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_file, "flat key=value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "seed for every stochastic component");
  app.add_option("--debug-dir", g.debug_dir, "directory for masks, maps and logs");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth-gen", "render a synthetic dataset")->fallthrough();
  synth_cmd->add_option("--out", sa.out, "output directory")->required();
  synth_cmd->add_option("--persons", sa.persons, "number of persons");
  synth_cmd->add_option("--frames", sa.frames, "frames per person");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train one network")->fallthrough();
  train_cmd->add_option("model", ta.model, "p2b, b2f or fr")->required()->check(CLI::IsMember({"p2b", "b2f", "fr"}));
  train_cmd->add_option("--data", ta.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--steps", ta.steps, "optimizer steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", ta.out, "checkpoint file")->required();
  train_cmd->add_option("--b2f-source", ta.b2f_source, "fr only: train on B2F renderings from this checkpoint")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--log-every", ta.log_every, "steps between loss lines")->check(CLI::PositiveNumber);

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "reenact a target person")->fallthrough();
  infer_cmd->add_option("--p2b", ia.p2b, "P2B checkpoint")->required();
  infer_cmd->add_option("--b2f", ia.b2f, "B2F checkpoint")->required();
  infer_cmd->add_option("--fr", ia.fr, "FR checkpoint; without it faces are not refined");
  infer_cmd->add_option("--data", ia.data, "dataset holding the target and driving frames")
      ->required()
      ->check(CLI::ExistingDirectory);
  infer_cmd->add_option("--target", ia.target, "target person id")->required();
  infer_cmd->add_option("--target-frame", ia.target_frame, "frame index of the target image");
  infer_cmd->add_option("--driving", ia.driving, "driving person id (default: the target)");
  infer_cmd->add_option("--first", ia.first, "first driving frame");
  infer_cmd->add_option("--frames", ia.frames, "number of driving frames (default: all)");
  infer_cmd->add_option("--background", ia.background, "inpaint-driving, inpaint-target, static:FILE or dir:DIR");
  infer_cmd->add_flag("--zero-masks", ia.zero_masks, "diagnostic: force every blend mask to 0");
  infer_cmd->add_option("--out", ia.out, "output directory")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "score generated frames against ground truth")->fallthrough();
  eval_cmd->add_option("--gen", ea.gen, "generated dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--gt", ea.gt, "ground-truth dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--report", ea.report, "report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*synth_cmd) synth(sa, g, out);
    if (*train_cmd) train(ta, g, out);
    if (*infer_cmd) infer(ia, g, out, err);
    if (*eval_cmd) evaluate_cmd(ea, g, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace reenact
