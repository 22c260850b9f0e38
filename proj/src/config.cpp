#include "adjd/config.hpp"

#include <limits>
#include <set>

#include "adjd/errors.hpp"

namespace adjd {

using nlohmann::json;

SampleSettings TaskBlock::settings(double cfg_scale) const {
  SampleSettings s;
  s.steps = steps;
  s.scheme = grid;
  s.solver.kind = solver;
  s.cfg.scale = cfg_scale;
  return s;
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Wraps one JSON object; every key read is marked, the rest are rejected
// by finish().
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  Block child(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return Block(it == j_.end() ? empty : *it, join(path_, key));
  }

  template <class T>
  void get(const std::string& key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, join(path_, key), out);
  }

  template <class T, class Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string p = join(path_, key);
    if (!it->is_string()) throw ValidationError(p, "expected a string");
    try {
      out = parse(it->get<std::string>());
    } catch (const ValidationError& e) {
      // the parsers name their canonical key; report where it actually is
      const std::string what = e.what();
      throw ValidationError(p, what.substr(what.find(": ") + 2));
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ValidationError(join(path_, it.key()), "unknown key");
  }

  const std::string& path() const { return path_; }

 private:
  static void read(const json& v, const std::string& p, double& out) {
    if (!v.is_number()) throw ValidationError(p, "expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& p, long& out) {
    if (!v.is_number_integer()) throw ValidationError(p, "expected an integer");
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<long>::max()))
      throw ValidationError(p, "integer out of range");
    out = v.get<long>();
  }
  static void read(const json& v, const std::string& p, std::size_t& out) {
    if (!v.is_number_unsigned()) throw ValidationError(p, "expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  static void read(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ValidationError(p, "expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ValidationError(p, "expected a string");
    out = v.get<std::string>();
  }
  template <class T>
  static void read(const json& v, const std::string& p, std::vector<T>& out) {
    if (!v.is_array()) throw ValidationError(p, "expected an array");
    std::vector<T> tmp(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) read(v[i], p + "[" + std::to_string(i) + "]", tmp[i]);
    out = std::move(tmp);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ValidationError(path, what);
}

void read_adamw_lr(Block& b, AdamWConfig& opt) {
  b.get("lr", opt.lr);
  b.get("weight_decay", opt.weight_decay);
  require(opt.lr > 0.0, b.path() + ".lr", "must be > 0");
  require(opt.weight_decay >= 0.0, b.path() + ".weight_decay", "must be >= 0");
}

void read_schedule(Block b, NoiseSchedule& s) {
  b.get_enum("kind", s.kind, parse_schedule_kind);
  b.get("beta_min", s.beta_min);
  b.get("beta_max", s.beta_max);
  b.get("t_end", s.t_end);
  b.get("t_start", s.t_start);
  b.finish();
  s.validate();
}

void read_data(Block b, DataBlock& d) {
  b.get("n_modes", d.mixture.n_modes);
  b.get("radius", d.mixture.radius);
  b.get("std", d.mixture.std);
  b.get("n_train", d.n_train);
  b.get("n_holdout", d.n_holdout);
  b.finish();
  require(d.mixture.n_modes >= 1, "data.n_modes", "must be >= 1");
  require(d.mixture.std > 0.0, "data.std", "must be > 0");
  require(d.n_train >= 1, "data.n_train", "must be >= 1");
  require(d.n_holdout >= 1, "data.n_holdout", "must be >= 1");
}

void read_model(Block b, ModelBlock& m) {
  DenoiserConfig& d = m.denoiser;
  b.get("hidden", d.hidden);
  b.get_enum("activation", d.activation, parse_activation);
  b.get("n_freqs", d.n_freqs);
  b.get("freq_min", d.freq_min);
  b.get("freq_max", d.freq_max);
  b.get("cond_dim", d.cond_dim);
  b.get("checkpoint", m.checkpoint);
  Block t = b.child("train");
  t.get("steps", m.train.steps);
  t.get("batch", m.train.batch);
  t.get("cond_drop_prob", m.train.cond_drop_prob);
  read_adamw_lr(t, m.train.opt);
  t.finish();
  b.finish();
  for (std::size_t i = 0; i < d.hidden.size(); ++i)
    require(d.hidden[i] >= 1, "model.hidden[" + std::to_string(i) + "]", "widths must be >= 1");
  require(d.n_freqs >= 0, "model.n_freqs", "must be >= 0");
  require(d.freq_min > 0.0 && d.freq_max >= d.freq_min, "model.freq_max", "need 0 < freq_min <= freq_max");
  require(d.cond_dim >= 0, "model.cond_dim", "must be >= 0");
  require(m.train.steps >= 0, "model.train.steps", "must be >= 0");
  require(m.train.batch >= 1, "model.train.batch", "must be >= 1");
  require(m.train.cond_drop_prob >= 0.0 && m.train.cond_drop_prob < 1.0, "model.train.cond_drop_prob",
          "must lie in [0, 1)");
}

void read_classifier(Block b, ClassifierBlock& c) {
  b.get("hidden", c.classifier.hidden);
  b.get("checkpoint", c.checkpoint);
  Block t = b.child("train");
  t.get("steps", c.train.steps);
  t.get("batch", c.train.batch);
  read_adamw_lr(t, c.train.opt);
  t.finish();
  b.finish();
  require(!c.classifier.hidden.empty(), "classifier.hidden", "needs at least one layer");
  for (std::size_t i = 0; i < c.classifier.hidden.size(); ++i)
    require(c.classifier.hidden[i] >= 1, "classifier.hidden[" + std::to_string(i) + "]", "widths must be >= 1");
  require(c.train.steps >= 0, "classifier.train.steps", "must be >= 0");
  require(c.train.batch >= 1, "classifier.train.batch", "must be >= 1");
}

void read_solver(Block b, SolverBlock& s) {
  b.get_enum("kind", s.spec.kind, parse_solver_kind);
  b.get("steps", s.steps);
  b.get_enum("grid", s.grid, parse_grid_scheme);
  b.get_enum("mode", s.mode, parse_sample_mode);
  b.get("rtol", s.spec.rtol);
  b.get("atol", s.spec.atol);
  b.get("cfg_scale", s.cfg_scale);
  b.finish();
  require(s.steps >= 1, "solver.steps", "must be >= 1");
  require(s.spec.kind != SolverKind::ab4 || s.steps >= 4, "solver.steps", "ab4 needs at least 4 steps");
  require(s.spec.rtol > 0.0, "solver.rtol", "must be > 0");
  require(s.spec.atol >= 0.0, "solver.atol", "must be >= 0");
}

void read_task(Block b, TaskBlock& t) {
  b.get_enum("solver", t.solver, parse_solver_kind);
  b.get("steps", t.steps);
  b.get_enum("grid", t.grid, parse_grid_scheme);
  require(is_fixed_step(t.solver), "task.solver", "tasks need a fixed-step solver");
  require(t.steps >= (t.solver == SolverKind::ab4 ? 4u : 1u), "task.steps", "too few steps for the solver");

  Block s = b.child("sample");
  s.get("count", t.sample.count);
  s.get("label", t.sample.label);
  s.finish();
  require(t.sample.count >= 1, "task.sample.count", "must be >= 1");

  Block bench = b.child("bench");
  bench.get("nfe", t.bench.nfe);
  bench.get("reference_nfe", t.bench.reference_nfe);
  bench.get("chains", t.bench.chains);
  bench.get_enum("solver", t.bench.solver, parse_solver_kind);
  bench.get_enum("grid", t.bench.grid, parse_grid_scheme);
  bench.get("label", t.bench.label);
  bench.finish();
  require(!t.bench.nfe.empty(), "task.bench.nfe", "needs at least one entry");
  for (long n : t.bench.nfe) require(n >= 1, "task.bench.nfe", "entries must be >= 1");
  require(t.bench.reference_nfe >= 4, "task.bench.reference_nfe", "must be >= 4");
  require(t.bench.chains >= 2, "task.bench.chains", "must be >= 2");
  require(is_fixed_step(t.bench.solver), "task.bench.solver", "must be a fixed-step solver");

  Block g = b.child("gradcheck");
  g.get("steps", t.gradcheck.steps);
  g.get_enum("solver", t.gradcheck.solver, parse_solver_kind);
  std::vector<std::string> targets;
  g.get("targets", targets);
  if (!targets.empty()) {
    t.gradcheck.targets.clear();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      try {
        t.gradcheck.targets.push_back(parse_grad_target(targets[i]));
      } catch (const ValidationError&) {
        throw ValidationError("task.gradcheck.targets[" + std::to_string(i) + "]",
                              "unknown target '" + targets[i] + "'");
      }
    }
  }
  g.get("h", t.gradcheck.h);
  g.get("theta_coords", t.gradcheck.theta_coords);
  g.get("tolerance", t.gradcheck.tolerance);
  g.get("chains", t.gradcheck.chains);
  g.get("label", t.gradcheck.label);
  g.finish();
  require(t.gradcheck.h > 0.0, "task.gradcheck.h", "must be > 0");
  require(t.gradcheck.chains >= 1, "task.gradcheck.chains", "must be >= 1");
  require(t.gradcheck.steps >= 1, "task.gradcheck.steps", "must be >= 1");
  require(is_fixed_step(t.gradcheck.solver), "task.gradcheck.solver", "must be a fixed-step solver");

  Block gd = b.child("guide");
  gd.get("label", t.guide.label);
  gd.get("seeds", t.guide.seeds);
  gd.get("epochs", t.guide.epochs);
  gd.get("lr", t.guide.lr);
  gd.finish();
  require(t.guide.seeds >= 1, "task.guide.seeds", "must be >= 1");
  require(t.guide.epochs >= 0, "task.guide.epochs", "must be >= 0");
  require(t.guide.lr > 0.0, "task.guide.lr", "must be > 0");

  Block a = b.child("audit");
  a.get("tau", t.audit.tau);
  a.get("steps", t.audit.steps);
  a.get("step_size", t.audit.step_size);
  a.get_enum("loss", t.audit.loss, parse_audit_loss);
  a.get("cfg_scale", t.audit.cfg_scale);
  a.get("seeds", t.audit.seeds);
  a.get("labels", t.audit.labels);
  a.finish();
  require(t.audit.tau >= 0.0, "task.audit.tau", "must be >= 0");
  require(t.audit.steps >= 0, "task.audit.steps", "must be >= 0");
  require(t.audit.seeds >= 1, "task.audit.seeds", "must be >= 1");

  Block st = b.child("style");
  st.get("label", t.style.label);
  st.get("triplets", t.style.triplets);
  st.get("style_radius", t.style.style_radius);
  st.get("style_points", t.style.style_points);
  st.get("w_style", t.style.w_style);
  st.get("w_content", t.style.w_content);
  st.get("epochs", t.style.epochs);
  st.get("lr", t.style.lr);
  st.get("trainable_layers", t.style.trainable_layers);
  st.finish();
  require(t.style.triplets >= 1, "task.style.triplets", "must be >= 1");
  require(t.style.style_points >= 1, "task.style.style_points", "must be >= 1");
  require(t.style.w_style >= 0.0, "task.style.w_style", "must be >= 0");
  require(t.style.w_content >= 0.0, "task.style.w_content", "must be >= 0");
  require(t.style.epochs >= 0, "task.style.epochs", "must be >= 0");
  require(t.style.lr > 0.0, "task.style.lr", "must be > 0");
  require(t.style.trainable_layers >= 0, "task.style.trainable_layers", "must be >= 0");

  Block inv = b.child("invert");
  inv.get("seeds", t.invert.seeds);
  inv.get("target_label", t.invert.target_label);
  inv.get("base_label", t.invert.base_label);
  inv.get_enum("composition", t.invert.composition, parse_composition);
  inv.get("steps", t.invert.steps);
  inv.get("lr", t.invert.lr);
  inv.finish();
  require(t.invert.seeds >= 1, "task.invert.seeds", "must be >= 1");
  require(t.invert.steps >= 0, "task.invert.steps", "must be >= 0");
  require(t.invert.lr > 0.0, "task.invert.lr", "must be > 0");
  b.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the 1-based position of the offending character
    const std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
    throw ParseError("config is not valid JSON at byte " + std::to_string(byte), byte);
  }
  RunConfig cfg;
  Block root(j, "");
  root.get("seed", cfg.seed);
  root.get("output_dir", cfg.output_dir);
  read_schedule(root.child("schedule"), cfg.schedule);
  read_data(root.child("data"), cfg.data);
  read_model(root.child("model"), cfg.model);
  read_classifier(root.child("classifier"), cfg.classifier);
  read_solver(root.child("solver"), cfg.solver);
  read_task(root.child("task"), cfg.task);
  root.finish();
  // shapes that follow from the data block
  cfg.model.denoiser.state_dim = 2;
  cfg.model.denoiser.n_classes = cfg.data.mixture.n_modes;
  cfg.classifier.classifier.state_dim = 2;
  cfg.classifier.classifier.n_classes = cfg.data.mixture.n_modes;
  return cfg;
}

json to_json(const RunConfig& c) {
  json targets = json::array();
  for (GradTarget t : c.task.gradcheck.targets) targets.push_back(to_string(t));
  const TaskBlock& t = c.task;
  return json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"schedule", c.schedule},
      {"data",
       {{"n_modes", c.data.mixture.n_modes},
        {"radius", c.data.mixture.radius},
        {"std", c.data.mixture.std},
        {"n_train", c.data.n_train},
        {"n_holdout", c.data.n_holdout}}},
      {"model",
       {{"hidden", c.model.denoiser.hidden},
        {"activation", to_string(c.model.denoiser.activation)},
        {"n_freqs", c.model.denoiser.n_freqs},
        {"freq_min", c.model.denoiser.freq_min},
        {"freq_max", c.model.denoiser.freq_max},
        {"cond_dim", c.model.denoiser.cond_dim},
        {"checkpoint", c.model.checkpoint},
        {"train",
         {{"steps", c.model.train.steps},
          {"batch", c.model.train.batch},
          {"cond_drop_prob", c.model.train.cond_drop_prob},
          {"lr", c.model.train.opt.lr},
          {"weight_decay", c.model.train.opt.weight_decay}}}}},
      {"classifier",
       {{"hidden", c.classifier.classifier.hidden},
        {"checkpoint", c.classifier.checkpoint},
        {"train",
         {{"steps", c.classifier.train.steps},
          {"batch", c.classifier.train.batch},
          {"lr", c.classifier.train.opt.lr},
          {"weight_decay", c.classifier.train.opt.weight_decay}}}}},
      {"solver",
       {{"kind", to_string(c.solver.spec.kind)},
        {"steps", c.solver.steps},
        {"grid", to_string(c.solver.grid)},
        {"mode", to_string(c.solver.mode)},
        {"rtol", c.solver.spec.rtol},
        {"atol", c.solver.spec.atol},
        {"cfg_scale", c.solver.cfg_scale}}},
      {"task",
       {{"solver", to_string(t.solver)},
        {"steps", t.steps},
        {"grid", to_string(t.grid)},
        {"sample", {{"count", t.sample.count}, {"label", t.sample.label}}},
        {"bench",
         {{"nfe", t.bench.nfe},
          {"reference_nfe", t.bench.reference_nfe},
          {"chains", t.bench.chains},
          {"solver", to_string(t.bench.solver)},
          {"grid", to_string(t.bench.grid)},
          {"label", t.bench.label}}},
        {"gradcheck",
         {{"steps", t.gradcheck.steps},
          {"solver", to_string(t.gradcheck.solver)},
          {"targets", targets},
          {"h", t.gradcheck.h},
          {"theta_coords", t.gradcheck.theta_coords},
          {"tolerance", t.gradcheck.tolerance},
          {"chains", t.gradcheck.chains},
          {"label", t.gradcheck.label}}},
        {"guide",
         {{"label", t.guide.label}, {"seeds", t.guide.seeds}, {"epochs", t.guide.epochs}, {"lr", t.guide.lr}}},
        {"audit",
         {{"tau", t.audit.tau},
          {"steps", t.audit.steps},
          {"step_size", t.audit.step_size},
          {"loss", to_string(t.audit.loss)},
          {"cfg_scale", t.audit.cfg_scale},
          {"seeds", t.audit.seeds},
          {"labels", t.audit.labels}}},
        {"style",
         {{"label", t.style.label},
          {"triplets", t.style.triplets},
          {"style_radius", t.style.style_radius},
          {"style_points", t.style.style_points},
          {"w_style", t.style.w_style},
          {"w_content", t.style.w_content},
          {"epochs", t.style.epochs},
          {"lr", t.style.lr},
          {"trainable_layers", t.style.trainable_layers}}},
        {"invert",
         {{"seeds", t.invert.seeds},
          {"target_label", t.invert.target_label},
          {"base_label", t.invert.base_label},
          {"composition", to_string(t.invert.composition)},
          {"steps", t.invert.steps},
          {"lr", t.invert.lr}}}}}};
}

std::string serialize(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

}  // namespace adjd
