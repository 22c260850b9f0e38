#include "adjd/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "adjd/checkpoint.hpp"
#include "adjd/errors.hpp"
#include "adjd/metrics.hpp"
#include "adjd/parallel.hpp"
#include "adjd/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace adjd {

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train-denoiser", "train-classifier", "sample",
                                              "bench-solvers",  "gradcheck",        "guide",
                                              "audit",          "finetune-style",   "invert-embed"};
  return names;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ArgumentError("cannot write '" + p.string() + "'");
  f << text;
}

std::string points_csv(const Eigen::MatrixXd& x) {
  std::string out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out += (i ? ",x" : "x") + std::to_string(i);
  out += '\n';
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out += (i ? "," : "") + fmt17(x(i, j));
    out += '\n';
  }
  return out;
}

std::optional<Eigen::Index> label_or_null(long label) {
  if (label < 0) return std::nullopt;
  return label;
}

/// Everything one command run needs: the resolved config, seeded streams,
/// the output directory and the report being assembled.
class Run {
 public:
  Run(const RunConfig& cfg, const fs::path& out) : cfg(cfg), out(out), root(cfg.seed) {
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "samples");
    write_file(out / "config.json", serialize(cfg));
    report["seed"] = cfg.seed;
    report["threads"] = worker_threads();
    report["warnings"] = json::array();
  }

  Rng stream(const std::string& label) const { return root.substream(label); }

  void warn(const std::string& w) {
    report["warnings"].push_back(w);
    std::cerr << "adjd: warning: " << w << '\n';
  }

  void phase(const std::string& name, long nfe, long peak, double secs) {
    phases.push_back({name, nfe, peak, secs});
  }

  const LabeledSamples& train_data() {
    if (data_.empty()) {
      Rng r = stream("data.train");
      data_ = sample_mixture(cfg.data.mixture, cfg.data.n_train, r);
    }
    return data_;
  }

  LabeledSamples holdout() const {
    Rng r = stream("data.holdout");
    return sample_mixture(cfg.data.mixture, cfg.data.n_holdout, r);
  }

  /// Loads model.checkpoint or trains a denoiser on the configured mixture.
  Denoiser model(MetricsTable* curve = nullptr) {
    if (!cfg.model.checkpoint.empty()) {
      const Checkpoint ck = load_checkpoint(cfg.model.checkpoint);
      if (auto w = schedule_mismatch(ck.schedule, cfg.schedule)) warn(*w);
      return get_denoiser(ck);
    }
    const auto t0 = Clock::now();
    DenoiserConfig dc = cfg.model.denoiser;
    Denoiser m(dc);
    Rng init = stream("model.init");
    m.init(init);
    Rng tr = stream("model.train");
    const TrainResult res = train_score_matching(m, train_data(), cfg.schedule, cfg.model.train, tr);
    if (curve) {
      curve->columns = {"step", "loss"};
      for (std::size_t i = 0; i < res.loss_curve.size(); ++i)
        curve->add({static_cast<double>(i), res.loss_curve[i]});
    }
    report["denoiser_training"] = {{"steps", cfg.model.train.steps},
                                   {"final_loss", res.loss_curve.empty() ? 0.0 : res.loss_curve.back()},
                                   {"seconds", seconds_since(t0)}};
    return m;
  }

  ToyClassifier classifier(MetricsTable* curve = nullptr) {
    if (!cfg.classifier.checkpoint.empty()) return get_classifier(load_checkpoint(cfg.classifier.checkpoint));
    ToyClassifier c(cfg.classifier.classifier);
    Rng init = stream("classifier.init");
    c.init(init);
    Rng tr = stream("classifier.train");
    const std::vector<double> loss = train_classifier(c, train_data(), cfg.classifier.train, tr);
    if (curve) {
      curve->columns = {"step", "loss"};
      for (std::size_t i = 0; i < loss.size(); ++i) curve->add({static_cast<double>(i), loss[i]});
    }
    report["classifier_training"] = {{"steps", cfg.classifier.train.steps},
                                     {"holdout_accuracy", accuracy(c, holdout())}};
    return c;
  }

  void save_model(const std::string& name, const Denoiser& m) {
    Checkpoint ck;
    ck.schedule = cfg.schedule;
    put_denoiser(ck, m);
    save_checkpoint((out / "checkpoints" / name).string(), ck);
  }

  void save_arrays(const std::string& name, std::vector<NamedArray> arrays) {
    Checkpoint ck;
    ck.schedule = cfg.schedule;
    ck.arrays = std::move(arrays);
    save_checkpoint((out / "checkpoints" / name).string(), ck);
  }

  void samples(const std::string& name, const Eigen::MatrixXd& x) {
    write_file(out / "samples" / name, points_csv(x));
  }

  json finish(const std::string& metrics_csv) {
    write_file(out / "metrics.csv", metrics_csv);
    json j = run_report(phases, sweep).to_json();
    j.erase("extra");
    j.update(report);
    write_file(out / "report.json", j.dump(2) + "\n");
    return j;
  }

  const RunConfig& cfg;
  fs::path out;
  Rng root;
  json report = json::object();
  std::vector<PhaseStats> phases;
  std::vector<MemoryPoint> sweep;

 private:
  LabeledSamples data_;
};

SampleRequest solver_request(const RunConfig& cfg, const NoiseSchedule& s, const Eigen::MatrixXd& x_T,
                             const Eigen::MatrixXd& cond) {
  SampleRequest r;
  r.x_T = x_T;
  r.cond = cond;
  r.cfg.scale = cfg.solver.cfg_scale;
  r.grid = time_grid(s, cfg.solver.steps, cfg.solver.grid);
  r.solver = cfg.solver.spec;
  r.mode = cfg.solver.mode;
  return r;
}

// ------------------------------------------------------------------ commands

json cmd_train_denoiser(Run& run) {
  MetricsTable curve;
  const Denoiser m = run.model(&curve);
  if (!run.cfg.model.checkpoint.empty()) throw ArgumentError("train-denoiser: model.checkpoint must be empty");
  run.save_model("denoiser.ckpt", m);
  // quality: sliced W1 between generated samples and held-out data
  const LabeledSamples hold = run.holdout();
  Rng nr = run.stream("train_denoiser.noise");
  const Eigen::MatrixXd x_T = draw_initial_noise(run.cfg.schedule, 2, hold.size(), nr);
  const auto t0 = Clock::now();
  const SampleResult out = sample(m, run.cfg.schedule, solver_request(run.cfg, run.cfg.schedule, x_T, m.embed(std::nullopt)));
  run.phase("forward", out.stats.nfe, out.stats.max_retained_states, seconds_since(t0));
  run.samples("samples.csv", out.x0);
  run.report["sliced_wasserstein_to_holdout"] = sliced_wasserstein(out.x0, hold.x, 128, run.cfg.seed);
  return run.finish(curve.csv());
}

json cmd_train_classifier(Run& run) {
  MetricsTable curve;
  if (!run.cfg.classifier.checkpoint.empty())
    throw ArgumentError("train-classifier: classifier.checkpoint must be empty");
  const ToyClassifier c = run.classifier(&curve);
  Checkpoint ck;
  ck.schedule = run.cfg.schedule;
  put_classifier(ck, c);
  save_checkpoint((run.out / "checkpoints" / "classifier.ckpt").string(), ck);
  return run.finish(curve.csv());
}

json cmd_sample(Run& run) {
  const Denoiser m = run.model();
  const auto& t = run.cfg.task.sample;
  if (t.label >= m.n_classes()) throw ValidationError("task.sample.label", "label out of range");
  Rng nr = run.stream("sample.noise");
  const Eigen::MatrixXd x_T = draw_initial_noise(run.cfg.schedule, m.state_dim(), t.count, nr);
  const auto t0 = Clock::now();
  const SampleResult out =
      sample(m, run.cfg.schedule, solver_request(run.cfg, run.cfg.schedule, x_T, m.embed(label_or_null(t.label))));
  run.phase("forward", out.stats.nfe, out.stats.max_retained_states, seconds_since(t0));
  run.samples("samples.csv", out.x0);
  run.samples("noise.csv", x_T);
  MetricsTable mt;
  mt.columns = {"count", "nfe", "mean_norm", "sliced_wasserstein_to_holdout"};
  mt.add({static_cast<double>(t.count), static_cast<double>(out.stats.nfe),
          out.x0.colwise().norm().mean(), sliced_wasserstein(out.x0, run.holdout().x, 128, run.cfg.seed)});
  return run.finish(mt.csv());
}

json cmd_bench(Run& run) {
  const Denoiser m = run.model();
  const BenchTask& b = run.cfg.task.bench;
  ErrorStudy st;
  Rng nr = run.stream("bench.noise");
  st.noise = draw_initial_noise(run.cfg.schedule, m.state_dim(), b.chains, nr);
  st.cond = m.embed(label_or_null(b.label));
  st.cfg.scale = run.cfg.solver.cfg_scale;
  st.scheme = b.grid;
  st.solver = b.solver;
  st.nfe_list = b.nfe;
  st.reference_nfe = b.reference_nfe;
  const auto t0 = Clock::now();
  const std::vector<ErrorRow> rows = solver_error_vs_reference(m, run.cfg.schedule, st);
  run.phase("bench", 0, 0, seconds_since(t0));

  auto err = [&](SampleMode mode, long nfe) {
    for (const auto& r : rows)
      if (r.mode == mode && r.nfe == nfe) return r.mean_l2;
    return std::numeric_limits<double>::quiet_NaN();
  };
  json trend = json::object();
  const long first = *std::min_element(b.nfe.begin(), b.nfe.end());
  const double orig = err(SampleMode::original, first), rep = err(SampleMode::reparam, first);
  trend["nfe"] = first;
  trend["original_mean_l2"] = orig;
  trend["reparam_mean_l2"] = rep;
  trend["relative_reduction"] = 1.0 - rep / orig;
  std::vector<long> sorted = b.nfe;
  std::sort(sorted.begin(), sorted.end());
  for (SampleMode mode : {SampleMode::original, SampleMode::reparam}) {
    bool dec = true;
    for (std::size_t i = 1; i < sorted.size(); ++i) dec = dec && err(mode, sorted[i]) < err(mode, sorted[i - 1]);
    trend["strictly_decreasing_" + to_string(mode)] = dec;
  }
  run.report["trend"] = trend;
  return run.finish(error_table_csv(rows));
}

json cmd_gradcheck(Run& run) {
  const Denoiser m = run.model();
  const GradcheckTask& g = run.cfg.task.gradcheck;
  const NoiseSchedule& s = run.cfg.schedule;
  Rng nr = run.stream("gradcheck.noise");
  SampleRequest fwd;
  fwd.x_T = draw_initial_noise(s, m.state_dim(), g.chains, nr);
  fwd.cond = m.embed(label_or_null(g.label));
  fwd.cfg.scale = run.cfg.solver.cfg_scale;
  fwd.grid = time_grid(s, g.steps, run.cfg.solver.grid);
  fwd.solver.kind = g.solver;
  fwd.mode = SampleMode::reparam;
  const Eigen::MatrixXd target = nr.normal_matrix(m.state_dim(), g.chains);
  GradcheckConfig gc;
  gc.targets = g.targets;
  gc.h = g.h;
  gc.theta_coords = g.theta_coords;
  gc.tolerance = g.tolerance;
  gc.seed = Rng::derive(run.cfg.seed, "gradcheck.coords");
  const auto t0 = Clock::now();
  const GradcheckReport rep = gradcheck(m, s, fwd, mse_to_target(target), gc);
  run.phase("gradcheck", 0, 0, seconds_since(t0));

  // retained-state sweep: adjoint (constant) against naive backprop (N + 1)
  for (std::size_t n : {10, 50, 200, 1000}) {
    SampleRequest f = fwd;
    f.grid = time_grid(s, n, run.cfg.solver.grid);
    const SampleResult out = sample_reparam(m, s, f);
    AdjointRequest a;
    a.cond = f.cond;
    a.cfg = f.cfg;
    a.grid = f.grid;
    a.solver = f.solver;
    a.final_y = out.final_y;
    a.dL_dx0 = out.x0 - target;
    const auto t1 = Clock::now();
    const AdjointResult adj = adjoint_backward(m, s, a);
    run.phase("adjoint_N" + std::to_string(n), adj.stats.nfe, adj.stats.max_retained_states, seconds_since(t1));
    const auto t2 = Clock::now();
    const AdjointResult nb = naive_backprop(m, s, f, out.x0 - target);
    run.phase("naive_N" + std::to_string(n), nb.stats.nfe, nb.stats.max_retained_states, seconds_since(t2));
    run.sweep.push_back({static_cast<long>(n), adj.stats.max_retained_states, nb.stats.max_retained_states});
  }
  run.report["max_rel_err"] = rep.max_rel_err;
  run.report["tolerance"] = g.tolerance;
  run.report["passed"] = rep.passed;
  const json j = run.finish(gradcheck_csv(rep));
  if (!rep.passed)
    throw Error("check", "gradcheck: max relative error " + fmt17(rep.max_rel_err) + " exceeds " + fmt17(g.tolerance));
  return j;
}

json cmd_guide(Run& run) {
  const Denoiser m = run.model();
  const ToyClassifier clf = run.classifier();
  const GuideTask& g = run.cfg.task.guide;
  if (g.label >= clf.n_classes()) throw ValidationError("task.guide.label", "label out of range");
  const NoiseSchedule& s = run.cfg.schedule;
  const SampleSettings ss = run.cfg.task.settings();
  Rng nr = run.stream("guide.noise");
  const Eigen::MatrixXd x_T = draw_initial_noise(s, m.state_dim(), g.seeds, nr);

  MetricsTable mt;
  mt.columns = {"seed", "label", "epoch", "logprob", "best_logprob"};
  Eigen::MatrixXd before(m.state_dim(), g.seeds), after(m.state_dim(), g.seeds), best(m.state_dim(), g.seeds);
  json runs = json::array();
  long improved = 0, nfe = 0;
  const auto t0 = Clock::now();
  for (long i = 0; i < g.seeds; ++i) {
    GuideConfig gc;
    gc.epochs = g.epochs;
    gc.opt.lr = g.lr;
    gc.sample = ss;
    if (g.label >= 0) {
      gc.label = g.label;
    } else {
      const Eigen::MatrixXd x0 = sample_reparam(m, s, make_request(s, ss, x_T.col(i), m.embed(std::nullopt))).x0;
      gc.label = (clf.predict(x0)[0] + 1) % clf.n_classes();
    }
    const GuideResult r = optimize_noise(m, s, clf, x_T.col(i), gc);
    nfe += r.nfe;
    for (const auto& row : r.metrics.rows)
      mt.add({static_cast<double>(i), static_cast<double>(gc.label), row[0], row[2], row[3]});
    before.col(i) = r.x0_before;
    best.col(i) = r.x0_best;
    after.col(i) = r.best_x_T;
    const double gain = r.best_logprob[0] - r.initial_logprob[0];
    improved += gain >= 1.0;
    runs.push_back({{"seed", i}, {"label", gc.label}, {"initial_logprob", r.initial_logprob[0]},
                    {"best_logprob", r.best_logprob[0]}, {"gain_nats", gain}});
  }
  run.phase("guide", nfe, 0, seconds_since(t0));
  run.samples("before.csv", before);
  run.samples("after.csv", best);
  run.save_arrays("guided_noise.ckpt", {matrix_array("guide.x_T_initial", x_T), matrix_array("guide.x_T_best", after)});
  run.report["runs"] = runs;
  run.report["runs_gaining_1_nat"] = improved;
  return run.finish(mt.csv());
}

json cmd_audit(Run& run) {
  const Denoiser m = run.model();
  const ToyClassifier clf = run.classifier();
  const AuditTask& a = run.cfg.task.audit;
  const NoiseSchedule& s = run.cfg.schedule;
  const long labels = a.labels < 0 ? m.n_classes() : a.labels;
  if (labels > m.n_classes()) throw ValidationError("task.audit.labels", "more labels than classes");
  Rng nr = run.stream("audit.noise");
  const Eigen::MatrixXd x_T = draw_initial_noise(s, m.state_dim(), a.seeds, nr);
  AuditConfig ac;
  ac.tau = a.tau;
  ac.steps = a.steps;
  ac.step_size = a.step_size;
  ac.loss = a.loss;
  ac.sample = run.cfg.task.settings(a.cfg_scale);

  MetricsTable mt;
  mt.columns = {"label", "iter", "mean_loss", "max_abs_delta", "flipped"};
  std::vector<bool> flags;
  std::vector<long> groups;
  double max_delta = 0.0;
  long nfe = 0;
  Eigen::MatrixXd deltas(m.state_dim(), labels * a.seeds);
  const auto t0 = Clock::now();
  for (long l = 0; l < labels; ++l) {
    const AuditResult r = audit_search(m, s, clf, m.embed(l), x_T, ac);
    nfe += r.nfe;
    for (const auto& row : r.metrics.rows) mt.add({static_cast<double>(l), row[0], row[1], row[2], row[3]});
    for (bool f : r.success) flags.push_back(f), groups.push_back(l);
    max_delta = std::max(max_delta, r.delta.cwiseAbs().maxCoeff());
    deltas.middleCols(l * a.seeds, a.seeds) = r.delta;
  }
  run.phase("audit", nfe, 0, seconds_since(t0));
  const SuccessTable table = success_ratio(flags, groups);
  write_file(run.out / "success_ratio.csv", table.csv());
  run.samples("deltas.csv", deltas);
  json per = json::array();
  for (const auto& g : table.groups)
    per.push_back({{"label", g.group}, {"successes", g.successes}, {"total", g.total}, {"ratio", g.ratio}});
  run.report["success_ratio"] = {{"per_class", per}, {"overall", table.overall}};
  run.report["max_abs_delta"] = max_delta;
  run.report["tau"] = a.tau;
  run.report["within_ball"] = max_delta <= a.tau;
  return run.finish(mt.csv());
}

json cmd_finetune(Run& run) {
  Denoiser m = run.model();
  const ToyClassifier clf = run.classifier();
  const StyleTask& st = run.cfg.task.style;
  const NoiseSchedule& s = run.cfg.schedule;
  if (st.label < 0 || st.label >= m.n_classes()) throw ValidationError("task.style.label", "label out of range");
  MixtureConfig ring = run.cfg.data.mixture;
  ring.radius = st.style_radius;
  Rng sr = run.stream("style.reference");
  const Eigen::MatrixXd G = ring_style_gram(clf, ring, st.label, st.style_points, sr);
  Rng nr = run.stream("style.noise");
  const Eigen::MatrixXd x_T = draw_initial_noise(s, m.state_dim(), st.triplets, nr);
  const SampleSettings ss = run.cfg.task.settings();
  StyleObjective obj = make_style_objective(m, s, ss, G, x_T, m.embed(st.label));
  obj.w_style = st.w_style;
  obj.w_content = st.w_content;
  const Eigen::VectorXd theta0 = m.flatten();
  FinetuneConfig fc;
  fc.epochs = st.epochs;
  fc.opt.lr = st.lr;
  fc.trainable_layers = static_cast<std::size_t>(st.trainable_layers);
  fc.sample = ss;
  const auto t0 = Clock::now();
  const FinetuneResult r = finetune_weights(m, s, clf, obj, fc);
  run.phase("finetune", r.nfe, 0, seconds_since(t0));
  bool frozen_ok = true;
  const Eigen::VectorXd theta1 = m.flatten();
  for (Eigen::Index i = 0; i < theta0.size(); ++i)
    if (!r.trainable[i] && theta0[i] != theta1[i]) frozen_ok = false;
  run.samples("before.csv", obj.x0_ref);
  run.samples("after.csv", sample_reparam(m, s, make_request(s, ss, x_T, m.embed(st.label))).x0);
  run.save_model("finetuned.ckpt", m);
  run.report["initial_loss"] = r.loss_curve.front();
  run.report["final_loss"] = r.loss_curve.back();
  run.report["loss_ratio"] = r.loss_curve.back() / r.loss_curve.front();
  run.report["frozen_unchanged"] = frozen_ok;
  return run.finish(r.metrics.csv());
}

json cmd_invert(Run& run) {
  const Denoiser m = run.model();
  const InvertTask& iv = run.cfg.task.invert;
  const NoiseSchedule& s = run.cfg.schedule;
  if (iv.target_label < 0 || iv.target_label >= m.n_classes())
    throw ValidationError("task.invert.target_label", "label out of range");
  if (iv.base_label >= m.n_classes()) throw ValidationError("task.invert.base_label", "label out of range");
  const SampleSettings ss = run.cfg.task.settings();
  const Eigen::VectorXd c_base =
      iv.base_label < 0 ? Eigen::VectorXd::Zero(m.cond_dim()) : m.embed(iv.base_label);
  Rng nr = run.stream("invert.noise");
  const Eigen::MatrixXd x_T = draw_initial_noise(s, m.state_dim(), iv.seeds, nr);

  MetricsTable mt;
  mt.columns = {"seed", "step", "loss", "best_loss"};
  Eigen::MatrixXd embeddings(m.cond_dim(), iv.seeds), targets(m.state_dim(), iv.seeds);
  json runs = json::array();
  long reached = 0, nfe = 0;
  const auto t0 = Clock::now();
  for (long i = 0; i < iv.seeds; ++i) {
    const Eigen::MatrixXd target = sample_reparam(m, s, make_request(s, ss, x_T.col(i), m.embed(iv.target_label))).x0;
    targets.col(i) = target;
    InversionConfig ic;
    ic.c_base = c_base;
    ic.composition = iv.composition;
    ic.steps = iv.steps;
    ic.opt.lr = iv.lr;
    ic.sample = ss;
    const InversionResult r = invert_embedding(m, s, x_T.col(i), target, ic);
    nfe += r.nfe;
    for (const auto& row : r.metrics.rows) mt.add({static_cast<double>(i), row[0], row[1], row[2]});
    embeddings.col(i) = r.best_embedding;
    const double reduction = 1.0 - r.best_loss / r.initial_loss;
    reached += reduction >= 0.8;
    runs.push_back({{"seed", i}, {"initial_loss", r.initial_loss}, {"best_loss", r.best_loss},
                    {"reduction", reduction}});
  }
  run.phase("invert", nfe, 0, seconds_since(t0));

  // generalization (reported only): fresh noise, c_base + # versus c_base
  Rng fr = run.stream("invert.fresh");
  const Eigen::MatrixXd fresh = draw_initial_noise(s, m.state_dim(), iv.seeds, fr);
  const Eigen::MatrixXd with = sample_reparam(m, s, make_request(s, ss, fresh, embeddings.colwise() + c_base)).x0;
  const Eigen::MatrixXd without = sample_reparam(m, s, make_request(s, ss, fresh, c_base)).x0;
  const Eigen::MatrixXd reference = sample_reparam(m, s, make_request(s, ss, fresh, m.embed(iv.target_label))).x0;
  run.report["fresh_noise_distance_with_embedding"] = (with - reference).colwise().norm().mean();
  run.report["fresh_noise_distance_base_only"] = (without - reference).colwise().norm().mean();

  run.samples("targets.csv", targets);
  run.save_arrays("embeddings.ckpt", {matrix_array("invert.embeddings", embeddings), vector_array("invert.c_base", c_base)});
  run.report["runs"] = runs;
  run.report["runs_reducing_80pct"] = reached;
  return run.finish(mt.csv());
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

json run_command(const std::string& command, const RunConfig& cfg, const std::string& out_dir) {
  if (out_dir.empty()) throw ArgumentError("no output directory (use --output or output_dir)");
  Run run(cfg, out_dir);
  if (command == "train-denoiser") return cmd_train_denoiser(run);
  if (command == "train-classifier") return cmd_train_classifier(run);
  if (command == "sample") return cmd_sample(run);
  if (command == "bench-solvers") return cmd_bench(run);
  if (command == "gradcheck") return cmd_gradcheck(run);
  if (command == "guide") return cmd_guide(run);
  if (command == "audit") return cmd_audit(run);
  if (command == "finetune-style") return cmd_finetune(run);
  if (command == "invert-embed") return cmd_invert(run);
  throw ArgumentError("unknown command '" + command + "'");
}

int cli_main(int argc, char** argv) {
  CLI::App app{"AdjointDPM toy: exponential-integrator sampling and adjoint gradients"};
  app.require_subcommand(1);
  std::string config_path, output;
  std::optional<std::uint64_t> seed;
  for (const std::string& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run config (default: all defaults)");
    sub->add_option("--output", output, "run directory (overrides output_dir)");
    sub->add_option("--seed", seed, "u64 seed (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "adjd: error kind=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::string text = "{}";
    if (!config_path.empty()) {
      std::ifstream f(config_path, std::ios::binary);
      if (!f) throw ArgumentError("cannot read config '" + config_path + "'");
      std::ostringstream ss;
      ss << f.rdbuf();
      text = ss.str();
    }
    RunConfig cfg = parse_config(text);
    if (seed) cfg.seed = *seed;
    if (!output.empty()) cfg.output_dir = output;
    if (cfg.output_dir.empty()) {
      std::cerr << "adjd: error kind=usage message=\"no output directory (use --output or output_dir)\"\n";
      return 2;
    }
    run_command(command, cfg, cfg.output_dir);
    std::cerr << "adjd: " << command << " ok -> " << cfg.output_dir << '\n';
    return 0;
  } catch (const ParseError& e) {
    std::cerr << "adjd: error kind=parse byte=" << e.byte() << " message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "adjd: error kind=validation key=" << e.key_path() << " message=\"" << one_line(e.what())
              << "\"\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "adjd: error kind=" << e.kind() << " message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "adjd: error kind=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
}

}  // namespace adjd
