#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "adjd/adjoint.hpp"
#include "adjd/classifier.hpp"
#include "adjd/data.hpp"
#include "adjd/denoiser.hpp"
#include "adjd/sampler.hpp"
#include "adjd/schedule.hpp"
#include "adjd/tasks.hpp"
#include "adjd/training.hpp"

namespace adjd {

// One flat JSON document per run. Every block is optional; missing keys take
// the defaults below and unknown keys are rejected with their dotted path.

struct DataBlock {
  MixtureConfig mixture;
  long n_train = 8192;
  long n_holdout = 1024;
  bool operator==(const DataBlock&) const = default;
};

struct ModelBlock {
  DenoiserConfig denoiser{2, {64, 64}};
  TrainConfig train{2000, 128, 0.1, AdamWConfig{2e-3}};
  std::string checkpoint;  // load instead of training when set
  bool operator==(const ModelBlock&) const = default;
};

struct ClassifierBlock {
  ClassifierConfig classifier;
  ClassifierTrainConfig train;
  std::string checkpoint;
  bool operator==(const ClassifierBlock&) const = default;
};

/// Sampling settings of `sample`, `bench-solvers` and `gradcheck`.
struct SolverBlock {
  SolverSpec spec;
  std::size_t steps = 50;
  GridScheme grid = GridScheme::uniform;
  SampleMode mode = SampleMode::reparam;
  double cfg_scale = 1.0;
  bool operator==(const SolverBlock&) const = default;
};

struct SampleTask {
  long count = 512;
  long label = -1;  // -1: null condition
  bool operator==(const SampleTask&) const = default;
};

struct BenchTask {
  std::vector<long> nfe{10, 20, 50};
  long reference_nfe = 1000;
  long chains = 64;
  SolverKind solver = SolverKind::euler;
  GridScheme grid = GridScheme::uniform;
  long label = -1;
  bool operator==(const BenchTask&) const = default;
};

struct GradcheckTask {
  std::size_t steps = 200;
  SolverKind solver = SolverKind::rk4;
  std::vector<GradTarget> targets{GradTarget::noise, GradTarget::theta, GradTarget::cond};
  double h = 1e-4;
  long theta_coords = 20;
  double tolerance = 1e-3;
  long chains = 1;
  long label = 1;
  bool operator==(const GradcheckTask&) const = default;
};

struct GuideTask {
  long label = -1;  // -1: the class next to the unguided sample's
  long seeds = 10;
  long epochs = 30;
  double lr = 1e-2;
  bool operator==(const GuideTask&) const = default;
};

struct AuditTask {
  double tau = 0.8;
  long steps = 30;
  double step_size = -1.0;
  AuditLoss loss = AuditLoss::feature_cosine;
  double cfg_scale = 0.5;
  long seeds = 100;
  long labels = -1;  // -1: every class
  bool operator==(const AuditTask&) const = default;
};

struct StyleTask {
  long label = 0;
  long triplets = 16;
  double style_radius = 1.3;
  long style_points = 512;
  double w_style = 4096.0;  // = dim(F)^2, balances the Gram MSE against the feature MSE
  double w_content = 1.0;
  long epochs = 8;
  double lr = 1e-4;
  long trainable_layers = 2;
  bool operator==(const StyleTask&) const = default;
};

struct InvertTask {
  long seeds = 10;
  long target_label = 5;
  long base_label = -1;  // -1: c_base = 0
  Composition composition = Composition::sum;
  long steps = 200;
  double lr = 5e-2;
  bool operator==(const InvertTask&) const = default;
};

struct TaskBlock {
  SolverKind solver = SolverKind::euler;
  std::size_t steps = 31;
  GridScheme grid = GridScheme::uniform;
  SampleTask sample;
  BenchTask bench;
  GradcheckTask gradcheck;
  GuideTask guide;
  AuditTask audit;
  StyleTask style;
  InvertTask invert;
  bool operator==(const TaskBlock&) const = default;

  SampleSettings settings(double cfg_scale = 1.0) const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  NoiseSchedule schedule;
  DataBlock data;
  ModelBlock model;
  ClassifierBlock classifier;
  SolverBlock solver;
  TaskBlock task;
  bool operator==(const RunConfig&) const = default;
};

/// Parses and validates a config document. Throws ParseError (with the byte
/// offset) on malformed JSON and ValidationError (with the key path) otherwise.
RunConfig parse_config(const std::string& text);
nlohmann::json to_json(const RunConfig& cfg);
/// Pretty JSON with every default filled in; parse_config(serialize(c)) == c.
std::string serialize(const RunConfig& cfg);

}  // namespace adjd
