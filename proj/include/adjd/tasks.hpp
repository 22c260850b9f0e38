#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adjd/adjoint.hpp"
#include "adjd/classifier.hpp"
#include "adjd/data.hpp"
#include "adjd/denoiser.hpp"
#include "adjd/metrics.hpp"
#include "adjd/optim.hpp"
#include "adjd/sampler.hpp"
#include "adjd/schedule.hpp"

namespace adjd {

class Rng;

/// How the tasks generate samples. Defaults follow the applications'
/// setting: Euler with 31 steps on a uniform grid, reparameterized clock.
struct SampleSettings {
  std::size_t steps = 31;
  GridScheme scheme = GridScheme::uniform;
  SolverSpec solver{SolverKind::euler};
  CfgConfig cfg;

  bool operator==(const SampleSettings&) const = default;
};

SampleRequest make_request(const NoiseSchedule& sched, const SampleSettings& s,
                           const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& cond);

/// Runs adjoint_backward for the forward solve `fwd` that produced `out`.
AdjointResult backprop(const Denoiser& model, const NoiseSchedule& sched,
                       const SampleRequest& fwd, const SampleResult& out,
                       const Eigen::MatrixXd& dL_dx0, GradRequest want);

// ---------------------------------------------------------------- guidance

struct GuideConfig {
  Eigen::Index label = 0;                  // class whose log-probability is raised
  std::optional<Eigen::Index> cond_label;  // sampling condition; empty = null row
  long epochs = 30;
  AdamWConfig opt{1e-2};
  SampleSettings sample;
};

struct GuideResult {
  Eigen::MatrixXd x_T;         // after the last update
  Eigen::MatrixXd best_x_T;    // per column, best log-probability seen
  Eigen::MatrixXd x0_before;
  Eigen::MatrixXd x0_best;
  Eigen::VectorXd initial_logprob;
  Eigen::VectorXd best_logprob;
  MetricsTable metrics;        // epoch, loss, mean_logprob, best_mean_logprob
  long nfe = 0;
};

/// Gradient ascent on log p(label | x_0(x_T)) over the initial noise.
GuideResult optimize_noise(const Denoiser& model, const NoiseSchedule& sched,
                           const ToyClassifier& clf, const Eigen::MatrixXd& x_T,
                           const GuideConfig& cfg);

// ------------------------------------------------------------------ audit

enum class AuditLoss { feature_cosine, cross_entropy };
std::string to_string(AuditLoss l);
AuditLoss parse_audit_loss(const std::string& s);

struct AuditConfig {
  double tau = 0.8;
  long steps = 30;
  double step_size = -1.0;  // negative: 0.05 * tau
  AuditLoss loss = AuditLoss::feature_cosine;
  SampleSettings sample;
};

struct AuditResult {
  Eigen::MatrixXd delta;               // d x B, |delta| <= tau elementwise
  std::vector<bool> success;           // decision flipped
  std::vector<Eigen::Index> original_pred;
  std::vector<Eigen::Index> final_pred;
  Eigen::VectorXd sample_distance;     // ||x0(x_T + delta) - x0(x_T)||, reported only
  MetricsTable metrics;                // iter, mean_loss, max_abs_delta, flipped
  long nfe = 0;
};

/// Projected gradient ascent on a distance between the classifier's view of
/// the perturbed and unperturbed samples, inside the inf-norm ball of radius tau.
/// A column stops moving once its decision flips.
AuditResult audit_search(const Denoiser& model, const NoiseSchedule& sched,
                         const ToyClassifier& clf, const Eigen::MatrixXd& cond,
                         const Eigen::MatrixXd& x_T, const AuditConfig& cfg);

// ---------------------------------------------------------- style/content

/// Gram matrix of one feature vector: f f^T / dim(f).
Eigen::MatrixXd gram(const Eigen::VectorXd& f);
/// Mean Gram matrix over the features of `samples`.
Eigen::MatrixXd style_gram(const ToyClassifier& clf, const Eigen::MatrixXd& samples);

/// Style Gram of the points of mode `label` among `n` draws from `ring`.
Eigen::MatrixXd ring_style_gram(const ToyClassifier& clf, const MixtureConfig& ring,
                                Eigen::Index label, Eigen::Index n, Rng& rng);

struct StyleObjective {
  Eigen::MatrixXd gram_style;  // n x n, n = feature dim
  Eigen::MatrixXd x_T;         // d x N
  Eigen::MatrixXd cond;        // cond_dim x N (or x 1, shared)
  Eigen::MatrixXd x0_ref;      // d x N, the content anchors
  double w_style = 1.0;
  double w_content = 1.0;

  Eigen::Index size() const { return x_T.cols(); }
};

/// Builds the triplets (x_T^i, c^i, x_0^i) with the current model.
StyleObjective make_style_objective(const Denoiser& model, const NoiseSchedule& sched,
                                    const SampleSettings& s, const Eigen::MatrixXd& gram_style,
                                    const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& cond);

struct StyleLoss {
  double value = 0.0;
  double style = 0.0;    // weighted style part
  double content = 0.0;  // weighted content part
  Eigen::MatrixXd grad;  // d x N
};

/// (1/N) sum_i [w_s mean((G(x_i) - G_style)^2) + w_c mean((F(ref_i) - F(x_i))^2)].
StyleLoss style_content_loss(const ToyClassifier& clf, const Eigen::MatrixXd& gram_style,
                             const Eigen::MatrixXd& generated, const Eigen::MatrixXd& reference,
                             double w_style, double w_content);

struct FinetuneConfig {
  long epochs = 8;
  AdamWConfig opt{1e-4};
  std::size_t trainable_layers = 2;  // counted from the output
  SampleSettings sample;
};

struct FinetuneResult {
  std::vector<double> loss_curve;  // initial, then after each epoch
  MetricsTable metrics;            // epoch, loss, style, content
  std::vector<bool> trainable;
  long nfe = 0;
};

/// Mask selecting the last `layers` layers of the network weights.
std::vector<bool> last_layers_mask(const Mlp& net, std::size_t layers);

/// Per-triplet AdamW updates of the unmasked weights against the
/// style/content loss; one epoch is one pass over the triplets.
FinetuneResult finetune_weights(Denoiser& model, const NoiseSchedule& sched,
                                const ToyClassifier& clf, const StyleObjective& obj,
                                const FinetuneConfig& cfg);

// --------------------------------------------------------------- inversion

enum class Composition { sum, concat };
std::string to_string(Composition c);
Composition parse_composition(const std::string& s);

struct InversionConfig {
  Eigen::VectorXd c_base;                 // empty: zeros
  std::optional<Eigen::VectorXd> init;    // empty: the null row
  Composition composition = Composition::sum;
  long steps = 200;
  AdamWConfig opt{5e-2};
  SampleSettings sample;
};

struct InversionResult {
  Eigen::VectorXd embedding;       // after the last update
  Eigen::VectorXd best_embedding;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double best_loss = 0.0;
  MetricsTable metrics;            // step, loss, best_loss
  long nfe = 0;
};

/// Optimizes a free embedding added to c_base so that sampling x_T
/// reproduces `target` (mean squared error).
InversionResult invert_embedding(const Denoiser& model, const NoiseSchedule& sched,
                                 const Eigen::MatrixXd& x_T, const Eigen::MatrixXd& target,
                                 const InversionConfig& cfg);

}  // namespace adjd
