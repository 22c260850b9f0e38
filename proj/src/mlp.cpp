#include "adjd/mlp.hpp"

#include <cmath>

#include "adjd/errors.hpp"
#include "adjd/rng.hpp"

namespace adjd {
namespace {

void activate(Activation act, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  if (act == Activation::tanh) {
    out = pre.array().tanh();
  } else {
    out = pre.array() / (1.0 + (-pre.array()).exp());
  }
}

// Multiplies `grad` in place by the activation derivative at `pre`.
void activation_backward(Activation act, const Eigen::MatrixXd& pre, Eigen::MatrixXd& grad) {
  if (act == Activation::tanh) {
    grad.array() *= 1.0 - pre.array().tanh().square();
  } else {
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-pre.array()).exp());
    grad.array() *= s * (1.0 + pre.array() * (1.0 - s));
  }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "silu"; }

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "silu") return Activation::silu;
  throw ValidationError("model.activation", "unknown activation '" + s + "'");
}

Mlp::Mlp(std::vector<Eigen::Index> widths, Activation act)
    : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw ArgumentError("Mlp: need at least input and output widths");
  for (auto w : widths_)
    if (w < 0) throw ArgumentError("Mlp: negative layer width");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(total);
    total += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(total);
}

void Mlp::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size())
    throw ArgumentError("Mlp::set_params: expected " + std::to_string(params_.size()) +
                        " values, got " + std::to_string(p.size()));
  params_ = p;
}

Eigen::Map<const RowMajorMatrix> Mlp::weight(std::size_t l) const {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<RowMajorMatrix> Mlp::weight(std::size_t l) {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {params_.data() + bias_offset(l), widths_[l + 1]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) {
  return {params_.data() + bias_offset(l), widths_[l + 1]};
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    auto w = weight(l);
    const double bound = widths_[l] > 0 ? std::sqrt(3.0 / static_cast<double>(widths_[l])) : 0.0;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    bias(l).setZero();
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& in, Cache* cache) const {
  if (in.rows() != in_dim())
    throw ArgumentError("Mlp::forward: input has " + std::to_string(in.rows()) +
                        " rows, expected " + std::to_string(in_dim()));
  if (cache) {
    cache->inputs.resize(num_layers());
    cache->pre.resize(num_layers() - 1);
  }
  Eigen::MatrixXd h = in;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (cache) cache->inputs[l] = std::move(h);
    if (l + 1 == num_layers()) return z;
    activate(act_, z, h);
    if (cache) cache->pre[l] = std::move(z);
  }
  return h;  // unreachable: num_layers() >= 1
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_out,
                              const Eigen::MatrixXd* grad_last_hidden,
                              Eigen::VectorXd* grad_params) const {
  if (grad_params && grad_params->size() != num_params())
    throw ArgumentError("Mlp::backward: parameter gradient has wrong length");
  Eigen::MatrixXd g = grad_out;
  for (std::size_t l = num_layers(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.inputs[l];
    if (grad_params) {
      Eigen::Map<RowMajorMatrix> gw(grad_params->data() + offsets_[l], widths_[l + 1], widths_[l]);
      gw.noalias() += g * input.transpose();
      Eigen::Map<Eigen::VectorXd>(grad_params->data() + bias_offset(l), widths_[l + 1]) +=
          g.rowwise().sum();
    }
    Eigen::MatrixXd gin = weight(l).transpose() * g;
    if (l == 0) return gin;
    if (l + 1 == num_layers() && grad_last_hidden) gin += *grad_last_hidden;
    activation_backward(act_, cache.pre[l - 1], gin);
    g = std::move(gin);
  }
  return g;
}

}  // namespace adjd
