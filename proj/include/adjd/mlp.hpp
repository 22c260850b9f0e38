#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace adjd {

class Rng;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { tanh, silu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Fully-connected network with a hidden activation and a linear output layer.
/// Samples are columns. All parameters live in one flat vector, laid out per
/// layer as W_l (out x in, row-major) followed by b_l, so flatten/unflatten
/// is a plain copy.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input to layer l (post-activation)
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of hidden layer l
  };

  Mlp() = default;
  /// widths = {in, hidden..., out}; hidden widths may be 0.
  Mlp(std::vector<Eigen::Index> widths, Activation act);

  const std::vector<Eigen::Index>& widths() const { return widths_; }
  Activation activation() const { return act_; }
  std::size_t num_layers() const { return widths_.size() - 1; }
  Eigen::Index in_dim() const { return widths_.front(); }
  Eigen::Index out_dim() const { return widths_.back(); }
  Eigen::Index num_params() const { return params_.size(); }

  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }
  void set_params(const Eigen::VectorXd& p);

  Eigen::Index weight_offset(std::size_t l) const { return offsets_[l]; }
  Eigen::Index bias_offset(std::size_t l) const {
    return offsets_[l] + widths_[l + 1] * widths_[l];
  }
  Eigen::Map<const RowMajorMatrix> weight(std::size_t l) const;
  Eigen::Map<RowMajorMatrix> weight(std::size_t l);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t l);

  /// Scaled-uniform (LeCun) weights, zero biases.
  void init(Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in, Cache* cache = nullptr) const;

  /// Reverse pass. `grad_out` is the cotangent of the outputs; `grad_last_hidden`
  /// (optional) is an extra cotangent on the last hidden activation. Parameter
  /// gradients summed over the batch are added into `grad_params` when given.
  /// Returns the cotangent of the inputs.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& grad_out,
                           const Eigen::MatrixXd* grad_last_hidden,
                           Eigen::VectorXd* grad_params) const;

 private:
  std::vector<Eigen::Index> widths_;
  std::vector<Eigen::Index> offsets_;
  Activation act_ = Activation::silu;
  Eigen::VectorXd params_;
};

}  // namespace adjd
