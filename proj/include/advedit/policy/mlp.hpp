#pragma once

#include <vector>

#include <Eigen/Core>

#include "advedit/binio.hpp"
#include "advedit/common.hpp"

namespace advedit::policy {

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters live in one flat vector (per layer: weights column-major, then
/// bias) so optimizers, target averaging and checkpoints act on it directly.
/// Batches are matrices with one sample per column.
class Mlp {
 public:
  Mlp() = default;
  /// `sizes` = {input, hidden..., output}. Weights and biases are drawn from
  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<int> sizes, Rng& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  size_t layers() const { return sizes_.size() - 1; }

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }
  Eigen::Index num_params() const { return theta_.size(); }

  struct Tape {
    std::vector<Eigen::MatrixXd> act;  // act[0] input, act[l] output of layer l
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;

  /// Reverse pass for d(loss)/d(output) = `dout`. Adds parameter gradients to
  /// `grad` when given and returns d(loss)/d(input).
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& dout,
                           Eigen::VectorXd* grad) const;

  void save(BinaryWriter& w) const;
  static Mlp load(BinaryReader& r);

 private:
  Eigen::Map<const Eigen::MatrixXd> weight(size_t l) const;
  Eigen::Map<const Eigen::VectorXd> bias(size_t l) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's weights
  Eigen::VectorXd theta_;
};

/// Adam with bias correction.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr);
  void save(BinaryWriter& w) const;
  static Adam load(BinaryReader& r);
};

}  // namespace advedit::policy
