#include "advedit/policy/mlp.hpp"

#include <cmath>

namespace advedit::policy {

Mlp::Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ValidationError("Mlp: need at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw ValidationError("Mlp: layer sizes must be positive");
  }
  Eigen::Index total = 0;
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  theta_.resize(total);
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    const Eigen::Index n = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
    for (Eigen::Index i = 0; i < n; ++i) theta_(offsets_[l] + i) = rng.uniform(-bound, bound);
  }
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(size_t l) const {
  return {theta_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(size_t l) const {
  return {theta_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1],
          sizes_[l + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  if (x.rows() != in_dim()) throw ValidationError("Mlp::forward: input dimension mismatch");
  if (tape) {
    tape->act.resize(layers() + 1);
    tape->act[0] = x;
  }
  Eigen::MatrixXd h = x;
  for (size_t l = 0; l < layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < layers()) z = z.cwiseMax(0.0);
    h = std::move(z);
    if (tape) tape->act[l + 1] = h;
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& dout,
                              Eigen::VectorXd* grad) const {
  if (grad && grad->size() != theta_.size()) *grad = Eigen::VectorXd::Zero(theta_.size());
  Eigen::MatrixXd d = dout;
  for (size_t l = layers(); l-- > 0;) {
    if (l + 1 < layers()) {
      // ReLU derivative taken from the layer output (zero where clipped).
      d = d.cwiseProduct((tape.act[l + 1].array() > 0.0).cast<double>().matrix());
    }
    if (grad) {
      Eigen::Map<Eigen::MatrixXd> gw(grad->data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      Eigen::Map<Eigen::VectorXd> gb(
          grad->data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1],
          sizes_[l + 1]);
      gw.noalias() += d * tape.act[l].transpose();
      gb += d.rowwise().sum();
    }
    d = weight(l).transpose() * d;
  }
  return d;
}

void Mlp::save(BinaryWriter& w) const {
  w.ints(sizes_);
  w.vec(theta_);
}

Mlp Mlp::load(BinaryReader& r) {
  Mlp m;
  m.sizes_ = r.ints();
  if (m.sizes_.size() < 2) throw ParseError("Mlp: bad layer list");
  Eigen::Index total = 0;
  for (size_t l = 0; l + 1 < m.sizes_.size(); ++l) {
    if (m.sizes_[l] < 1 || m.sizes_[l + 1] < 1) throw ParseError("Mlp: bad layer size");
    m.offsets_.push_back(total);
    total += static_cast<Eigen::Index>(m.sizes_[l]) * m.sizes_[l + 1] + m.sizes_[l + 1];
  }
  m.theta_ = r.vec();
  if (m.theta_.size() != total) throw ParseError("Mlp: parameter count does not match layers");
  return m;
}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
  if (m.size() != theta.size()) {
    m = Eigen::VectorXd::Zero(theta.size());
    v = Eigen::VectorXd::Zero(theta.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

void Adam::save(BinaryWriter& w) const {
  w.f64(beta1);
  w.f64(beta2);
  w.f64(eps);
  w.i64(t);
  w.vec(m);
  w.vec(v);
}

Adam Adam::load(BinaryReader& r) {
  Adam a;
  a.beta1 = r.f64();
  a.beta2 = r.f64();
  a.eps = r.f64();
  a.t = r.i64();
  a.m = r.vec();
  a.v = r.vec();
  if (a.m.size() != a.v.size()) throw ParseError("Adam: moment sizes differ");
  return a;
}

}  // namespace advedit::policy
