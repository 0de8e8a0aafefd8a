#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "advedit/postproc/postproc.hpp"

namespace advedit::postproc {

Eigen::MatrixXd bspline_basis(int n, int degree) {
  if (n < 2) throw ValidationError("bspline_basis: need at least 2 samples");
  const int p = std::clamp(degree, 1, n - 1);
  std::vector<double> knots(static_cast<size_t>(n + p + 1), 0.0);
  for (int j = 0; j <= p; ++j) knots[static_cast<size_t>(n + j)] = 1.0;
  for (int j = 1; j < n - p; ++j) {
    knots[static_cast<size_t>(p + j)] = static_cast<double>(j) / static_cast<double>(n - p);
  }

  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> left(static_cast<size_t>(p + 1)), right(static_cast<size_t>(p + 1)),
      basis(static_cast<size_t>(p + 1));
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n - 1);
    int span = n - 1;
    if (u < 1.0) {
      span = p;
      while (span < n - 1 && knots[static_cast<size_t>(span + 1)] <= u) ++span;
    }
    basis[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[static_cast<size_t>(j)] = u - knots[static_cast<size_t>(span + 1 - j)];
      right[static_cast<size_t>(j)] = knots[static_cast<size_t>(span + j)] - u;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double denom = right[static_cast<size_t>(r + 1)] + left[static_cast<size_t>(j - r)];
        const double temp = denom > 0.0 ? basis[static_cast<size_t>(r)] / denom : 0.0;
        basis[static_cast<size_t>(r)] = saved + right[static_cast<size_t>(r + 1)] * temp;
        saved = left[static_cast<size_t>(j - r)] * temp;
      }
      basis[static_cast<size_t>(j)] = saved;
    }
    for (int j = 0; j <= p; ++j) b(i, span - p + j) = basis[static_cast<size_t>(j)];
  }
  return b;
}

Trajectory bspline_smooth(const Trajectory& t, double lambda, int degree) {
  t.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("bspline_smooth: lambda must be finite and non-negative");
  }
  Trajectory out = advance(t, trajgen::Stage::Smoothed);
  const int n = static_cast<int>(t.size());
  const bool all_same = std::all_of(t.points.begin(), t.points.end(),
                                    [&](const Vec2& p) { return p == t.points.front(); });
  if (all_same) return out;

  const Eigen::MatrixXd b = bspline_basis(n, degree);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(std::max(n - 2, 0), n);
  for (int i = 0; i + 2 < n; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  const Eigen::MatrixXd db = d * b;
  const Eigen::MatrixXd m = b.transpose() * b + lambda * db.transpose() * db;

  Eigen::MatrixXd y(n, 2);
  for (int i = 0; i < n; ++i) y.row(i) = t.points[static_cast<size_t>(i)].transpose();
  const Eigen::MatrixXd rhs = b.transpose() * y;

  Eigen::MatrixXd c(n, 2);
  c.row(0) = y.row(0);
  c.row(n - 1) = y.row(n - 1);
  if (n > 2) {
    const int k = n - 2;
    const Eigen::MatrixXd mii = m.block(1, 1, k, k);
    Eigen::MatrixXd r = rhs.middleRows(1, k) - m.block(1, 0, k, 1) * c.row(0) -
                        m.block(1, n - 1, k, 1) * c.row(n - 1);
    c.middleRows(1, k) = mii.ldlt().solve(r);
  }
  const Eigen::MatrixXd fitted = b * c;
  for (int i = 0; i < n; ++i) out.points[static_cast<size_t>(i)] = fitted.row(i).transpose();
  out.points.front() = t.points.front();
  out.points.back() = t.points.back();
  out.validate();
  return out;
}

double sigmoid_weight(int i, int n, double m) {
  return 1.0 / (1.0 + std::exp(m * (2.0 * i - n) / static_cast<double>(n)));
}

Trajectory sigmoid_fuse(const Trajectory& base, const Trajectory& smoothed, double m) {
  if (base.size() != smoothed.size()) {
    throw ValidationError("sigmoid_fuse: length mismatch (" + std::to_string(base.size()) +
                          " vs " + std::to_string(smoothed.size()) + ")");
  }
  if (base.frame != smoothed.frame) throw ValidationError("sigmoid_fuse: frame mismatch");
  if (!std::isfinite(m)) throw ValidationError("sigmoid_fuse: steepness must be finite");
  Trajectory out = advance(smoothed, trajgen::Stage::Curve);
  const int n = static_cast<int>(base.size());
  for (int i = 1; i <= n; ++i) {
    const double w = sigmoid_weight(i, n, m);
    const auto k = static_cast<size_t>(i - 1);
    out.points[k] = w * base.points[k] + (1.0 - w) * smoothed.points[k];
  }
  return out;
}

}  // namespace advedit::postproc
