#pragma once

#include <vector>

#include <Eigen/Core>

#include "advedit/trajgen/trajectory.hpp"
#include "advedit/world/vehicle.hpp"

namespace advedit::postproc {

using trajgen::Trajectory;
using Matrix4 = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;
using RowVector4 = Eigen::RowVector4d;

constexpr double kDefaultSmoothing = 0.5;  // m^2
constexpr double kDefaultSigmoidM = 6.0;

/// Clamped uniform B-spline with one control point per sample, fitted per
/// coordinate against the sample index by penalised least squares
/// (second-difference energy weighted by `lambda`), endpoints pinned.
/// Identical input points are returned unchanged.
Trajectory bspline_smooth(const Trajectory& t, double lambda = kDefaultSmoothing, int degree = 3);

/// Basis matrix: row j holds all basis functions at sample j of n.
Eigen::MatrixXd bspline_basis(int n, int degree);

/// w_i = 1 / (1 + exp(M (2i - N) / N)), i = 1..N.
double sigmoid_weight(int i, int n, double m);

/// T_curve[i] = w_i T_base[i] + (1 - w_i) T_B[i].
Trajectory sigmoid_fuse(const Trajectory& base, const Trajectory& smoothed,
                        double m = kDefaultSigmoidM);

struct LqrParams {
  // Weights in state order [e_lat, e_lat rate, e_head, e_head rate].
  Vector4 q{1.0, 2.0, 0.1, 0.1};
  double r = 10.0;
  double kp = 2.0;  // longitudinal position gain, 1/s^2
  double kd = 3.0;  // longitudinal speed gain, 1/s
  double tolerance = 1e-9;
  int max_iterations = 10000;
  double min_speed = 1.0;      // gains are never scheduled below this speed
  double speed_bucket = 0.25;  // m/s, gain-cache resolution
};

class RiccatiError : public Error {
 public:
  RiccatiError(const std::string& msg, double spectral_radius)
      : Error(msg), spectral_radius_(spectral_radius) {}
  double spectral_radius() const { return spectral_radius_; }

 private:
  double spectral_radius_;
};

/// Lateral-error plant about a reference path at speed `v`. State is
/// [e_lat, e_lat rate, e_head, e_head rate]; input is normalized steering.
void lateral_plant(double v, double dt, const world::VehicleLimits& lim, Matrix4& a, Vector4& b);

struct DareSolution {
  Matrix4 p;
  RowVector4 k;
  int iterations = 0;
};

/// Fixed-point iteration of the discrete algebraic Riccati equation.
/// Throws RiccatiError naming the closed-loop spectral radius on failure.
DareSolution solve_dare(const Matrix4& a, const Vector4& b, const Matrix4& q, double r,
                        double tolerance = 1e-9, int max_iterations = 10000);

RowVector4 lqr_gain(double v, double dt, const world::VehicleLimits& lim, const LqrParams& p);

struct ControlStep {
  double steer = 0.0;
  double accel = 0.0;
  double e_lat = 0.0;
  double e_head = 0.0;
};

struct LqrResult {
  Trajectory final_traj;                   // stage Final, world frame
  std::vector<world::VehicleState> states;  // pose after each step
  std::vector<ControlStep> log;
  double max_deviation = 0.0;  // worst |T_final[i] - T_curve[i]|, fidelity only
};

/// Tracks `curve` (world frame) from `start` with the bicycle model. The
/// steering command is additionally limited so that the discrete path
/// curvature never exceeds the vehicle's limit while the speed changes.
LqrResult lqr_track(const Trajectory& curve, const world::VehicleState& start, double dt,
                    const LqrParams& p = {}, const world::VehicleLimits& lim = {});

struct FeasibilityReport {
  double max_curvature = 0.0;  // 1/m
  double max_accel = 0.0;      // m/s^2, largest positive speed change rate
  double max_decel = 0.0;      // m/s^2, magnitude of the most negative one
  double max_speed = 0.0;      // m/s
  double max_steer = 0.0;      // normalized steering proxy
  bool within_limits = true;
};

/// Menger curvature over consecutive triples, acceleration from successive
/// segment speeds, steering proxy atan(L dtheta / segment) / max_steer.
/// Segments shorter than 1e-6 m are skipped for curvature and steering.
FeasibilityReport feasibility_report(const Trajectory& t, double dt,
                                     const world::VehicleLimits& lim = {}, double tol = 1e-6);

/// Menger curvature of three points (0 for degenerate triples).
double menger_curvature(const Vec2& a, const Vec2& b, const Vec2& c);

}  // namespace advedit::postproc
