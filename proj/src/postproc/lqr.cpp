#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "advedit/postproc/postproc.hpp"

namespace advedit::postproc {

void lateral_plant(double v, double dt, const world::VehicleLimits& lim, Matrix4& a, Vector4& b) {
  const double g = lim.max_steer_rad / lim.wheelbase;
  a << 1.0, 0.0, v * dt, 0.0,
       0.0, 0.0, v, 0.0,
       0.0, 0.0, 1.0, 0.0,
       0.0, 0.0, 0.0, 0.0;
  b << dt * dt * v * v * g, dt * v * v * g, dt * v * g, v * g;
}

namespace {

double spectral_radius(const Matrix4& m) {
  Eigen::EigenSolver<Matrix4> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

DareSolution solve_dare(const Matrix4& a, const Vector4& b, const Matrix4& q, double r,
                        double tolerance, int max_iterations) {
  if (!(r > 0.0)) throw ValidationError("solve_dare: R must be positive");
  Matrix4 p = q;
  RowVector4 k = RowVector4::Zero();
  for (int it = 1; it <= max_iterations; ++it) {
    const double s = r + b.dot(p * b);
    k = (b.transpose() * p * a) / s;
    Matrix4 next = q + a.transpose() * p * (a - b * k);
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (change <= tolerance * std::max(1.0, p.cwiseAbs().maxCoeff())) {
      k = (b.transpose() * p * a) / (r + b.dot(p * b));
      return {p, k, it};
    }
  }
  const Matrix4 closed = a - b * k;
  const double rho = closed.allFinite() ? spectral_radius(closed) : INFINITY;
  throw RiccatiError("solve_dare: no convergence after " + std::to_string(max_iterations) +
                         " iterations, closed-loop spectral radius " + std::to_string(rho),
                     rho);
}

RowVector4 lqr_gain(double v, double dt, const world::VehicleLimits& lim, const LqrParams& p) {
  Matrix4 a;
  Vector4 b;
  lateral_plant(std::max(v, p.min_speed), dt, lim, a, b);
  const Matrix4 q = p.q.asDiagonal();
  return solve_dare(a, b, q, p.r, p.tolerance, p.max_iterations).k;
}

namespace {

struct Reference {
  std::vector<Vec2> pts;       // start position followed by the curve
  std::vector<double> arc;     // cumulative arc length at each point
  std::vector<double> heading; // per segment, degenerate segments inherit
  std::vector<double> len;     // per segment
};

Reference build_reference(const Trajectory& curve, const world::VehicleState& start) {
  Reference r;
  r.pts.reserve(curve.size() + 1);
  r.pts.push_back(start.position);
  r.pts.insert(r.pts.end(), curve.points.begin(), curve.points.end());
  const size_t segs = r.pts.size() - 1;
  r.arc.assign(r.pts.size(), 0.0);
  r.heading.assign(segs, start.heading);
  r.len.assign(segs, 0.0);
  double last = start.heading;
  for (size_t j = 0; j < segs; ++j) {
    const Vec2 d = r.pts[j + 1] - r.pts[j];
    r.len[j] = d.norm();
    r.arc[j + 1] = r.arc[j] + r.len[j];
    if (r.len[j] > 1e-6) last = std::atan2(d.y(), d.x());
    r.heading[j] = last;
  }
  return r;
}

// Largest turning angle between consecutive segments of lengths a and b
// whose Menger curvature stays within kappa.
double max_turn(double a, double b, double kappa) {
  auto curvature = [&](double phi) {
    const double c2 = a * a + b * b + 2.0 * a * b * std::cos(phi);
    return c2 > 0.0 ? 2.0 * std::sin(phi) / std::sqrt(c2) : INFINITY;
  };
  double lo = 0.0, hi = 0.5 * kPi;
  if (curvature(hi) <= kappa) return hi;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (curvature(mid) <= kappa ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

LqrResult lqr_track(const Trajectory& curve, const world::VehicleState& start, double dt,
                    const LqrParams& p, const world::VehicleLimits& lim) {
  curve.validate();
  if (curve.frame != trajgen::TrajFrame::World) {
    throw ValidationError("lqr_track: reference must be in the world frame");
  }
  if (!(dt > 0.0)) throw ValidationError("lqr_track: dt must be positive");

  const Reference ref = build_reference(curve, start);
  const size_t n = curve.size();
  const size_t segs = ref.len.size();
  std::map<long, RowVector4> gains;
  auto gain_for = [&](double v) {
    const long bucket = std::lround(std::max(v, p.min_speed) / p.speed_bucket);
    auto it = gains.find(bucket);
    if (it == gains.end()) {
      it = gains.emplace(bucket, lqr_gain(static_cast<double>(bucket) * p.speed_bucket, dt, lim, p))
               .first;
    }
    return it->second;
  };

  LqrResult out;
  out.final_traj = advance(curve, trajgen::Stage::Final);
  out.states.reserve(n);
  out.log.reserve(n);
  const double kappa_max = lim.max_curvature();
  world::VehicleState x = start;
  Vec2 prev_pos = start.position - start.speed * dt * heading_vec(start.heading);
  size_t seg = 0;

  for (size_t k = 0; k < n; ++k) {
    // Projection onto the reference, searching a short window ahead.
    double best = INFINITY, best_t = 0.0;
    size_t best_seg = seg;
    for (size_t j = seg; j < std::min(segs, seg + 8); ++j) {
      const Vec2 d = ref.pts[j + 1] - ref.pts[j];
      const double l2 = d.squaredNorm();
      const double t = l2 > 1e-12 ? std::clamp((x.position - ref.pts[j]).dot(d) / l2, 0.0, 1.0) : 0.0;
      const double dist = (ref.pts[j] + t * d - x.position).norm();
      if (dist < best - 1e-12) {
        best = dist;
        best_t = t;
        best_seg = j;
      }
    }
    seg = best_seg;
    const double th = ref.heading[seg];
    const Vec2 proj = ref.pts[seg] + best_t * (ref.pts[seg + 1] - ref.pts[seg]);
    const double s = ref.arc[seg] + best_t * ref.len[seg];
    double kappa = 0.0;
    if (seg + 1 < segs) {
      const double span = 0.5 * (ref.len[seg] + ref.len[seg + 1]);
      if (span > 1e-6) kappa = wrap_angle(ref.heading[seg + 1] - th) / span;
    }

    const double v = x.speed;
    const double e_lat = (x.position - proj).dot(right_normal(th));
    const double e_head = wrap_angle(x.heading - th);
    Vector4 err(e_lat, v * std::sin(e_head), e_head, x.yaw_rate - v * kappa);
    const RowVector4 kgain = gain_for(v);
    double steer = std::atan(lim.wheelbase * kappa) / lim.max_steer_rad - kgain.dot(err);
    steer = std::clamp(steer, -1.0, 1.0);

    const double b = v * dt;
    if (b > 0.0) {
      const double a = (x.position - prev_pos).norm();
      const double tan_lim = max_turn(a, b, kappa_max) * (1.0 - 1e-9) * lim.wheelbase / b;
      const double steer_lim = std::min(1.0, std::atan(tan_lim) / lim.max_steer_rad);
      steer = std::clamp(steer, -steer_lim, steer_lim);
    }

    const double s_target = ref.arc[k];
    const double v_target = ref.len[k] / dt;
    const double a_des = p.kp * (s_target - s) + p.kd * (v_target - v);
    const double accel =
        std::clamp(a_des >= 0.0 ? a_des / lim.max_accel : a_des / lim.max_brake, -1.0, 1.0);

    prev_pos = x.position;
    x = world::step_vehicle(x, steer, accel, dt, lim);
    out.states.push_back(x);
    out.log.push_back({steer, accel, e_lat, e_head});
    out.final_traj.points[k] = x.position;
    out.max_deviation = std::max(out.max_deviation, (x.position - curve.points[k]).norm());
  }
  return out;
}

}  // namespace advedit::postproc
