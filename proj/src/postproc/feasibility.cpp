#include <algorithm>
#include <cmath>

#include "advedit/postproc/postproc.hpp"

namespace advedit::postproc {

double menger_curvature(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double ab = (b - a).norm(), bc = (c - b).norm(), ca = (a - c).norm();
  const double denom = ab * bc * ca;
  if (denom <= 0.0) return 0.0;
  const double cross = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  return 2.0 * std::abs(cross) / denom;
}

FeasibilityReport feasibility_report(const Trajectory& t, double dt,
                                     const world::VehicleLimits& lim, double tol) {
  t.validate();
  if (!(dt > 0.0)) throw ValidationError("feasibility_report: dt must be positive");
  constexpr double kMinSegment = 1e-6;
  FeasibilityReport r;
  const size_t n = t.size();
  std::vector<double> len(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    len[i] = (t.points[i + 1] - t.points[i]).norm();
    r.max_speed = std::max(r.max_speed, len[i] / dt);
  }
  for (size_t i = 1; i + 1 < n; ++i) {
    const double dv = (len[i] - len[i - 1]) / dt;
    r.max_accel = std::max(r.max_accel, dv / dt);
    r.max_decel = std::max(r.max_decel, -dv / dt);
    if (len[i - 1] < kMinSegment || len[i] < kMinSegment) continue;
    r.max_curvature = std::max(
        r.max_curvature, menger_curvature(t.points[i - 1], t.points[i], t.points[i + 1]));
    const Vec2 d0 = t.points[i] - t.points[i - 1];
    const Vec2 d1 = t.points[i + 1] - t.points[i];
    const double turn = std::abs(wrap_angle(std::atan2(d1.y(), d1.x()) - std::atan2(d0.y(), d0.x())));
    r.max_steer = std::max(r.max_steer, std::atan(lim.wheelbase * turn / len[i]) / lim.max_steer_rad);
  }
  auto ok = [tol](double value, double limit) { return value <= limit + tol * std::max(1.0, limit); };
  r.within_limits = ok(r.max_curvature, lim.max_curvature()) && ok(r.max_accel, lim.max_accel) &&
                    ok(r.max_decel, lim.max_brake) && ok(r.max_speed, lim.max_speed) &&
                    ok(r.max_steer, 1.0);
  return r;
}

}  // namespace advedit::postproc
