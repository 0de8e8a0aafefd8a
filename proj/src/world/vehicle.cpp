#include "advedit/world/vehicle.hpp"

#include <algorithm>
#include <limits>

namespace advedit::world {

VehicleState step_vehicle(const VehicleState& v, double steer, double accel,
                          double dt, const VehicleLimits& limits) {
  steer = std::clamp(steer, -1.0, 1.0);
  accel = std::clamp(accel, -1.0, 1.0);
  VehicleState out = v;
  const double delta = steer * limits.max_steer_rad;
  const double dh = (v.speed / limits.wheelbase) * std::tan(delta) * dt;
  out.heading = wrap_angle(v.heading + dh);
  out.position = v.position + v.speed * dt * heading_vec(out.heading);
  const double a = accel >= 0.0 ? accel * limits.max_accel : accel * limits.max_brake;
  out.speed = std::clamp(v.speed + a * dt, 0.0, limits.max_speed);
  out.yaw_rate = dh / dt;
  out.steering = steer;
  out.accel_cmd = accel;
  return out;
}

std::array<Vec2, 4> footprint(const VehicleState& v) {
  const Vec2 f = 0.5 * v.length * heading_vec(v.heading);
  const Vec2 r = 0.5 * v.width * right_normal(v.heading);
  const Vec2& c = v.position;
  return {c + f + r, c + f - r, c - f - r, c - f + r};
}

namespace {

bool separated_on(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b,
                  const Vec2& axis) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (const auto& p : a) {
    const double d = p.dot(axis);
    amin = std::min(amin, d);
    amax = std::max(amax, d);
  }
  for (const auto& p : b) {
    const double d = p.dot(axis);
    bmin = std::min(bmin, d);
    bmax = std::max(bmax, d);
  }
  return amax < bmin || bmax < amin;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

}  // namespace

bool boxes_overlap(const VehicleState& a, const VehicleState& b) {
  const auto pa = footprint(a);
  const auto pb = footprint(b);
  const Vec2 axes[4] = {heading_vec(a.heading), right_normal(a.heading),
                        heading_vec(b.heading), right_normal(b.heading)};
  for (const auto& axis : axes) {
    if (separated_on(pa, pb, axis)) return false;
  }
  return true;
}

double box_distance(const VehicleState& a, const VehicleState& b) {
  if (boxes_overlap(a, b)) return 0.0;
  const auto pa = footprint(a);
  const auto pb = footprint(b);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, point_segment_distance(pa[i], pb[j], pb[(j + 1) % 4]));
      best = std::min(best, point_segment_distance(pb[i], pa[j], pa[(j + 1) % 4]));
    }
  }
  return best;
}

}  // namespace advedit::world
