#pragma once

#include <array>
#include <vector>

#include "advedit/common.hpp"

namespace advedit::world {

constexpr int kOffRoad = -1;

struct VehicleState {
  Vec2 position{0.0, 0.0};
  double heading = 0.0;
  double speed = 0.0;
  double yaw_rate = 0.0;
  double steering = 0.0;   // normalized [-1, 1], positive steers right
  double accel_cmd = 0.0;  // normalized [-1, 1]
  double length = 4.5;
  double width = 2.0;
  int lane_id = kOffRoad;
  double arc_pos = 0.0;

  Vec2 velocity() const { return speed * heading_vec(heading); }
};

/// Kinematic bicycle limits shared by every vehicle in a world.
struct VehicleLimits {
  double wheelbase = 2.8;
  double max_steer_rad = deg2rad(35.0);
  double max_accel = 3.0;
  double max_brake = 8.0;
  double max_speed = 16.7;

  double max_curvature() const { return std::tan(max_steer_rad) / wheelbase; }
};

/// One kinematic bicycle step. Heading is updated first, the position then
/// advances along the new heading at the pre-step speed, and finally speed
/// is integrated and clamped to [0, max_speed]. Inputs are clamped.
VehicleState step_vehicle(const VehicleState& v, double steer, double accel,
                          double dt, const VehicleLimits& limits = {});

/// Corners of the oriented footprint, counter-clockwise in world terms.
std::array<Vec2, 4> footprint(const VehicleState& v);

/// Separating-axis overlap test of two oriented footprints.
bool boxes_overlap(const VehicleState& a, const VehicleState& b);

/// Minimum distance between two footprints (0 when they overlap).
double box_distance(const VehicleState& a, const VehicleState& b);

}  // namespace advedit::world
