#pragma once

#include "advedit/trajgen/trajectory.hpp"
#include "advedit/world/map.hpp"
#include "advedit/world/vehicle.hpp"

namespace advedit::trajgen {

constexpr int kDefaultHorizon = 40;
/// Yaw rates below this magnitude use a series form of the arc chord.
constexpr double kCtrvEpsilon = 1e-4;

/// Constant turn rate and velocity prediction from the state's speed,
/// heading and yaw_rate, closed form.
Trajectory ctrv_predict(const world::VehicleState& state, int n, double dt);

/// Lane centerline ahead of the agent, resampled at max(speed, 1) * dt.
/// At forks the successor whose overall heading change is smallest is
/// followed; past a dead end the final tangent is extrapolated.
Trajectory map_waypoint_traj(const world::VehicleState& agent, const world::MapGraph& map,
                             int n, double dt);

/// p_i = (1 - i/N) model_i + (i/N) map_i for i = 1..N.
Trajectory fuse_linear(const Trajectory& model, const Trajectory& map_t);

}  // namespace advedit::trajgen
