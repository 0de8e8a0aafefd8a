#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/common.hpp"

namespace advedit::trajgen {

/// Pipeline stage of a trajectory, in processing order.
enum class Stage { Model, Map, Base, Edit, Smoothed, Curve, Final };

enum class TrajFrame { World, AgentRelative };

std::string stage_name(Stage s);  // "T_model", "T_map", ...
Stage stage_from_name(const std::string& name);
std::string frame_name(TrajFrame f);
TrajFrame frame_from_name(const std::string& name);

/// Points are sampled at t_i = i * dt for i = 1..N relative to the moment the
/// trajectory was produced (the current pose itself is not included).
struct Trajectory {
  Stage stage = Stage::Model;
  TrajFrame frame = TrajFrame::World;
  double dt = 1.0 / 15.0;
  std::vector<Vec2> points;

  size_t size() const { return points.size(); }
  /// Throws ValidationError unless N >= 2, dt > 0 and every point is finite.
  void validate() const;
};

/// Copy of `t` retagged to a later stage. Throws ValidationError when `to`
/// does not come after the current stage.
Trajectory advance(const Trajectory& t, Stage to);

/// Re-expresses `t` in `target` frame given the agent frame (origin and
/// heading in world coordinates).
Trajectory to_frame(const Trajectory& t, const Frame2D& agent, TrajFrame target);

/// `traj/v1` record with coordinates rounded to 3 decimals.
nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);

}  // namespace advedit::trajgen
