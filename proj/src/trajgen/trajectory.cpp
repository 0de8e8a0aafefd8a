#include "advedit/trajgen/trajectory.hpp"

#include <array>
#include <cmath>

namespace advedit::trajgen {

namespace {
constexpr std::array<const char*, 7> kStageNames = {"T_model", "T_map",   "T_base", "T_edit",
                                                    "T_B",     "T_curve", "T_final"};
}

std::string stage_name(Stage s) { return kStageNames[static_cast<size_t>(s)]; }

Stage stage_from_name(const std::string& name) {
  for (size_t i = 0; i < kStageNames.size(); ++i) {
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  }
  throw ParseError("traj/v1: unknown stage '" + name + "'");
}

std::string frame_name(TrajFrame f) {
  return f == TrajFrame::World ? "world" : "agent_relative";
}

TrajFrame frame_from_name(const std::string& name) {
  if (name == "world") return TrajFrame::World;
  if (name == "agent_relative") return TrajFrame::AgentRelative;
  throw ParseError("traj/v1: unknown frame '" + name + "'");
}

void Trajectory::validate() const {
  if (points.size() < 2) throw ValidationError("trajectory: need at least 2 points");
  if (!(dt > 0.0)) throw ValidationError("trajectory: dt must be positive");
  for (size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].x()) || !std::isfinite(points[i].y())) {
      throw ValidationError("trajectory: non-finite point at index " + std::to_string(i));
    }
  }
}

Trajectory advance(const Trajectory& t, Stage to) {
  // Model and Map are siblings; both feed Base.
  const bool ok = static_cast<int>(to) > static_cast<int>(t.stage) &&
                  !(t.stage == Stage::Model && to == Stage::Map);
  if (!ok) {
    throw ValidationError("trajectory: cannot move from " + stage_name(t.stage) + " to " +
                          stage_name(to));
  }
  Trajectory out = t;
  out.stage = to;
  return out;
}

Trajectory to_frame(const Trajectory& t, const Frame2D& agent, TrajFrame target) {
  Trajectory out = t;
  if (t.frame == target) return out;
  out.frame = target;
  for (auto& p : out.points) {
    p = target == TrajFrame::World ? agent.to_world(p) : agent.to_local(p);
  }
  return out;
}

nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : t.points) pts.push_back({round3(p.x()), round3(p.y())});
  return {{"version", "traj/v1"},
          {"stage", stage_name(t.stage)},
          {"frame", frame_name(t.frame)},
          {"dt", t.dt},
          {"points", pts}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != "traj/v1") {
      throw ParseError("traj/v1: unsupported version");
    }
    Trajectory t;
    t.stage = stage_from_name(j.at("stage").get<std::string>());
    t.frame = frame_from_name(j.at("frame").get<std::string>());
    t.dt = j.at("dt").get<double>();
    for (const auto& p : j.at("points")) {
      t.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("traj/v1: ") + e.what());
  }
}

}  // namespace advedit::trajgen
