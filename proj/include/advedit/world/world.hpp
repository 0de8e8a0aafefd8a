#pragma once

#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advedit/world/map.hpp"
#include "advedit/world/route.hpp"
#include "advedit/world/vehicle.hpp"

namespace advedit::world {

constexpr int kEgoId = 0;

/// Pure-pursuit plus gap-keeping traffic controller parameters.
struct AutopilotParams {
  double lookahead_min = 4.0;     // m
  double lookahead_gain = 0.8;    // s, lookahead = max(min, gain * speed)
  double detect_range = 50.0;     // m
  double lane_half_width = 1.8;   // m, lateral band used to find a leader
  double danger_gap_base = 3.0;   // m, full brake below base + gain * v
  double danger_gap_gain = 0.5;   // s
  double follow_gap_base = 6.0;   // m
  double follow_gap_gain = 1.5;   // s
  double speed_gain = 0.5;        // 1/s, cruise tracking
  double follow_speed_gain = 0.8; // 1/s
  double follow_gap_gain_k = 0.3; // 1/s^2
};

struct WorldConfig {
  double fps = 15.0;
  VehicleLimits limits;
  AutopilotParams autopilot;
  int history_frames = 15;

  double dt() const { return 1.0 / fps; }
};

struct WorldState {
  long time_step = 0;
  double dt = 1.0 / 15.0;
  VehicleState ego;
  std::map<int, VehicleState> agents;
  std::optional<int> risky_id;
  std::shared_ptr<const MapGraph> map;
  uint64_t seed = 0;
  // Recent positions, oldest first, at most WorldConfig::history_frames.
  std::vector<Vec2> ego_past;
  std::map<int, std::vector<Vec2>> agent_past;

  /// Ego for kEgoId, otherwise the agent with that id.
  const VehicleState& vehicle(int id) const;
};

struct Collision {
  int id_a = 0;
  int id_b = 0;
  double relative_speed = 0.0;  // m/s
};

struct LaneMetrics {
  double lateral_offset = 0.0;  // left of centreline is negative
  double heading_error = 0.0;   // wrapped to (-pi, pi]
  bool in_intersection = false;
  bool off_road = false;
  int lane_id = kOffRoad;
  double lane_width = 3.5;
};

/// All overlapping vehicle pairs (ego included, id_a < id_b).
std::vector<Collision> detect_collisions(const WorldState& world);

LaneMetrics lane_metrics(const VehicleState& v, const MapGraph& map);

/// (steer, accel) for vehicle `self_id` tracking `route`. `hint` is the last
/// known nearest route index and is advanced in place.
std::pair<double, double> autopilot_control(const VehicleState& v, const Route& route,
                                            const WorldState& world, int self_id,
                                            double cruise_speed,
                                            const WorldConfig& cfg, size_t* hint = nullptr);

/// Front-gap (bumper to bumper) to the nearest vehicle inside the lane band
/// ahead of `v`, if any within `range`.
std::optional<std::pair<int, double>> front_gap(const VehicleState& v, int self_id,
                                                const WorldState& world, double range,
                                                double half_band);

/// Deterministic traffic world. Agents run the autopilot unless a pose
/// playback is installed, in which case they replay it open-loop.
class TrafficWorld {
 public:
  TrafficWorld(std::shared_ptr<const MapGraph> map, WorldConfig cfg, uint64_t seed);

  void set_ego(const VehicleState& ego);
  int add_agent(const VehicleState& s, Route route, double cruise_speed);
  /// Pose i is applied at the i-th subsequent step.
  void set_playback(int id, std::vector<VehicleState> poses);
  bool playback_active(int id) const;
  void set_risky(std::optional<int> id) { state_.risky_id = id; }

  void step(double ego_steer, double ego_accel);

  const WorldState& state() const { return state_; }
  const WorldConfig& config() const { return cfg_; }
  const MapGraph& map() const { return *state_.map; }
  const Route* agent_route(int id) const;
  double agent_cruise(int id) const;
  Rng& rng() { return rng_; }

  /// One `trace/v1` record for the current step.
  nlohmann::json trace_record(const std::vector<Collision>& collisions) const;

 private:
  struct AgentControl {
    Route route;
    size_t hint = 0;
    double cruise = 8.0;
    std::vector<VehicleState> playback;
    size_t playback_pos = 0;
  };

  void localize(VehicleState& v) const;
  void push_history();

  WorldConfig cfg_;
  WorldState state_;
  std::map<int, AgentControl> control_;
  int next_id_ = 1;
  Rng rng_;
};

}  // namespace advedit::world
