#pragma once

#include <deque>
#include <string>

#include <json.hpp>

#include "advedit/world/world.hpp"

namespace advedit::reward {

struct RewardWeights {
  double alpha = 1.0;
  double beta = 0.5;
  double gamma_safe = 0.5;
  double v_min = 2.0;     // m/s
  double v_target = 6.0;  // m/s
  double v_max = 9.0;     // m/s
  double max_angle = kPi / 4.0;
  double d_danger = 4.0;        // m
  double t_headway = 1.2;       // s
  double d_min_follow = 6.0;    // m
  double safety_threshold = 4.0;  // m
  double safety_epsilon = 0.1;    // m
  double sigma_ref = 0.3;         // m
  int stability_window = 15;      // steps
  double sensing_range = 50.0;    // m
  double collision_penalty = 10.0;
  double offroad_penalty = 10.0;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

nlohmann::json to_json(const RewardWeights& w);
/// Unknown keys are rejected; missing keys keep their defaults.
RewardWeights weights_from_json(const nlohmann::json& j);

enum class Termination { None, Collision, OffRoad, RouteComplete };
std::string termination_name(Termination t);

struct RewardBreakdown {
  double r_speed = 0.0;
  double r_center = 0.0;
  double r_angle = 0.0;
  double r_stable = 0.0;
  double style = 0.0;
  double follow = 0.0;
  bool has_follow = false;
  double safety_penalty = 0.0;
  double total = 0.0;
  double front_distance = -1.0;  // m, -1 when no leader in range
  double min_distance = -1.0;    // m, -1 without neighbours
  Termination termination = Termination::None;

  bool terminal() const { return termination != Termination::None; }
};

nlohmann::json to_json(const RewardBreakdown& b);

double r_speed(double v, const RewardWeights& w);
double r_center(double lateral_offset, double half_width);
double r_angle(double heading_error, double max_angle);
/// exp(-var / sigma_ref^2) over the given offsets (population variance).
double r_stable(const std::deque<double>& history, double sigma_ref);
double style_reward(double speed, double center, double angle, double stable);
double optimal_follow_distance(double v, const RewardWeights& w);
double follow_reward(double d, double v, const RewardWeights& w);
double safety_penalty(double min_dist, const RewardWeights& w);

/// Reward for the ego in `world`. `lateral_history` holds earlier lateral
/// offsets (oldest first); the current offset is appended internally and the
/// last `stability_window` values are used. `route_complete` is supplied by
/// the caller since routes live outside the world snapshot.
RewardBreakdown total_reward(const world::WorldState& world,
                             const std::deque<double>& lateral_history,
                             const RewardWeights& w, bool route_complete = false);

}  // namespace advedit::reward
