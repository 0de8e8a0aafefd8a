#include "advedit/reward/reward.hpp"

#include <algorithm>
#include <cmath>

namespace advedit::reward {

void RewardWeights::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("reward weights: " + what);
  };
  require(alpha >= 0.0 && beta >= 0.0 && gamma_safe >= 0.0, "alpha, beta, gamma_safe must be >= 0");
  require(0.0 < v_min && v_min < v_target && v_target < v_max, "need 0 < v_min < v_target < v_max");
  require(max_angle > 0.0, "max_angle must be > 0");
  require(d_danger < d_min_follow, "d_danger must be below d_min_follow");
  require(t_headway >= 0.0, "t_headway must be >= 0");
  require(safety_threshold > 0.0, "safety_threshold must be > 0");
  require(safety_epsilon > 0.0, "safety_epsilon must be > 0");
  require(sigma_ref > 0.0, "sigma_ref must be > 0");
  require(stability_window >= 1, "stability_window must be >= 1");
  require(sensing_range > 0.0, "sensing_range must be > 0");
  require(collision_penalty >= 0.0 && offroad_penalty >= 0.0, "penalties must be >= 0");
}

#define ADVEDIT_REWARD_FIELDS(X)                                                         \
  X(alpha) X(beta) X(gamma_safe) X(v_min) X(v_target) X(v_max) X(max_angle) X(d_danger)  \
  X(t_headway) X(d_min_follow) X(safety_threshold) X(safety_epsilon) X(sigma_ref)        \
  X(stability_window) X(sensing_range) X(collision_penalty) X(offroad_penalty)

nlohmann::json to_json(const RewardWeights& w) {
  nlohmann::json j;
#define X(f) j[#f] = w.f;
  ADVEDIT_REWARD_FIELDS(X)
#undef X
  return j;
}

RewardWeights weights_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("reward weights: expected an object");
  RewardWeights w;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(f)                                                                        \
  if (key == #f) {                                                                  \
    if (!value.is_number()) throw ConfigError("reward weights: " + key + " must be a number"); \
    value.get_to(w.f);                                                              \
    known = true;                                                                   \
  }
    ADVEDIT_REWARD_FIELDS(X)
#undef X
    if (!known) throw ConfigError("reward weights: unknown key '" + key + "'");
  }
  w.validate();
  return w;
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::Collision: return "collision";
    case Termination::OffRoad: return "off_road";
    case Termination::RouteComplete: return "route_complete";
  }
  return "none";
}

nlohmann::json to_json(const RewardBreakdown& b) {
  nlohmann::json j = {{"r_speed", b.r_speed},   {"r_center", b.r_center},
                      {"r_angle", b.r_angle},   {"r_stable", b.r_stable},
                      {"style", b.style},       {"safety_penalty", b.safety_penalty},
                      {"total", b.total},       {"termination", termination_name(b.termination)}};
  j["follow"] = b.has_follow ? nlohmann::json(b.follow) : nlohmann::json(nullptr);
  return j;
}

double r_speed(double v, const RewardWeights& w) {
  if (!(v > 0.0)) return 0.0;
  if (v < w.v_min) return v / w.v_min;
  if (v <= w.v_target) return 1.0;
  if (v < w.v_max) return (w.v_max - v) / (w.v_max - w.v_target);
  return 0.0;
}

double r_center(double lateral_offset, double half_width) {
  if (!(half_width > 0.0)) return 0.0;
  return std::max(0.0, 1.0 - std::abs(lateral_offset) / half_width);
}

double r_angle(double heading_error, double max_angle) {
  return std::max(0.0, 1.0 - std::abs(wrap_angle(heading_error)) / max_angle);
}

double r_stable(const std::deque<double>& history, double sigma_ref) {
  if (history.empty()) return 1.0;
  double mean = 0.0;
  for (double x : history) mean += x;
  mean /= static_cast<double>(history.size());
  double var = 0.0;
  for (double x : history) var += (x - mean) * (x - mean);
  var /= static_cast<double>(history.size());
  return std::exp(-var / (sigma_ref * sigma_ref));
}

double style_reward(double speed, double center, double angle, double stable) {
  return speed * center * angle * stable;
}

double optimal_follow_distance(double v, const RewardWeights& w) {
  return w.d_min_follow + w.t_headway * std::max(v, 0.0);
}

double follow_reward(double d, double v, const RewardWeights& w) {
  const double d_opt = optimal_follow_distance(v, w);
  if (d <= d_opt) return std::clamp((d - w.d_danger) / (d_opt - w.d_danger), 0.0, 1.0);
  return d_opt / d;
}

double safety_penalty(double min_dist, const RewardWeights& w) {
  if (min_dist >= w.safety_threshold) return 0.0;
  return w.safety_threshold / std::max(min_dist, w.safety_epsilon) - 1.0;
}

RewardBreakdown total_reward(const world::WorldState& world,
                             const std::deque<double>& lateral_history,
                             const RewardWeights& w, bool route_complete) {
  RewardBreakdown b;
  const auto& ego = world.ego;
  world::LaneMetrics lm;
  if (world.map) {
    lm = world::lane_metrics(ego, *world.map);
  } else {
    lm.off_road = true;
  }
  const double half_width = 0.5 * lm.lane_width;

  std::deque<double> hist = lateral_history;
  hist.push_back(lm.lateral_offset);
  while (hist.size() > static_cast<size_t>(w.stability_window)) hist.pop_front();

  b.r_speed = r_speed(ego.speed, w);
  b.r_center = r_center(lm.lateral_offset, half_width);
  b.r_angle = r_angle(lm.heading_error, w.max_angle);
  b.r_stable = r_stable(hist, w.sigma_ref);
  b.style = style_reward(b.r_speed, b.r_center, b.r_angle, b.r_stable);

  if (const auto front = world::front_gap(ego, world::kEgoId, world, w.sensing_range, half_width)) {
    b.has_follow = true;
    b.front_distance = front->second;
    b.follow = follow_reward(front->second, ego.speed, w);
  }

  for (const auto& [id, other] : world.agents) {
    const double d = world::box_distance(ego, other);
    if (b.min_distance < 0.0 || d < b.min_distance) b.min_distance = d;
  }
  if (b.min_distance >= 0.0) b.safety_penalty = safety_penalty(b.min_distance, w);

  b.total = w.alpha * b.style + (b.has_follow ? w.beta * b.follow : 0.0) -
            w.gamma_safe * b.safety_penalty;

  bool collided = false;
  for (const auto& [id, other] : world.agents) {
    if (world::boxes_overlap(ego, other)) {
      collided = true;
      break;
    }
  }
  // When no lane is found the offset is meaningless and the ego is off-road.
  const bool no_lane = lm.lane_id == world::kOffRoad;
  if (collided) {
    b.termination = Termination::Collision;
    b.total -= w.collision_penalty;
  } else if (no_lane || std::abs(lm.lateral_offset) > 2.0 * half_width) {
    b.termination = Termination::OffRoad;
    b.total -= w.offroad_penalty;
  } else if (route_complete) {
    b.termination = Termination::RouteComplete;
  }
  return b;
}

}  // namespace advedit::reward
