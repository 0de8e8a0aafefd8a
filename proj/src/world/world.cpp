#include "advedit/world/world.hpp"

#include <algorithm>
#include <cmath>

namespace advedit::world {

const VehicleState& WorldState::vehicle(int id) const {
  if (id == kEgoId) return ego;
  const auto it = agents.find(id);
  if (it == agents.end()) throw ValidationError("world: unknown vehicle id " + std::to_string(id));
  return it->second;
}

std::vector<Collision> detect_collisions(const WorldState& world) {
  std::vector<std::pair<int, const VehicleState*>> all;
  all.emplace_back(kEgoId, &world.ego);
  for (const auto& [id, v] : world.agents) all.emplace_back(id, &v);
  std::vector<Collision> out;
  for (size_t i = 0; i < all.size(); ++i) {
    for (size_t j = i + 1; j < all.size(); ++j) {
      const VehicleState& a = *all[i].second;
      const VehicleState& b = *all[j].second;
      // Cheap reject: circumscribed circles.
      const double ra = 0.5 * std::hypot(a.length, a.width);
      const double rb = 0.5 * std::hypot(b.length, b.width);
      if ((a.position - b.position).norm() > ra + rb) continue;
      if (boxes_overlap(a, b)) {
        out.push_back({std::min(all[i].first, all[j].first),
                       std::max(all[i].first, all[j].first),
                       (a.velocity() - b.velocity()).norm()});
      }
    }
  }
  return out;
}

LaneMetrics lane_metrics(const VehicleState& v, const MapGraph& map) {
  LaneMetrics m;
  m.in_intersection = map.in_intersection(v.position);
  m.off_road = !map.on_drivable(v.position);
  const auto match = map.nearest_aligned(v.position, v.heading);
  if (!match) {
    m.off_road = true;
    return m;
  }
  m.lane_id = match->lane_id;
  m.lateral_offset = match->proj.lateral;
  m.heading_error = wrap_angle(v.heading - match->proj.heading);
  m.lane_width = map.lane(match->lane_id).width;
  return m;
}

std::optional<std::pair<int, double>> front_gap(const VehicleState& v, int self_id,
                                                const WorldState& world, double range,
                                                double half_band) {
  const Frame2D frame{v.position, v.heading};
  std::optional<std::pair<int, double>> best;
  auto consider = [&](int id, const VehicleState& o) {
    if (id == self_id) return;
    const Vec2 local = frame.to_local(o.position);
    if (local.x() <= 0.0 || local.x() > range || std::abs(local.y()) > half_band) return;
    const double gap = local.x() - 0.5 * (v.length + o.length);
    if (!best || gap < best->second) best = std::make_pair(id, gap);
  };
  consider(kEgoId, world.ego);
  for (const auto& [id, o] : world.agents) consider(id, o);
  return best;
}

std::pair<double, double> autopilot_control(const VehicleState& v, const Route& route,
                                            const WorldState& world, int self_id,
                                            double cruise_speed, const WorldConfig& cfg,
                                            size_t* hint) {
  const auto& ap = cfg.autopilot;
  const auto& lim = cfg.limits;
  double steer = 0.0;
  if (route.waypoints.size() >= 2) {
    const size_t i = nearest_waypoint(route, v.position,
                                      hint ? std::optional<size_t>(*hint) : std::nullopt);
    if (hint) *hint = i;
    const double lookahead = std::max(ap.lookahead_min, ap.lookahead_gain * v.speed);
    const double step = route.length / static_cast<double>(route.waypoints.size() - 1);
    const size_t ahead = std::min(route.waypoints.size() - 1,
                                  i + static_cast<size_t>(std::ceil(lookahead / step)));
    Vec2 target = route.waypoints[ahead];
    const double d_end = (target - v.position).norm();
    if (ahead == route.waypoints.size() - 1 && d_end < lookahead) {
      // Extend past the end of the route along its final tangent.
      const auto& w = route.waypoints;
      const Vec2 t = (w.back() - w[w.size() - 2]).normalized();
      target = w.back() + t * (lookahead - d_end);
    }
    const Vec2 local = Frame2D{v.position, v.heading}.to_local(target);
    const double d2 = std::max(local.squaredNorm(), 1e-6);
    const double delta = std::atan(2.0 * lim.wheelbase * local.y() / d2);
    steer = std::clamp(delta / lim.max_steer_rad, -1.0, 1.0);
  }

  double a_des = ap.speed_gain * (cruise_speed - v.speed);
  double accel = 0.0;
  const auto lead = front_gap(v, self_id, world, ap.detect_range, ap.lane_half_width);
  if (lead) {
    const double gap = lead->second;
    const double danger = ap.danger_gap_base + ap.danger_gap_gain * v.speed;
    const double follow = ap.follow_gap_base + ap.follow_gap_gain * v.speed;
    if (gap < danger) {
      return {steer, -1.0};
    }
    if (gap < follow) {
      const VehicleState& o = world.vehicle(lead->first);
      const double lead_speed = o.velocity().dot(heading_vec(v.heading));
      const double a_follow = ap.follow_speed_gain * (lead_speed - v.speed) +
                              ap.follow_gap_gain_k * (gap - follow);
      a_des = std::min(a_des, a_follow);
    }
  }
  accel = a_des >= 0.0 ? a_des / lim.max_accel : a_des / lim.max_brake;
  return {steer, std::clamp(accel, -1.0, 1.0)};
}

TrafficWorld::TrafficWorld(std::shared_ptr<const MapGraph> map, WorldConfig cfg,
                           uint64_t seed)
    : cfg_(cfg), rng_(seed) {
  state_.map = std::move(map);
  state_.dt = cfg_.dt();
  state_.seed = seed;
}

void TrafficWorld::localize(VehicleState& v) const {
  const auto m = state_.map->localize(v.position, v.heading);
  if (m) {
    v.lane_id = m->lane_id;
    v.arc_pos = m->proj.s;
  } else {
    v.lane_id = kOffRoad;
    v.arc_pos = 0.0;
  }
}

void TrafficWorld::set_ego(const VehicleState& ego) {
  state_.ego = ego;
  localize(state_.ego);
  state_.ego_past = {ego.position};
}

int TrafficWorld::add_agent(const VehicleState& s, Route route, double cruise_speed) {
  const int id = next_id_++;
  VehicleState v = s;
  localize(v);
  state_.agents[id] = v;
  state_.agent_past[id] = {v.position};
  AgentControl ctl;
  ctl.route = std::move(route);
  ctl.cruise = cruise_speed;
  control_[id] = std::move(ctl);
  return id;
}

void TrafficWorld::set_playback(int id, std::vector<VehicleState> poses) {
  auto& ctl = control_.at(id);
  ctl.playback = std::move(poses);
  ctl.playback_pos = 0;
}

bool TrafficWorld::playback_active(int id) const {
  const auto it = control_.find(id);
  return it != control_.end() && it->second.playback_pos < it->second.playback.size();
}

const Route* TrafficWorld::agent_route(int id) const {
  const auto it = control_.find(id);
  return it == control_.end() ? nullptr : &it->second.route;
}

double TrafficWorld::agent_cruise(int id) const { return control_.at(id).cruise; }

void TrafficWorld::push_history() {
  const size_t cap = static_cast<size_t>(std::max(1, cfg_.history_frames));
  auto push = [cap](std::vector<Vec2>& hist, const Vec2& p) {
    hist.push_back(p);
    if (hist.size() > cap) hist.erase(hist.begin(), hist.end() - static_cast<long>(cap));
  };
  push(state_.ego_past, state_.ego.position);
  for (const auto& [id, v] : state_.agents) push(state_.agent_past[id], v.position);
}

void TrafficWorld::step(double ego_steer, double ego_accel) {
  const double dt = state_.dt;
  // Controls are computed from the pre-step snapshot for every agent.
  std::map<int, std::pair<double, double>> controls;
  for (auto& [id, ctl] : control_) {
    if (ctl.playback_pos < ctl.playback.size()) continue;
    controls[id] = autopilot_control(state_.agents.at(id), ctl.route, state_, id,
                                     ctl.cruise, cfg_, &ctl.hint);
  }
  state_.ego = step_vehicle(state_.ego, ego_steer, ego_accel, dt, cfg_.limits);
  localize(state_.ego);

  std::vector<int> finished;
  for (auto& [id, ctl] : control_) {
    VehicleState& v = state_.agents.at(id);
    if (ctl.playback_pos < ctl.playback.size()) {
      v = ctl.playback[ctl.playback_pos++];
      localize(v);
      if (ctl.playback_pos == ctl.playback.size()) {
        // Hand control back to the autopilot on a fresh lane-following route.
        const auto m = state_.map->nearest_aligned(v.position, v.heading);
        if (m) {
          ctl.route = follow_lanes(
              *state_.map, m->lane_id, m->proj.s, 2000.0,
              [this](int n) { return rng_.uniform_int(n); });
        } else {
          ctl.route = Route{};
        }
        ctl.hint = 0;
      }
      continue;
    }
    const auto [steer, accel] = controls.at(id);
    if (ctl.route.waypoints.size() < 2) {
      v = step_vehicle(v, 0.0, -1.0, dt, cfg_.limits);
    } else {
      v = step_vehicle(v, steer, accel, dt, cfg_.limits);
      if (route_progress(ctl.route, v.position, ctl.hint) >= ctl.route.length - 1.0) {
        finished.push_back(id);
      }
    }
    localize(v);
  }
  for (int id : finished) {
    state_.agents.erase(id);
    state_.agent_past.erase(id);
    control_.erase(id);
    if (state_.risky_id == id) state_.risky_id.reset();
  }
  ++state_.time_step;
  push_history();
}

nlohmann::json TrafficWorld::trace_record(const std::vector<Collision>& collisions) const {
  nlohmann::json vehicles = nlohmann::json::array();
  auto add = [&](int id, const VehicleState& v) {
    vehicles.push_back({{"id", id},
                        {"x", round3(v.position.x())},
                        {"y", round3(v.position.y())},
                        {"heading", round3(v.heading)},
                        {"speed", round3(v.speed)}});
  };
  add(kEgoId, state_.ego);
  for (const auto& [id, v] : state_.agents) add(id, v);
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : collisions) {
    cols.push_back({{"a", c.id_a}, {"b", c.id_b}, {"relative_speed", round3(c.relative_speed)}});
  }
  return {{"version", "trace/v1"},
          {"step", state_.time_step},
          {"time", round3(state_.time_step * state_.dt)},
          {"vehicles", vehicles},
          {"collisions", cols}};
}

}  // namespace advedit::world
