#include "advedit/scene/scene.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace advedit::scene {

using world::kEgoId;
using world::VehicleState;
using world::WorldState;

bool DrivingMode::valid() const {
  if (direction == Direction::Opposite) {
    return lane_relation == LaneRelation::NotApplicable &&
           longitudinal == Longitudinal::NotApplicable &&
           horizontal == Horizontal::NotApplicable;
  }
  switch (lane_relation) {
    case LaneRelation::SameLane:
      return longitudinal != Longitudinal::NotApplicable &&
             horizontal == Horizontal::NotApplicable;
    case LaneRelation::DifferentLane:
      return longitudinal == Longitudinal::NotApplicable &&
             horizontal != Horizontal::NotApplicable;
    case LaneRelation::NotApplicable:
      return false;
  }
  return false;
}

namespace {
constexpr std::array<const char*, 6> kTags = {"sudden-brake", "overtake",          "cut-in-left",
                                              "cut-in-right", "lane-encroachment", "u-turn"};
}

std::string maneuver_tag(HazardousManeuver m) { return kTags[static_cast<size_t>(m)]; }

HazardousManeuver maneuver_from_tag(const std::string& tag) {
  for (size_t i = 0; i < kTags.size(); ++i) {
    if (tag == kTags[i]) return static_cast<HazardousManeuver>(i);
  }
  throw ParseError("unknown maneuver tag '" + tag + "'");
}

std::string position_tag(const DrivingMode& mode) {
  if (mode.direction == Direction::Opposite) return "opposite";
  if (mode.lane_relation == LaneRelation::SameLane) {
    return mode.longitudinal == Longitudinal::Front ? "same_ahead" : "same_behind";
  }
  return mode.horizontal == Horizontal::Left ? "adjacent_left" : "adjacent_right";
}

std::optional<int> select_risky_agent(const WorldState& world, double zone_radius) {
  if (!(zone_radius > 0.0)) throw ValidationError("select_risky_agent: radius must be > 0");
  std::optional<int> best;
  double best_d = std::numeric_limits<double>::infinity();
  // std::map iterates ids in ascending order, so strict '<' keeps the lowest id.
  for (const auto& [id, v] : world.agents) {
    const double d = (v.position - world.ego.position).norm();
    if (d <= zone_radius && d < best_d) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

DrivingMode classify_driving_mode(const VehicleState& ego, const VehicleState& agent,
                                  const world::MapGraph& map) {
  const auto agent_lane = map.localize(agent.position, agent.heading);
  if (!agent_lane) throw ClassificationError("classify_driving_mode: agent is off-road");
  const auto ego_lane = map.localize(ego.position, ego.heading);
  if (!ego_lane) throw ClassificationError("classify_driving_mode: ego is off-road");

  DrivingMode mode;
  if (std::abs(wrap_angle(agent.heading - ego.heading)) >= 0.5 * kPi) {
    mode.direction = Direction::Opposite;
    return mode;
  }
  mode.direction = Direction::Same;
  const Vec2 local = Frame2D{ego.position, ego.heading}.to_local(agent.position);
  if (agent_lane->lane_id == ego_lane->lane_id) {
    mode.lane_relation = LaneRelation::SameLane;
    mode.longitudinal = local.x() >= 0.0 ? Longitudinal::Front : Longitudinal::Rear;
  } else {
    mode.lane_relation = LaneRelation::DifferentLane;
    mode.horizontal = local.y() < 0.0 ? Horizontal::Left : Horizontal::Right;
  }
  return mode;
}

HazardousManeuver assign_maneuver(const DrivingMode& mode, bool is_intersection, Rng& rng) {
  if (!mode.valid()) throw ValidationError("assign_maneuver: inconsistent driving mode");
  if (mode.direction == Direction::Opposite) {
    if (is_intersection) return HazardousManeuver::UTurn;
    return rng.uniform() < 0.5 ? HazardousManeuver::LaneEncroachment : HazardousManeuver::UTurn;
  }
  if (mode.lane_relation == LaneRelation::SameLane) {
    return mode.longitudinal == Longitudinal::Front ? HazardousManeuver::SuddenBrake
                                                    : HazardousManeuver::Overtake;
  }
  return mode.horizontal == Horizontal::Left ? HazardousManeuver::CutInLeft
                                             : HazardousManeuver::CutInRight;
}

// ------------------------------------------------------------------ raster

Rgb palette(BevClass c) {
  switch (c) {
    case BevClass::Background: return {0, 0, 0};
    case BevClass::Drivable: return {128, 128, 128};
    case BevClass::Marking: return {255, 0, 255};
    case BevClass::Neutral: return {0, 0, 255};
    case BevClass::Risky: return {255, 255, 0};
    case BevClass::Ego: return {255, 255, 255};
  }
  return {0, 0, 0};
}

std::optional<std::pair<int, int>> BevRaster::pixel_of(const Vec2& p) const {
  const int col = static_cast<int>(std::floor(0.5 * width + p.y() / scale));
  const int row = static_cast<int>(std::floor(0.5 * height - p.x() / scale));
  if (row < 0 || row >= height || col < 0 || col >= width) return std::nullopt;
  return std::make_pair(row, col);
}

namespace {

bool inside(const std::array<Vec2, 4>& box, const Vec2& p) {
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = box[static_cast<size_t>(i)], b = box[static_cast<size_t>((i + 1) % 4)];
    const Vec2 e = b - a, d = p - a;
    if (e.x() * d.y() - e.y() * d.x() < 0.0) return false;
  }
  return true;
}

}  // namespace

BevRaster render_bev(const WorldState& world, double scale, int width, int height) {
  if (!(scale > 0.0)) throw ValidationError("render_bev: scale must be > 0");
  if (width <= 0 || height <= 0) throw ValidationError("render_bev: size must be positive");
  BevRaster r;
  r.width = width;
  r.height = height;
  r.scale = scale;
  r.cells.assign(static_cast<size_t>(width) * static_cast<size_t>(height), BevClass::Background);
  const Frame2D ego_frame{world.ego.position, world.ego.heading};

  struct Shape {
    std::array<Vec2, 4> box;
    BevClass cls;
  };
  // Later entries paint over earlier ones.
  std::vector<Shape> shapes;
  for (const auto& [id, v] : world.agents) {
    if (world.risky_id && *world.risky_id == id) continue;
    shapes.push_back({world::footprint(v), BevClass::Neutral});
  }
  if (world.risky_id && world.agents.count(*world.risky_id)) {
    shapes.push_back({world::footprint(world.agents.at(*world.risky_id)), BevClass::Risky});
  }
  shapes.push_back({world::footprint(world.ego), BevClass::Ego});
  // The CCW test in `inside` assumes a consistent winding; normalise it.
  for (auto& s : shapes) {
    const Vec2 e0 = s.box[1] - s.box[0], e1 = s.box[2] - s.box[1];
    if (e0.x() * e1.y() - e0.y() * e1.x() < 0.0) std::reverse(s.box.begin(), s.box.end());
  }

  const world::MapGraph* map = world.map.get();
  const double half_band = 0.5 * scale;
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const Vec2 local{(0.5 * height - (row + 0.5)) * scale, ((col + 0.5) - 0.5 * width) * scale};
      const Vec2 p = ego_frame.to_world(local);
      BevClass cls = BevClass::Background;
      if (map) {
        if (map->on_drivable(p)) cls = BevClass::Drivable;
        if (!map->in_intersection(p)) {
          for (const auto& lane : map->lanes) {
            const auto pr = lane.project(p);
            if (pr.within_extent && std::abs(std::abs(pr.lateral) - 0.5 * lane.width) <= half_band) {
              cls = BevClass::Marking;
              break;
            }
          }
        }
      }
      for (const auto& s : shapes) {
        if (inside(s.box, p)) cls = s.cls;
      }
      r.cells[static_cast<size_t>(row) * static_cast<size_t>(width) + static_cast<size_t>(col)] = cls;
    }
  }
  return r;
}

// ----------------------------------------------------------------- message

namespace {

VehicleSummary summarize(int id, const VehicleState& v, const std::vector<Vec2>* past,
                         const Frame2D& frame) {
  VehicleSummary s;
  s.id = id;
  s.position = frame.to_local(v.position);
  s.heading = wrap_angle(v.heading - frame.heading);
  s.speed = v.speed;
  s.yaw_rate = v.yaw_rate;
  if (past) {
    for (const auto& p : *past) s.past.push_back(frame.to_local(p));
  }
  return s;
}

nlohmann::json pt(const Vec2& p) { return {round3(p.x()), round3(p.y())}; }

nlohmann::json pts(const std::vector<Vec2>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : v) a.push_back(pt(p));
  return a;
}

nlohmann::json vehicle_json(const VehicleSummary& s) {
  return {{"id", s.id},
          {"position", pt(s.position)},
          {"heading", round3(s.heading)},
          {"speed", round3(s.speed)},
          {"yaw_rate", round3(s.yaw_rate)},
          {"past", pts(s.past)}};
}

Vec2 read_pt(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::vector<Vec2> read_pts(const nlohmann::json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back(read_pt(p));
  return out;
}

VehicleSummary read_vehicle(const nlohmann::json& j) {
  VehicleSummary s;
  s.id = j.at("id").get<int>();
  s.position = read_pt(j.at("position"));
  s.heading = j.at("heading").get<double>();
  s.speed = j.at("speed").get<double>();
  s.yaw_rate = j.value("yaw_rate", 0.0);
  s.past = read_pts(j.at("past"));
  return s;
}

}  // namespace

SceneMessage encode_scene(const WorldState& world, int risky_id, HazardousManeuver maneuver,
                          const DrivingMode& mode, const trajgen::Trajectory& base, int n,
                          double fps, bool with_bev, double bev_scale) {
  const auto it = world.agents.find(risky_id);
  if (it == world.agents.end()) {
    throw ValidationError("encode_scene: unknown risky agent " + std::to_string(risky_id));
  }
  if (static_cast<int>(base.size()) != n) {
    throw ValidationError("encode_scene: base trajectory has " + std::to_string(base.size()) +
                          " points, expected " + std::to_string(n));
  }
  const VehicleState& agent = it->second;
  SceneMessage msg;
  msg.agent_frame = Frame2D{agent.position, agent.heading};
  msg.fps = fps;
  msg.bev_scale = bev_scale;
  msg.horizon = n;
  msg.risk_category = maneuver_tag(maneuver);
  msg.position_tag = position_tag(mode);

  auto past_of = [&](int id) -> const std::vector<Vec2>* {
    const auto p = world.agent_past.find(id);
    return p == world.agent_past.end() ? nullptr : &p->second;
  };
  msg.ego = summarize(kEgoId, world.ego, &world.ego_past, msg.agent_frame);
  msg.risky = summarize(risky_id, agent, past_of(risky_id), msg.agent_frame);
  for (const auto& [id, v] : world.agents) {
    if (id == risky_id) continue;
    msg.neutrals.push_back(summarize(id, v, nullptr, msg.agent_frame));
  }
  if (world.map) {
    msg.is_intersection_hint =
        world.map->in_intersection(agent.position) || world.map->in_intersection(world.ego.position);
    if (const auto m = world.map->nearest_aligned(agent.position, agent.heading)) {
      msg.lane_width = world.map->lane(m->lane_id).width;
    }
  }
  const auto rel = trajgen::to_frame(base, msg.agent_frame, trajgen::TrajFrame::AgentRelative);
  msg.base_trajectory = rel.points;
  if (with_bev) {
    WorldState marked = world;
    marked.risky_id = risky_id;
    msg.bev = render_bev(marked, bev_scale, msg.bev_width, msg.bev_height);
  }
  return msg;
}

nlohmann::json scene_to_json(const SceneMessage& msg) {
  nlohmann::json neutrals = nlohmann::json::array();
  for (const auto& v : msg.neutrals) neutrals.push_back(vehicle_json(v));
  return {{"version", "scene/v1"},
          {"bev", {{"scale", msg.bev_scale}, {"width", msg.bev_width}, {"height", msg.bev_height}}},
          {"fps", msg.fps},
          {"agent_pose",
           {{"x", round3(msg.agent_frame.origin.x())},
            {"y", round3(msg.agent_frame.origin.y())},
            {"heading", round3(msg.agent_frame.heading)}}},
          {"ego", vehicle_json(msg.ego)},
          {"risky", vehicle_json(msg.risky)},
          {"neutrals", neutrals},
          {"risk_category", msg.risk_category},
          {"position_tag", msg.position_tag},
          {"is_intersection_hint", msg.is_intersection_hint},
          {"lane_width", round3(msg.lane_width)},
          {"horizon", msg.horizon},
          {"base_trajectory", pts(msg.base_trajectory)}};
}

SceneMessage scene_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != "scene/v1") {
      throw ParseError("scene/v1: unsupported version");
    }
    SceneMessage msg;
    msg.bev_scale = j.at("bev").at("scale").get<double>();
    msg.bev_width = j.at("bev").at("width").get<int>();
    msg.bev_height = j.at("bev").at("height").get<int>();
    msg.fps = j.at("fps").get<double>();
    const auto& pose = j.at("agent_pose");
    msg.agent_frame = Frame2D{{pose.at("x").get<double>(), pose.at("y").get<double>()},
                              pose.at("heading").get<double>()};
    msg.ego = read_vehicle(j.at("ego"));
    msg.risky = read_vehicle(j.at("risky"));
    for (const auto& v : j.at("neutrals")) msg.neutrals.push_back(read_vehicle(v));
    msg.risk_category = j.at("risk_category").get<std::string>();
    msg.position_tag = j.at("position_tag").get<std::string>();
    msg.is_intersection_hint = j.at("is_intersection_hint").get<bool>();
    msg.lane_width = j.at("lane_width").get<double>();
    msg.horizon = j.at("horizon").get<int>();
    msg.base_trajectory = read_pts(j.at("base_trajectory"));
    if (static_cast<int>(msg.base_trajectory.size()) != msg.horizon) {
      throw ParseError("scene/v1: base_trajectory length does not match horizon");
    }
    return msg;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene/v1: ") + e.what());
  }
}

}  // namespace advedit::scene
