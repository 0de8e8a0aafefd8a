#include "advedit/trainer/env.hpp"

#include <algorithm>
#include <cmath>

#include "advedit/binio.hpp"
#include "advedit/json_fields.hpp"

namespace advedit::trainer {

std::string kind_name(ScenarioKind k) { return k == ScenarioKind::Normal ? "normal" : "challenging"; }

ScenarioKind kind_from_name(const std::string& s) {
  if (s == "normal") return ScenarioKind::Normal;
  if (s == "challenging") return ScenarioKind::Challenging;
  throw ConfigError("unknown scenario kind '" + s + "' (expected normal or challenging)");
}

void EnvConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("env: " + what);
  };
  require(world.fps > 0.0, "fps must be > 0");
  require(num_vehicles >= 0, "num_vehicles must be >= 0");
  require(step_cap >= 1, "step_cap must be >= 1");
  require(route_min_length > 0.0 && route_min_length <= route_max_length,
          "need 0 < route_min_length <= route_max_length");
  require(route_spacing > 0.0, "route_spacing must be > 0");
  require(goal_tolerance > 0.0, "goal_tolerance must be > 0");
  require(0.0 < cruise_min && cruise_min <= cruise_max, "need 0 < cruise_min <= cruise_max");
  require(ego_start_speed >= 0.0, "ego_start_speed must be >= 0");
  require(spawn_gap > 0.0 && ego_clearance > 0.0, "spawn distances must be > 0");
  require(action_smoothing >= 0.0 && action_smoothing < 1.0, "action_smoothing must be in [0, 1)");
  require(pipeline.horizon >= 2, "pipeline horizon must be >= 2");
  require(pipeline.zone_radius > 0.0, "zone_radius must be > 0");
  require(pipeline.sigmoid_m > 0.0, "sigmoid_m must be > 0");
  require(pipeline.smoothing >= 0.0, "smoothing must be >= 0");
  require(pipeline.spline_degree >= 1, "spline_degree must be >= 1");
  require(observation.waypoints >= 1 && observation.neighbours >= 0, "bad observation sizes");
  require(pipeline.lqr.r > 0.0 && (pipeline.lqr.q.array() >= 0.0).all(),
          "LQR weights need Q >= 0 and R > 0");
  reward.validate();
}

nlohmann::json to_json(const EpisodeResult& r) {
  nlohmann::json adv = nlohmann::json::array();
  for (const auto& e : r.adversary) {
    adv.push_back({{"step", e.step}, {"risky_id", e.risky_id}, {"maneuver", e.maneuver},
                   {"position_tag", e.position_tag}});
  }
  nlohmann::json speeds = nlohmann::json::array();
  for (double s : r.collision_speeds) speeds.push_back(round3(s));
  nlohmann::json j = {{"episode", r.index},
                      {"kind", kind_name(r.kind)},
                      {"steps", r.steps},
                      {"return", r.total_return},
                      {"route_completion", r.route_completion},
                      {"distance", r.distance},
                      {"collisions", r.collisions},
                      {"collision_speeds", speeds},
                      {"mean_speed", r.mean_speed},
                      {"termination", r.termination == reward::Termination::None
                                          ? std::string("step_cap")
                                          : reward::termination_name(r.termination)},
                      {"downgraded", r.downgraded},
                      {"adversary", adv}};
  if (r.downgraded) j["downgrade_reason"] = r.downgrade_reason;
  return j;
}

std::shared_ptr<const world::MapGraph> load_map(const nlohmann::json& source) {
  if (!source.is_object()) throw ConfigError("map: expected an object");
  if (source.contains("version")) {
    return std::make_shared<const world::MapGraph>(world::build_map(source));
  }
  if (source.contains("file")) {
    if (source.size() != 1) throw ConfigError("map: 'file' takes no other keys");
    return std::make_shared<const world::MapGraph>(
        world::build_map_from_text(read_file(source.at("file").get<std::string>())));
  }
  const std::string preset = source.value("preset", "");
  auto num = [&](const char* key, double def) {
    if (!source.contains(key)) return def;
    if (!source.at(key).is_number()) throw ConfigError(std::string("map: ") + key + " must be a number");
    return source.at(key).get<double>();
  };
  static const std::map<std::string, std::vector<std::string>> allowed = {
      {"straight", {"preset", "length", "lanes", "opposite_lanes", "width"}},
      {"four_way", {"preset", "arm_length", "width"}},
      {"t_junction", {"preset", "arm_length", "width"}}};
  const auto it = allowed.find(preset);
  if (it == allowed.end()) {
    throw ConfigError("map: unknown preset '" + preset + "' (straight, four_way, t_junction)");
  }
  for (const auto& [key, value] : source.items()) {
    if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
      throw ConfigError("map: unknown key '" + key + "' for preset " + preset);
    }
  }
  nlohmann::json spec;
  const double width = num("width", 3.5);
  if (preset == "straight") {
    spec = world::straight_road_spec(num("length", 400.0), static_cast<int>(num("lanes", 2)), width,
                                     static_cast<int>(num("opposite_lanes", 0)));
  } else if (preset == "four_way") {
    spec = world::four_way_spec(num("arm_length", 80.0), width);
  } else {
    spec = world::t_junction_spec(num("arm_length", 80.0), width);
  }
  return std::make_shared<const world::MapGraph>(world::build_map(spec));
}

namespace {

struct LanePoint {
  int lane = 0;
  double s = 0.0;
  Vec2 p;
  double heading = 0.0;
};

LanePoint random_lane_point(const world::MapGraph& map, Rng& rng, double margin = 5.0) {
  // Lanes are weighted by length so traffic spreads evenly over the map.
  double total = 0.0;
  for (const auto& l : map.lanes) total += std::max(0.0, l.length() - 2.0 * margin);
  double pick = rng.uniform() * total;
  for (const auto& l : map.lanes) {
    const double usable = std::max(0.0, l.length() - 2.0 * margin);
    if (pick <= usable || &l == &map.lanes.back()) {
      const double s = margin + std::min(pick, usable);
      return {l.id, s, l.point_at(s), l.heading_at(s)};
    }
    pick -= usable;
  }
  const auto& l = map.lanes.front();
  return {l.id, 0.0, l.point_at(0.0), l.heading_at(0.0)};
}

world::Route lane_following_route(const world::MapGraph& map, int lane, double s, double length,
                                  Rng& rng, double spacing) {
  return world::follow_lanes(map, lane, s, length, [&rng](int n) { return rng.uniform_int(n); },
                             spacing);
}

}  // namespace

EpisodeWorld spawn_episode(const std::shared_ptr<const world::MapGraph>& map,
                           const EnvConfig& cfg, uint64_t seed) {
  if (!map || map->lanes.empty()) throw ValidationError("spawn_episode: empty map");
  Rng rng(Rng::derive(seed, "spawn"));
  EpisodeWorld ep;
  ep.world = std::make_unique<world::TrafficWorld>(map, cfg.world, Rng::derive(seed, "traffic"));

  world::RoutePlanOptions opts;
  opts.spacing = cfg.route_spacing;
  LanePoint start;
  bool planned = false;
  for (int attempt = 0; attempt < 200 && !planned; ++attempt) {
    start = random_lane_point(*map, rng);
    const LanePoint goal = random_lane_point(*map, rng);
    try {
      auto route = world::plan_route(*map, start.p, goal.p, opts);
      if (route.length >= cfg.route_min_length && route.length <= cfg.route_max_length) {
        ep.ego_route = std::move(route);
        planned = true;
      }
    } catch (const world::NoRouteError&) {
    }
  }
  if (!planned) {
    // Small maps may not offer an A* pair in range; follow lanes instead.
    start = random_lane_point(*map, rng);
    ep.ego_route = lane_following_route(*map, start.lane, start.s, cfg.route_min_length, rng,
                                        cfg.route_spacing);
  }

  world::VehicleState ego;
  ego.position = ep.ego_route.waypoints.front();
  const Vec2 d = ep.ego_route.waypoints[std::min<size_t>(1, ep.ego_route.waypoints.size() - 1)] -
                 ep.ego_route.waypoints.front();
  ego.heading = d.norm() > 1e-9 ? std::atan2(d.y(), d.x()) : start.heading;
  ego.speed = cfg.ego_start_speed;
  ep.world->set_ego(ego);

  std::vector<Vec2> taken{ego.position};
  auto clear_of = [&](const Vec2& p) {
    for (const auto& q : taken) {
      if ((q - p).norm() < cfg.spawn_gap) return false;
    }
    return (p - ego.position).norm() >= cfg.ego_clearance;
  };
  auto add = [&](const LanePoint& lp) {
    world::VehicleState v;
    v.position = lp.p;
    v.heading = lp.heading;
    const double cruise = rng.uniform(cfg.cruise_min, cfg.cruise_max);
    v.speed = cruise * rng.uniform(0.5, 1.0);
    auto route = lane_following_route(*map, lp.lane, lp.s, 2000.0, rng, 1.0);
    ep.world->add_agent(v, std::move(route), cruise);
    taken.push_back(lp.p);
  };

  for (int i = 0; i < cfg.num_vehicles; ++i) {
    const bool in_zone = i == 0;
    for (int attempt = 0; attempt < 500; ++attempt) {
      const LanePoint lp = random_lane_point(*map, rng);
      if (!clear_of(lp.p)) continue;
      if (in_zone && (lp.p - ego.position).norm() > 0.8 * cfg.pipeline.zone_radius) continue;
      add(lp);
      break;
    }
  }
  return ep;
}

EpisodeResult run_episode(const std::shared_ptr<const world::MapGraph>& map,
                          const EnvConfig& cfg, const EpisodeSpec& spec, const PolicyFn& policy,
                          editor::Editor* ed, const TransitionFn& on_transition,
                          const StepObserver& observer) {
  EpisodeWorld ep = spawn_episode(map, cfg, spec.seed);
  world::TrafficWorld& tw = *ep.world;
  const world::Route& route = ep.ego_route;
  EpisodeResult res;
  res.index = spec.index;
  res.kind = spec.kind;
  if (spec.kind == ScenarioKind::Challenging && !ed) {
    res.downgraded = true;
    res.downgrade_reason = "no editor configured";
  }

  policy::ActionSmoother smoother(cfg.action_smoothing);
  std::deque<double> lateral;
  size_t hint = 0;
  Eigen::VectorXd obs = policy::build_observation(tw.state(), route, cfg.observation, hint);
  bool armed = true;
  std::optional<int> risky;
  int triggers = 0;
  double speed_sum = 0.0;

  for (int step = 0; step < spec.max_steps; ++step) {
    if (spec.kind == ScenarioKind::Challenging && !res.downgraded) {
      if (risky && !tw.playback_active(*risky)) {
        risky.reset();
        tw.set_risky(std::nullopt);
      }
      if (!risky) {
        const auto cand = scene::select_risky_agent(tw.state(), cfg.pipeline.zone_radius);
        if (!cand) {
          armed = true;
        } else if (armed) {
          Rng mrng(Rng::derive(spec.seed, "maneuver", static_cast<uint64_t>(triggers)));
          try {
            const auto r = run_adversary_for(tw.state(), *cand, cfg.world.limits, *ed,
                                             cfg.pipeline, mrng,
                                             Rng::derive(spec.seed, "editor", static_cast<uint64_t>(triggers)));
            if (r) {
              tw.set_playback(r->risky_id, r->rollout.states);
              tw.set_risky(r->risky_id);
              risky = r->risky_id;
              armed = false;
              ++triggers;
              res.adversary.push_back({step, r->risky_id, scene::maneuver_tag(r->maneuver),
                                       r->scene.position_tag, r->t_final.points});
            }
          } catch (const Error& e) {
            res.downgraded = true;
            res.downgrade_reason = e.what();
          }
        }
      }
    }

    const policy::Action raw = policy(obs);
    const policy::Action act = smoother.apply(raw);
    const Vec2 before = tw.state().ego.position;
    tw.step(act.steer, act.throttle_brake);
    const auto& ws = tw.state();

    res.distance += (ws.ego.position - before).norm();
    speed_sum += ws.ego.speed;
    hint = world::nearest_waypoint(route, ws.ego.position, hint);
    const double progress = world::route_progress(route, ws.ego.position, hint);
    res.route_completion = std::clamp(route.length > 0.0 ? progress / route.length : 1.0, 0.0, 1.0);
    const bool complete = route.length - progress <= cfg.goal_tolerance;

    const auto b = reward::total_reward(ws, lateral, cfg.reward, complete);
    if (observer) observer(tw, b);
    lateral.push_back(world::lane_metrics(ws.ego, *ws.map).lateral_offset);
    while (lateral.size() > static_cast<size_t>(cfg.reward.stability_window)) lateral.pop_front();

    const Eigen::VectorXd next = policy::build_observation(ws, route, cfg.observation, hint);
    res.rewards.push_back(b.total);
    res.total_return += b.total;
    res.steps = step + 1;
    if (on_transition) on_transition(obs, raw, b.total, next, b.terminal());
    obs = next;
    if (b.terminal()) {
      res.termination = b.termination;
      if (b.termination == reward::Termination::Collision) {
        res.collisions = 1;
        res.collision_speeds.push_back(ws.ego.speed * 3.6);
      }
      if (b.termination == reward::Termination::RouteComplete) res.route_completion = 1.0;
      break;
    }
  }
  res.mean_speed = res.steps > 0 ? speed_sum / res.steps : 0.0;
  return res;
}

}  // namespace advedit::trainer

namespace advedit::trainer {

nlohmann::json to_json(const EnvConfig& c) {
  const auto& l = c.world.limits;
  const auto& a = c.world.autopilot;
  const auto& q = c.pipeline.lqr;
  return {
      {"world",
       {{"fps", c.world.fps},
        {"history_frames", c.world.history_frames},
        {"limits",
         {{"wheelbase", l.wheelbase},
          {"max_steer_rad", l.max_steer_rad},
          {"max_accel", l.max_accel},
          {"max_brake", l.max_brake},
          {"max_speed", l.max_speed}}},
        {"autopilot",
         {{"lookahead_min", a.lookahead_min},
          {"lookahead_gain", a.lookahead_gain},
          {"detect_range", a.detect_range},
          {"lane_half_width", a.lane_half_width},
          {"danger_gap_base", a.danger_gap_base},
          {"danger_gap_gain", a.danger_gap_gain},
          {"follow_gap_base", a.follow_gap_base},
          {"follow_gap_gain", a.follow_gap_gain},
          {"speed_gain", a.speed_gain},
          {"follow_speed_gain", a.follow_speed_gain},
          {"follow_gap_gain_k", a.follow_gap_gain_k}}}}},
      {"num_vehicles", c.num_vehicles},
      {"step_cap", c.step_cap},
      {"route_min_length", c.route_min_length},
      {"route_max_length", c.route_max_length},
      {"route_spacing", c.route_spacing},
      {"goal_tolerance", c.goal_tolerance},
      {"cruise_min", c.cruise_min},
      {"cruise_max", c.cruise_max},
      {"ego_start_speed", c.ego_start_speed},
      {"spawn_gap", c.spawn_gap},
      {"ego_clearance", c.ego_clearance},
      {"action_smoothing", c.action_smoothing},
      {"reward", reward::to_json(c.reward)},
      {"observation",
       {{"waypoints", c.observation.waypoints},
        {"neighbours", c.observation.neighbours},
        {"range", c.observation.range},
        {"v_norm", c.observation.v_norm}}},
      {"pipeline",
       {{"horizon", c.pipeline.horizon},
        {"zone_radius", c.pipeline.zone_radius},
        {"smoothing", c.pipeline.smoothing},
        {"spline_degree", c.pipeline.spline_degree},
        {"sigmoid_m", c.pipeline.sigmoid_m},
        {"with_bev", c.pipeline.with_bev},
        {"bev_scale", c.pipeline.bev_scale},
        {"lqr",
         {{"q", {q.q[0], q.q[1], q.q[2], q.q[3]}},
          {"r", q.r},
          {"kp", q.kp},
          {"kd", q.kd},
          {"tolerance", q.tolerance},
          {"max_iterations", q.max_iterations},
          {"min_speed", q.min_speed},
          {"speed_bucket", q.speed_bucket}}}}}};
}

EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  StrictObject o(j, "env");
  if (const auto* w = o.take("world")) {
    StrictObject ow(*w, "env.world");
    ow.get("fps", c.world.fps);
    ow.get("history_frames", c.world.history_frames);
    if (const auto* l = ow.take("limits")) {
      StrictObject ol(*l, "env.world.limits");
      auto& x = c.world.limits;
      ol.get("wheelbase", x.wheelbase);
      ol.get("max_steer_rad", x.max_steer_rad);
      ol.get("max_accel", x.max_accel);
      ol.get("max_brake", x.max_brake);
      ol.get("max_speed", x.max_speed);
      ol.finish();
      if (!(x.wheelbase > 0 && x.max_steer_rad > 0 && x.max_steer_rad < kPi / 2 &&
            x.max_accel > 0 && x.max_brake > 0 && x.max_speed > 0)) {
        throw ConfigError("env.world.limits: all limits must be positive (steer < pi/2)");
      }
    }
    if (const auto* a = ow.take("autopilot")) {
      StrictObject oa(*a, "env.world.autopilot");
      auto& x = c.world.autopilot;
      oa.get("lookahead_min", x.lookahead_min);
      oa.get("lookahead_gain", x.lookahead_gain);
      oa.get("detect_range", x.detect_range);
      oa.get("lane_half_width", x.lane_half_width);
      oa.get("danger_gap_base", x.danger_gap_base);
      oa.get("danger_gap_gain", x.danger_gap_gain);
      oa.get("follow_gap_base", x.follow_gap_base);
      oa.get("follow_gap_gain", x.follow_gap_gain);
      oa.get("speed_gain", x.speed_gain);
      oa.get("follow_speed_gain", x.follow_speed_gain);
      oa.get("follow_gap_gain_k", x.follow_gap_gain_k);
      oa.finish();
    }
    ow.finish();
  }
  o.get("num_vehicles", c.num_vehicles);
  o.get("step_cap", c.step_cap);
  o.get("route_min_length", c.route_min_length);
  o.get("route_max_length", c.route_max_length);
  o.get("route_spacing", c.route_spacing);
  o.get("goal_tolerance", c.goal_tolerance);
  o.get("cruise_min", c.cruise_min);
  o.get("cruise_max", c.cruise_max);
  o.get("ego_start_speed", c.ego_start_speed);
  o.get("spawn_gap", c.spawn_gap);
  o.get("ego_clearance", c.ego_clearance);
  o.get("action_smoothing", c.action_smoothing);
  if (const auto* r = o.take("reward")) c.reward = reward::weights_from_json(*r);
  if (const auto* ob = o.take("observation")) {
    StrictObject oo(*ob, "env.observation");
    oo.get("waypoints", c.observation.waypoints);
    oo.get("neighbours", c.observation.neighbours);
    oo.get("range", c.observation.range);
    oo.get("v_norm", c.observation.v_norm);
    oo.finish();
  }
  if (const auto* p = o.take("pipeline")) {
    StrictObject op(*p, "env.pipeline");
    auto& x = c.pipeline;
    op.get("horizon", x.horizon);
    op.get("zone_radius", x.zone_radius);
    op.get("smoothing", x.smoothing);
    op.get("spline_degree", x.spline_degree);
    op.get("sigmoid_m", x.sigmoid_m);
    op.get("with_bev", x.with_bev);
    op.get("bev_scale", x.bev_scale);
    if (const auto* lq = op.take("lqr")) {
      StrictObject ol(*lq, "env.pipeline.lqr");
      std::vector<double> q;
      ol.get("q", q);
      if (ol.has("q")) {
        if (q.size() != 4) throw ConfigError("env.pipeline.lqr.q must have 4 entries");
        x.lqr.q = {q[0], q[1], q[2], q[3]};
      }
      ol.get("r", x.lqr.r);
      ol.get("kp", x.lqr.kp);
      ol.get("kd", x.lqr.kd);
      ol.get("tolerance", x.lqr.tolerance);
      ol.get("max_iterations", x.lqr.max_iterations);
      ol.get("min_speed", x.lqr.min_speed);
      ol.get("speed_bucket", x.lqr.speed_bucket);
      ol.finish();
    }
    op.finish();
  }
  o.finish();
  c.validate();
  return c;
}

}  // namespace advedit::trainer
