#include "advedit/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "advedit/binio.hpp"

namespace advedit::eval {

MetricsReport aggregate(const std::vector<trainer::EpisodeResult>& results, uint64_t seed) {
  if (results.empty()) throw ValidationError("aggregate: no episodes");
  MetricsReport m;
  m.episodes = static_cast<long>(results.size());
  m.seed = seed;
  double rc = 0.0, speed_time = 0.0, collision_speed = 0.0;
  long steps = 0, crashed = 0, events = 0;
  for (const auto& r : results) {
    rc += r.route_completion;
    m.td += r.distance;
    m.collisions += r.collisions;
    crashed += r.collisions > 0;
    for (double s : r.collision_speeds) collision_speed += s;
    events += static_cast<long>(r.collision_speeds.size());
    speed_time += r.mean_speed * r.steps;
    steps += r.steps;
  }
  m.rc = rc / static_cast<double>(m.episodes);
  m.cr = static_cast<double>(crashed) / static_cast<double>(m.episodes);
  if (m.td > 0.0) m.cpm = static_cast<double>(m.collisions) / (m.td / 1000.0);
  m.cs = events > 0 ? collision_speed / static_cast<double>(events) : 0.0;
  m.as = steps > 0 ? speed_time / static_cast<double>(steps) * 3.6 : 0.0;
  return m;
}

nlohmann::json to_json(const MetricsReport& m) {
  return {{"RC", m.rc},
          {"TD", m.td},
          {"CR", m.cr},
          {"CPM", m.cpm ? nlohmann::json(*m.cpm) : nlohmann::json(nullptr)},
          {"CS", m.cs},
          {"AS", m.as},
          {"episodes", m.episodes},
          {"collisions", m.collisions},
          {"seed", m.seed}};
}

TrajFeatures extract_features(const trajgen::Trajectory& t, const trajgen::Trajectory& ego,
                              const world::VehicleLimits& limits, const std::optional<Vec2>& start,
                              const std::optional<Frame2D>& frame,
                              const std::vector<postproc::ControlStep>* controls) {
  TrajFeatures f;
  std::vector<Vec2> pts;
  if (start) pts.push_back(*start);
  pts.insert(pts.end(), t.points.begin(), t.points.end());
  if (t.points.empty()) return f;
  for (size_t i = 1; i < pts.size(); ++i) f.length += (pts[i] - pts[i - 1]).norm();
  f.avg_speed = f.length / (static_cast<double>(t.points.size()) * t.dt);
  for (size_t i = 1; i + 1 < pts.size(); ++i) {
    f.max_curvature = std::max(f.max_curvature, postproc::menger_curvature(pts[i - 1], pts[i], pts[i + 1]));
    f.max_accel = std::max(f.max_accel, (pts[i + 1] - 2.0 * pts[i] + pts[i - 1]).norm() / (t.dt * t.dt));
  }
  f.endpoint = frame ? frame->to_local(t.points.back()) : t.points.back();
  const size_t n = std::min(t.points.size(), ego.points.size());
  f.min_distance = n > 0 ? 1e300 : 0.0;
  for (size_t i = 0; i < n; ++i) f.min_distance = std::min(f.min_distance, (t.points[i] - ego.points[i]).norm());
  if (controls && !controls->empty()) {
    for (const auto& c : *controls) f.max_steer = std::max(f.max_steer, std::abs(c.steer));
  } else {
    for (size_t i = 1; i + 1 < pts.size(); ++i) {
      const Vec2 a = pts[i] - pts[i - 1], b = pts[i + 1] - pts[i];
      const double v = b.norm() / t.dt;
      if (a.norm() < 1e-9 || b.norm() < 1e-9) continue;
      const double dh = std::abs(wrap_angle(std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x())));
      const double steer = std::atan(dh / t.dt * limits.wheelbase / std::max(v, 0.5));
      f.max_steer = std::max(f.max_steer, std::min(1.0, steer / limits.max_steer_rad));
    }
  }
  return f;
}

std::vector<trainer::EpisodeResult> run_evaluation(const std::shared_ptr<const world::MapGraph>& map,
                                                   const trainer::EnvConfig& env,
                                                   const trainer::PolicyFn& policy,
                                                   trainer::ScenarioKind kind, int n,
                                                   uint64_t seed, editor::Editor* ed) {
  if (n <= 0) throw ConfigError("evaluation needs at least one episode");
  std::vector<trainer::EpisodeResult> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    trainer::EpisodeSpec spec;
    spec.index = i;
    spec.kind = kind;
    spec.seed = Rng::derive(seed, "eval", static_cast<uint64_t>(i));
    spec.max_steps = env.step_cap;
    out.push_back(trainer::run_episode(map, env, spec, policy, ed));
  }
  return out;
}

trainer::PolicyFn random_policy(uint64_t seed) {
  auto rng = std::make_shared<Rng>(Rng::derive(seed, "random_policy"));
  return [rng](const Eigen::VectorXd&) {
    return policy::Action{rng->uniform(-1.0, 1.0), rng->uniform(-1.0, 1.0)};
  };
}

nlohmann::json default_study_map() {
  return {{"preset", "straight"}, {"length", 400.0}, {"lanes", 2}, {"opposite_lanes", 1}};
}

trainer::EpisodeWorld warm_up(const std::shared_ptr<const world::MapGraph>& map,
                              const trainer::EnvConfig& env, uint64_t seed, int steps) {
  auto ep = trainer::spawn_episode(map, env, seed);
  auto& tw = *ep.world;
  size_t hint = 0;
  const double ego_cruise = 0.5 * (env.cruise_min + env.cruise_max);
  for (int k = 0; k < steps; ++k) {
    const auto [steer, accel] = world::autopilot_control(tw.state().ego, ep.ego_route, tw.state(),
                                                         world::kEgoId, ego_cruise, tw.config(), &hint);
    tw.step(steer, accel);
  }
  return ep;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Base: return "base";
    case Variant::Edited: return "edited";
    case Variant::Generated: return "generated";
  }
  return "base";
}

Quartiles quartiles(std::vector<double> v) {
  Quartiles q;
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  // Linear interpolation between order statistics.
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

namespace {

VariantSummary summarize(const std::vector<FeatureRow>& rows, Variant which) {
  std::vector<double> len, spd, curv, mind, acc, steer;
  std::vector<Vec2> ends;
  for (const auto& r : rows) {
    if (r.variant != which) continue;
    len.push_back(r.f.length);
    spd.push_back(r.f.avg_speed);
    curv.push_back(r.f.max_curvature);
    mind.push_back(r.f.min_distance);
    acc.push_back(r.f.max_accel);
    steer.push_back(r.f.max_steer);
    ends.push_back(r.f.endpoint);
  }
  VariantSummary s;
  s.length = quartiles(len);
  s.avg_speed = quartiles(spd);
  s.max_curvature = quartiles(curv);
  s.min_distance = quartiles(mind);
  s.max_accel = quartiles(acc);
  s.max_steer = quartiles(steer);
  if (ends.size() > 1) {
    Vec2 mean = Vec2::Zero();
    for (const auto& e : ends) mean += e;
    mean /= static_cast<double>(ends.size());
    double tr = 0.0;
    for (const auto& e : ends) tr += (e - mean).squaredNorm();
    s.endpoint_spread = tr / static_cast<double>(ends.size() - 1);
  }
  return s;
}

double feature_delta(const TrajFeatures& a, const TrajFeatures& b) {
  const double d[] = {a.length - b.length,           a.avg_speed - b.avg_speed,
                      a.max_curvature - b.max_curvature, (a.endpoint - b.endpoint).norm(),
                      a.min_distance - b.min_distance, a.max_accel - b.max_accel,
                      a.max_steer - b.max_steer};
  double m = 0.0;
  for (double x : d) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

DiversityResult diversity_study(const DiversityConfig& cfg, editor::Editor& edited,
                                editor::Editor& generated) {
  if (cfg.scenes < 1) throw ConfigError("diversity study needs at least one scene");
  cfg.env.validate();
  const auto map = trainer::load_map(cfg.map);
  const auto& limits = cfg.env.world.limits;
  editor::IdentityEditor identity;
  DiversityResult out;

  for (int scene = 0; scene < cfg.scenes; ++scene) {
    const uint64_t scene_seed = Rng::derive(cfg.seed, "scene", static_cast<uint64_t>(scene));
    bool done = false;
    for (int attempt = 0; attempt < cfg.max_attempts_per_scene && !done; ++attempt) {
      const uint64_t s = Rng::derive(scene_seed, "attempt", static_cast<uint64_t>(attempt));
      const auto ep = warm_up(map, cfg.env, s, cfg.warmup_steps);
      const auto& ws = ep.world->state();
      if (!world::detect_collisions(ws).empty()) continue;
      const auto risky = scene::select_risky_agent(ws, cfg.env.pipeline.zone_radius);
      if (!risky) continue;

      std::vector<std::optional<trainer::PipelineResult>> runs;
      try {
        for (editor::Editor* ed : {static_cast<editor::Editor*>(&identity), &edited, &generated}) {
          Rng mrng(Rng::derive(s, "maneuver"));
          runs.push_back(trainer::run_adversary_for(ws, *risky, limits, *ed, cfg.env.pipeline, mrng,
                                                    Rng::derive(s, "editor")));
        }
      } catch (const Error&) {
        continue;
      }
      if (!runs[0] || !runs[1] || !runs[2]) continue;

      const auto& agent = ws.agents.at(*risky);
      const Frame2D frame{agent.position, agent.heading};
      const auto ego_path = trainer::predict_base(ws.ego, *ws.map, cfg.env.pipeline.horizon, ws.dt);
      const Variant order[] = {Variant::Base, Variant::Edited, Variant::Generated};
      for (size_t v = 0; v < 3; ++v) {
        const auto& r = *runs[v];
        FeatureRow row;
        row.scene = scene;
        row.variant = order[v];
        row.maneuver = scene::maneuver_tag(r.maneuver);
        row.f = extract_features(r.t_final, ego_path, limits, agent.position, frame, &r.rollout.log);
        out.rows.push_back(row);
      }
      done = true;
    }
    if (!done) {
      throw Error("diversity study: no usable scene for index " + std::to_string(scene));
    }
  }

  out.base = summarize(out.rows, Variant::Base);
  out.edited = summarize(out.rows, Variant::Edited);
  out.generated = summarize(out.rows, Variant::Generated);
  out.min_distance_closer = out.edited.min_distance.median < out.base.min_distance.median;
  out.endpoints_more_spread = out.edited.endpoint_spread > out.base.endpoint_spread;
  for (size_t i = 0; i + 2 < out.rows.size(); i += 3) {
    out.max_paired_delta = std::max(out.max_paired_delta, feature_delta(out.rows[i + 1].f, out.rows[i].f));
  }
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<LabeledMetrics>& metrics) {
  std::string s = "config,seed,episodes,RC,TD,CR,CPM,CS,AS\n";
  auto row = [&](const std::string& label, const std::string& seed, long episodes, double rc,
                 double td, double cr, const std::optional<double>& cpm, double cs, double as) {
    s += label + "," + seed + "," + std::to_string(episodes) + "," + fmt(rc) + "," + fmt(td) + "," +
         fmt(cr) + "," + (cpm ? fmt(*cpm) : std::string("NA")) + "," + fmt(cs) + "," + fmt(as) + "\n";
  };
  for (const auto& m : metrics) {
    const auto& r = m.report;
    row(m.label, std::to_string(r.seed), r.episodes, r.rc, r.td, r.cr, r.cpm, r.cs, r.as);
  }
  if (metrics.size() > 1) {
    // Column-wise sums, in the style of per-town "Total" rows.
    double rc = 0, td = 0, cr = 0, cs = 0, as = 0;
    std::optional<double> cpm = 0.0;
    long episodes = 0;
    for (const auto& m : metrics) {
      const auto& r = m.report;
      rc += r.rc;
      td += r.td;
      cr += r.cr;
      cs += r.cs;
      as += r.as;
      episodes += r.episodes;
      if (cpm && r.cpm) *cpm += *r.cpm;
      else cpm.reset();
    }
    row("sum", "", episodes, rc, td, cr, cpm, cs, as);
  }
  return s;
}

std::string features_csv(const std::vector<FeatureRow>& rows) {
  std::string s =
      "scene,variant,maneuver,length,avg_speed,max_curvature,endpoint_x,endpoint_y,min_distance,"
      "max_accel,max_steer\n";
  for (const auto& r : rows) {
    s += std::to_string(r.scene) + "," + variant_name(r.variant) + "," + r.maneuver + "," +
         fmt(r.f.length) + "," + fmt(r.f.avg_speed) + "," + fmt(r.f.max_curvature) + "," +
         fmt(r.f.endpoint.x()) + "," + fmt(r.f.endpoint.y()) + "," + fmt(r.f.min_distance) + "," +
         fmt(r.f.max_accel) + "," + fmt(r.f.max_steer) + "\n";
  }
  return s;
}

void emit_report(const std::vector<LabeledMetrics>& metrics, const std::vector<FeatureRow>& features,
                 const std::string& dir, const nlohmann::json& extra) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "metrics.csv").string(), metrics_csv(metrics));
  write_file_atomic((fs::path(dir) / "features.csv").string(), features_csv(features));
  nlohmann::json summary = {{"version", "metrics/v1"}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : metrics) {
    auto j = to_json(m.report);
    j["config"] = m.label;
    rows.push_back(j);
  }
  summary["metrics"] = rows;
  summary["feature_rows"] = features.size();
  for (const auto& [k, v] : extra.items()) summary[k] = v;
  write_file_atomic((fs::path(dir) / "summary.json").string(), summary.dump(2) + "\n");
}

}  // namespace advedit::eval
