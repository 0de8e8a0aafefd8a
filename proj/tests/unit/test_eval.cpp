#include <doctest.h>

#include <filesystem>

#include <Eigen/Geometry>

#include "advedit/binio.hpp"
#include "advedit/eval/eval.hpp"

using namespace advedit;
using namespace advedit::eval;
using trainer::EpisodeResult;
namespace fs = std::filesystem;

namespace {

EpisodeResult episode(double distance, int collisions, double speed_kmh = 0.0) {
  EpisodeResult r;
  r.distance = distance;
  r.collisions = collisions;
  for (int i = 0; i < collisions; ++i) r.collision_speeds.push_back(speed_kmh);
  r.steps = 100;
  r.mean_speed = 5.0;
  r.route_completion = 0.5;
  return r;
}

trajgen::Trajectory line(int n, double dt, Vec2 origin, double heading, double speed) {
  trajgen::Trajectory t;
  t.dt = dt;
  for (int i = 1; i <= n; ++i) t.points.push_back(origin + heading_vec(heading) * speed * dt * i);
  return t;
}

}  // namespace

TEST_CASE("aggregate: metric definitions") {
  std::vector<EpisodeResult> ten(10, episode(100.0, 0));
  ten[3] = episode(100.0, 1, 30.0);
  auto m = aggregate(ten, 7);
  CHECK(m.cr == doctest::Approx(0.1));
  CHECK(m.td == doctest::Approx(1000.0));
  CHECK(*m.cpm == doctest::Approx(1.0));
  CHECK(m.cs == doctest::Approx(30.0));
  CHECK(m.as == doctest::Approx(18.0));
  CHECK(m.rc == doctest::Approx(0.5));
  CHECK(m.seed == 7);

  std::vector<EpisodeResult> four(4, episode(1000.0, 0));
  four[0] = episode(1000.0, 2, 10.0);
  m = aggregate(four);
  CHECK(*m.cpm == doctest::Approx(0.5));
  CHECK(*m.cpm * m.td / 1000.0 == doctest::Approx(2.0));
  CHECK(m.cs == doctest::Approx(10.0));

  m = aggregate({episode(50.0, 0), episode(70.0, 0)});
  CHECK(m.cs == 0.0);
  CHECK(*m.cpm == 0.0);
  CHECK(m.cr == 0.0);

  m = aggregate({episode(0.0, 0)});
  CHECK_FALSE(m.cpm.has_value());
  CHECK(to_json(m).at("CPM").is_null());
  CHECK_THROWS_AS(aggregate({}), ValidationError);
}

TEST_CASE("aggregate: CPM recovers the integer collision count") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<EpisodeResult> rs;
    long total = 0;
    for (int i = 0; i < 1 + rng.uniform_int(20); ++i) {
      const int c = rng.uniform_int(3);
      total += c;
      rs.push_back(episode(rng.uniform(1.0, 900.0), c, 20.0));
    }
    const auto m = aggregate(rs);
    CHECK(std::llround(*m.cpm * m.td / 1000.0) == total);
    CHECK(std::abs(*m.cpm * m.td / 1000.0 - static_cast<double>(total)) < 1e-9);
    CHECK(m.cr >= 0.0);
    CHECK(m.cr <= 1.0);
  }
}

TEST_CASE("extract_features: lines, circles and identical paths") {
  const world::VehicleLimits lim;
  const auto t = line(10, 0.1, {0, 0}, 0.0, 10.0);
  auto f = extract_features(t, t, lim, Vec2(0, 0));
  CHECK(f.length == doctest::Approx(10.0));
  CHECK(f.avg_speed == doctest::Approx(10.0));
  CHECK(f.max_curvature == doctest::Approx(0.0));
  CHECK(f.max_accel == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(f.min_distance == 0.0);
  CHECK(f.max_steer == 0.0);

  for (double r : {5.0, 12.0, 40.0}) {
    trajgen::Trajectory c;
    c.dt = 0.1;
    for (int i = 0; i < 60; ++i) c.points.emplace_back(r * std::cos(0.05 * i), r * std::sin(0.05 * i));
    f = extract_features(c, line(60, 0.1, {0, 100}, 0.0, 1.0), lim);
    CHECK(f.max_curvature == doctest::Approx(1.0 / r).epsilon(1e-3));
    CHECK(f.max_steer > 0.0);
    CHECK(f.max_steer <= 1.0);
  }
}

TEST_CASE("extract_features: frame-independent features") {
  const world::VehicleLimits lim;
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    trajgen::Trajectory t, moved;
    t.dt = moved.dt = 1.0 / 15.0;
    const double rot = rng.uniform(-3, 3);
    const Vec2 shift(rng.uniform(-100, 100), rng.uniform(-100, 100));
    const Eigen::Rotation2Dd R(rot);
    Vec2 p(0, 0);
    double h = 0.0;
    for (int i = 0; i < 30; ++i) {
      h += rng.uniform(-0.05, 0.05);
      p += heading_vec(h) * rng.uniform(0.3, 0.6);
      t.points.push_back(p);
      moved.points.push_back(R * p + shift);
    }
    const auto a = extract_features(t, t, lim);
    const auto b = extract_features(moved, moved, lim);
    CHECK(a.length == doctest::Approx(b.length).epsilon(1e-12));
    CHECK(a.avg_speed == doctest::Approx(b.avg_speed).epsilon(1e-12));
    CHECK(a.max_curvature == doctest::Approx(b.max_curvature).epsilon(1e-9));
    CHECK(a.max_accel == doctest::Approx(b.max_accel).epsilon(1e-9));
    CHECK(a.max_steer == doctest::Approx(b.max_steer).epsilon(1e-9));
  }
}

TEST_CASE("quartiles interpolate order statistics") {
  const auto q = quartiles({4, 1, 3, 2, 5});
  CHECK(q.median == 3.0);
  CHECK(q.q1 == 2.0);
  CHECK(q.q3 == 4.0);
  CHECK(quartiles({1, 2}).median == 1.5);
}

TEST_CASE("diversity study: shape and identity control") {
  DiversityConfig cfg;
  cfg.scenes = 10;
  editor::IdentityEditor same;
  editor::OfflineGenerateEditor gen;
  const auto r = diversity_study(cfg, same, gen);
  CHECK(r.rows.size() == 30);
  CHECK(r.max_paired_delta == 0.0);
  for (size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(r.rows[i].scene == static_cast<int>(i / 3));
    CHECK(std::isfinite(r.rows[i].f.length));
    CHECK(r.rows[i].f.length >= 0.0);
  }

  editor::RuleBasedEditor rule;
  const auto e = diversity_study(cfg, rule, gen);
  CHECK(e.rows.size() == 30);
  CHECK(e.max_paired_delta > 0.0);
  CHECK(features_csv(e.rows) == features_csv(diversity_study(cfg, rule, gen).rows));
}

TEST_CASE("emit_report: deterministic bytes and Tab-style columns") {
  const auto m = aggregate({episode(400.0, 1, 25.0), episode(600.0, 0)}, 1);
  std::vector<LabeledMetrics> rows = {{"normal", m}, {"challenging", m}};
  const auto a = fs::temp_directory_path() / "advedit_eval_a";
  const auto b = fs::temp_directory_path() / "advedit_eval_b";
  emit_report(rows, {}, a.string());
  emit_report(rows, {}, b.string());
  for (const char* name : {"metrics.csv", "features.csv", "summary.json"}) {
    CHECK(read_file((a / name).string()) == read_file((b / name).string()));
  }
  const auto csv = read_file((a / "metrics.csv").string());
  CHECK(csv.rfind("config,seed,episodes,RC,TD,CR,CPM,CS,AS\n", 0) == 0);
  CHECK(csv.find("\nsum,") != std::string::npos);
  CHECK(read_file((a / "features.csv").string()).find('\n') ==
        read_file((a / "features.csv").string()).size() - 1);
  const auto summary = nlohmann::json::parse(read_file((a / "summary.json").string()));
  CHECK(summary.at("version") == "metrics/v1");
  CHECK(metrics_csv({{"only", m}}).find("sum") == std::string::npos);
}

TEST_CASE("evaluation rollouts: straight policy on an empty road") {
  trainer::EnvConfig env;
  env.num_vehicles = 0;
  env.step_cap = 200;
  const auto map = trainer::load_map({{"preset", "straight"}, {"length", 600.0}, {"lanes", 2}});
  const auto rs = run_evaluation(map, env,
                                 [](const Eigen::VectorXd&) { return policy::Action{0.0, 0.5}; },
                                 trainer::ScenarioKind::Normal, 3, 4, nullptr);
  const auto m = aggregate(rs);
  CHECK(m.cr == 0.0);
  CHECK(m.td > 0.0);
  CHECK_THROWS_AS(run_evaluation(map, env, random_policy(1), trainer::ScenarioKind::Normal, 0, 0, nullptr),
                  ConfigError);
}
