#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "advedit/world/map.hpp"
#include "advedit/world/route.hpp"
#include "advedit/world/world.hpp"

using namespace advedit;
using namespace advedit::world;
using nlohmann::json;

namespace {

VehicleState at(double x, double y, double heading, double speed = 0.0) {
  VehicleState v;
  v.position = {x, y};
  v.heading = heading;
  v.speed = speed;
  return v;
}

// Brute-force polygon overlap: any edge crossing or any vertex inside.
bool point_in_convex(const std::array<Vec2, 4>& poly, const Vec2& p) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % 4];
    const double c = (b - a).x() * (p - a).y() - (b - a).y() * (p - a).x();
    const int s = c > 0 ? 1 : (c < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

bool segs_cross(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
    return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  };
  const double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

bool oracle_overlap(const VehicleState& a, const VehicleState& b) {
  const auto pa = footprint(a), pb = footprint(b);
  for (int i = 0; i < 4; ++i) {
    if (point_in_convex(pb, pa[i]) || point_in_convex(pa, pb[i])) return true;
    for (int j = 0; j < 4; ++j) {
      if (segs_cross(pa[i], pa[(i + 1) % 4], pb[j], pb[(j + 1) % 4])) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("build_map: straight road, junctions, validation errors") {
  const MapGraph road = build_map(straight_road_spec(200.0, 2, 3.5));
  CHECK(road.lanes.size() == 2);
  CHECK(road.intersections.empty());
  CHECK(road.lane(0).length() == doctest::Approx(200.0));

  const MapGraph t = build_map(t_junction_spec(50.0, 3.5));
  REQUIRE(t.intersections.size() == 1);
  CHECK(t.intersections[0].contains({0.0, 0.0}));
  CHECK(t.in_intersection({0.0, 0.0}));

  const MapGraph four = build_map(four_way_spec(50.0, 3.5));
  CHECK(four.intersections.size() == 1);
  // 4 arms x (in + out) + 4 x 3 connectors.
  CHECK(four.lanes.size() == 20);

  json bad = straight_road_spec(100.0, 1, 3.5);
  bad["lanes"][0]["successors"] = {42};
  try {
    build_map(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }

  json missing = straight_road_spec(100.0, 1, 3.5);
  missing["lanes"][0].erase("width");
  try {
    build_map(missing);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("/lanes/0") != std::string::npos);
  }
  CHECK_THROWS_AS(build_map_from_text("{ not json"), ParseError);
}

TEST_CASE("build_map: connector geometry joins arms") {
  const MapGraph four = build_map(four_way_spec(40.0, 3.5));
  for (const auto& lane : four.lanes) {
    for (int s : lane.successors) {
      const double gap = (four.lane(s).centerline.front() - lane.centerline.back()).norm();
      CHECK(gap < 1e-9);
    }
  }
  // Round trip through the explicit-points form.
  const MapGraph again = build_map(map_to_json(four));
  CHECK(map_to_json(again).dump() == map_to_json(four).dump());
}

TEST_CASE("step_vehicle: straight motion, clamps, closed-form heading") {
  const VehicleLimits lim;
  VehicleState v = at(0, 0, 0, 10.0);
  const auto n = step_vehicle(v, 0.0, 0.0, 0.1, lim);
  CHECK(n.position.x() == doctest::Approx(1.0));
  CHECK(n.position.y() == doctest::Approx(0.0));
  CHECK(n.heading == 0.0);

  const auto stopped = step_vehicle(at(0, 0, 0, 0.0), 0.0, -1.0, 0.1, lim);
  CHECK(stopped.speed == 0.0);

  const auto fast = step_vehicle(at(0, 0, 0, 16.6), 0.0, 1.0, 1.0, lim);
  CHECK(fast.speed == doctest::Approx(lim.max_speed));

  // Constant speed and steering: heading advances linearly.
  const double dt = 1.0 / 15.0;
  VehicleState arc = at(0, 0, 0, 8.0);
  for (int i = 0; i < 100; ++i) arc = step_vehicle(arc, 0.5, 0.0, dt, lim);
  const double rate = 8.0 / lim.wheelbase * std::tan(0.5 * lim.max_steer_rad);
  CHECK(std::abs(wrap_angle(arc.heading - rate * 100 * dt)) < 1e-6);
  CHECK(arc.yaw_rate == doctest::Approx(rate));
}

TEST_CASE("step_vehicle: never negative or NaN across the input range") {
  Rng rng(3);
  const VehicleLimits lim;
  for (int i = 0; i < 20000; ++i) {
    VehicleState v = at(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-4, 4),
                        rng.uniform(0, lim.max_speed));
    const auto n = step_vehicle(v, rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                rng.uniform(1e-3, 0.5), lim);
    REQUIRE(n.speed >= 0.0);
    REQUIRE(std::isfinite(n.position.x()));
    REQUIRE(std::isfinite(n.heading));
    REQUIRE(std::abs(n.steering) <= 1.0);
  }
}

TEST_CASE("detect_collisions: basic cases") {
  WorldState w;
  w.ego = at(0, 0, 0);
  w.agents[1] = at(10, 0, 0);
  CHECK(detect_collisions(w).empty());
  w.agents[1] = at(0, 0, 0, 3.0);
  const auto c = detect_collisions(w);
  REQUIRE(c.size() == 1);
  CHECK(c[0].id_a == kEgoId);
  CHECK(c[0].id_b == 1);
  CHECK(c[0].relative_speed == doctest::Approx(3.0));
}

TEST_CASE("detect_collisions: SAT agrees with polygon oracle and is symmetric") {
  Rng rng(11);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const VehicleState a = at(0, 0, rng.uniform(-kPi, kPi));
    // Bias relative heading around 45 deg and distances around corner touch.
    const double r = rng.uniform(2.0, 5.5);
    const double phi = rng.uniform(-kPi, kPi);
    const VehicleState b = at(r * std::cos(phi), r * std::sin(phi),
                              a.heading + deg2rad(45.0) + rng.uniform(-0.3, 0.3));
    const bool sat = boxes_overlap(a, b);
    REQUIRE(sat == oracle_overlap(a, b));
    REQUIRE(sat == boxes_overlap(b, a));
    hits += sat;
  }
  CHECK(hits > 1000);
  CHECK(hits < 9000);
}

TEST_CASE("plan_route: same lane, unreachable goal") {
  const MapGraph road = build_map(straight_road_spec(200.0, 2, 3.5));
  const Route r = plan_route(road, {10.0, 1.75}, {150.0, 1.75});
  CHECK(std::abs(r.length - 140.0) <= r.spacing);
  for (size_t i = 1; i < r.waypoints.size(); ++i) {
    const double d = (r.waypoints[i] - r.waypoints[i - 1]).norm();
    CHECK(d >= 0.5 * r.spacing);
    CHECK(d <= 2.0 * r.spacing);
  }
  CHECK(r.lane_ids == std::vector<int>{0});
  // Behind on a one-way lane with no loop.
  CHECK_THROWS_AS(plan_route(road, {150.0, 1.75}, {10.0, 1.75}), NoRouteError);
  CHECK_THROWS_AS(plan_route(road, {10.0, 40.0}, {150.0, 1.75}), NoRouteError);
  // Goal on the other lane needs a lane change.
  const Route lc = plan_route(road, {10.0, 1.75}, {150.0, 5.25});
  CHECK(lc.lane_ids == std::vector<int>{0, 1});
}

namespace {

// Exhaustive enumeration of successor-only paths (no lane changes).
double oracle_best_cost(const MapGraph& map, const Vec2& start, const Vec2& goal) {
  struct Cand {
    int lane;
    double s;
  };
  auto cands = [&](const Vec2& p) {
    std::vector<Cand> out;
    for (const auto& l : map.lanes) {
      const auto pr = l.project(p);
      if (pr.within_extent && std::abs(pr.lateral) <= 0.5 * l.width) {
        out.push_back({l.id, std::clamp(pr.s, 0.0, l.length())});
      }
    }
    return out;
  };
  double best = std::numeric_limits<double>::infinity();
  const auto goals = cands(goal);
  std::function<void(int, double, double, std::vector<int>&)> dfs =
      [&](int lane, double s, double cost, std::vector<int>& visited) {
        const Lane& l = map.lane(lane);
        for (const auto& g : goals) {
          if (g.lane == lane && g.s >= s) best = std::min(best, cost + g.s - s);
        }
        for (int nx : l.successors) {
          if (std::find(visited.begin(), visited.end(), nx) != visited.end()) continue;
          visited.push_back(nx);
          const double gap = (map.lane(nx).centerline.front() - l.centerline.back()).norm();
          dfs(nx, 0.0, cost + l.length() - s + gap, visited);
          visited.pop_back();
        }
      };
  for (const auto& c : cands(start)) {
    std::vector<int> visited{c.lane};
    dfs(c.lane, c.s, 0.0, visited);
  }
  return best;
}

}  // namespace

TEST_CASE("plan_route: shorter of two candidate paths") {
  json spec = {{"version", "map/v1"},
               {"lanes",
                {{{"id", 1}, {"width", 3.0}, {"points", {{0, 0}, {10, 0}}}, {"successors", {2, 3}}},
                 {{"id", 2}, {"width", 3.0}, {"points", {{10, 0}, {30, 0}}}, {"successors", {4}}},
                 {{"id", 3}, {"width", 3.0}, {"points", {{10, 0}, {20, 15}, {30, 0}}}, {"successors", {4}}},
                 {{"id", 4}, {"width", 3.0}, {"points", {{30, 0}, {50, 0}}}, {"successors", json::array()}}}}};
  const MapGraph map = build_map(spec);
  const auto legs = plan_legs(map, {2, 0}, {45, 0});
  std::vector<int> lanes;
  for (const auto& l : legs) lanes.push_back(l.lane_id);
  CHECK(lanes == std::vector<int>{1, 2, 4});
  CHECK(path_cost(map, legs) == doctest::Approx(oracle_best_cost(map, {2, 0}, {45, 0})));
}

TEST_CASE("plan_route: equals exhaustive optimum on random small graphs") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    // Random layered DAG of <= 10 lanes between 5 nodes laid out along x.
    std::vector<Vec2> nodes;
    for (int k = 0; k < 5; ++k) nodes.push_back({k * 40.0, rng.uniform(-30, 30)});
    json lanes = json::array();
    int id = 0;
    std::vector<std::vector<int>> into(5), out_of(5);
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 5 && edges.size() < 10; ++b) {
        if (b != a + 1 && rng.uniform() < 0.5) continue;
        edges.push_back({a, b});
      }
    }
    for (auto [a, b] : edges) {
      const Vec2 mid = 0.5 * (nodes[a] + nodes[b]) + Vec2(0.0, rng.uniform(-25, 25));
      out_of[a].push_back(id);
      into[b].push_back(id);
      lanes.push_back({{"id", id},
                       {"width", 3.0},
                       {"points", {{nodes[a].x(), nodes[a].y()}, {mid.x(), mid.y()},
                                   {nodes[b].x(), nodes[b].y()}}}});
      ++id;
    }
    for (size_t e = 0; e < edges.size(); ++e) {
      lanes[e]["successors"] = out_of[edges[e].second];
    }
    const MapGraph map = build_map({{"version", "map/v1"}, {"lanes", lanes}});
    const Lane& first = map.lane(out_of[0][0]);
    const Lane& last = map.lane(into[4].back());
    const Vec2 start = first.point_at(0.3 * first.length());
    const Vec2 goal = last.point_at(0.7 * last.length());
    const double oracle = oracle_best_cost(map, start, goal);
    if (!std::isfinite(oracle)) {
      CHECK_THROWS_AS(plan_legs(map, start, goal), NoRouteError);
      continue;
    }
    const auto legs = plan_legs(map, start, goal);
    CHECK(path_cost(map, legs) == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("upcoming_waypoints: frame, padding, rotation") {
  const MapGraph road = build_map(straight_road_spec(100.0, 1, 3.5));
  const Route r = plan_route(road, {0.0, 1.75}, {60.0, 1.75});
  const VehicleState start = at(0.0, 1.75, 0.0);
  const auto pts = upcoming_waypoints(r, start, 15);
  REQUIRE(pts.size() == 15);
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].y() == doctest::Approx(0.0));
    if (i > 0) CHECK(pts[i].x() > pts[i - 1].x());
  }
  CHECK(pts[0].x() > 0.0);

  const VehicleState near_end = at(r.waypoints[r.waypoints.size() - 2].x(), 1.75, 0.0);
  const auto tail = upcoming_waypoints(r, near_end, 15);
  for (const auto& p : tail) {
    CHECK(p.x() == doctest::Approx(tail[0].x()));
  }
  CHECK(tail[0].x() == doctest::Approx(r.spacing).epsilon(0.1));

  const VehicleState rotated = at(0.0, 1.75, 0.5 * kPi);
  const auto rot = upcoming_waypoints(r, rotated, 15);
  for (size_t i = 0; i < rot.size(); ++i) {
    // A point (d, 0) ahead becomes (0, -d) when the vehicle faces +90 deg.
    CHECK(rot[i].x() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(rot[i].y() == doctest::Approx(-pts[i].x()));
  }
  CHECK_THROWS(upcoming_waypoints(Route{}, start, 15));
}

TEST_CASE("lane_metrics: sign convention and flags") {
  const MapGraph road = build_map(straight_road_spec(100.0, 1, 3.5));
  auto m = lane_metrics(at(50.0, 1.75, 0.0), road);
  CHECK(m.lateral_offset == doctest::Approx(0.0));
  CHECK(m.heading_error == doctest::Approx(0.0));
  CHECK_FALSE(m.in_intersection);
  CHECK_FALSE(m.off_road);
  // Left of a +x lane is -y.
  m = lane_metrics(at(50.0, 0.75, 0.0), road);
  CHECK(m.lateral_offset == doctest::Approx(-1.0));
  m = lane_metrics(at(50.0, 20.0, 0.0), road);
  CHECK(m.off_road);

  const MapGraph four = build_map(four_way_spec(40.0, 3.5));
  CHECK(lane_metrics(at(0.0, 0.0, 0.0), four).in_intersection);
}

TEST_CASE("lane_metrics: lateral offset continuous along a straight traversal") {
  const MapGraph road = build_map(straight_road_spec(200.0, 2, 3.5));
  const WorldConfig cfg;
  VehicleState v = at(5.0, 1.0, 0.05, 8.0);
  double prev = lane_metrics(v, road).lateral_offset;
  for (int i = 0; i < 200; ++i) {
    v = step_vehicle(v, 0.02, 0.0, cfg.dt(), cfg.limits);
    const double cur = lane_metrics(v, road).lateral_offset;
    if (std::abs(cur) < 0.5 * 3.5 - 0.1 && std::abs(prev) < 0.5 * 3.5 - 0.1) {
      CHECK(std::abs(cur - prev) <= v.speed * cfg.dt() + 1e-9);
    }
    prev = cur;
  }
}

TEST_CASE("autopilot_control: centred cruise, stopped leader, sign") {
  auto map = std::make_shared<MapGraph>(build_map(straight_road_spec(200.0, 1, 3.5)));
  const Route r = plan_route(*map, {0.0, 1.75}, {190.0, 1.75});
  const WorldConfig cfg;
  WorldState w;
  w.map = map;
  w.ego = at(-500, -500, 0);  // out of the way
  const VehicleState v = at(20.0, 1.75, 0.0, 5.0);
  auto [steer, accel] = autopilot_control(v, r, w, 1, 8.0, cfg);
  CHECK(std::abs(steer) < 0.05);
  CHECK(accel > 0.0);

  w.agents[2] = at(25.0, 1.75, 0.0, 0.0);
  std::tie(steer, accel) = autopilot_control(v, r, w, 1, 8.0, cfg);
  CHECK(accel == -1.0);
  w.agents.clear();

  const VehicleState left = at(20.0, 0.75, 0.0, 5.0);
  std::tie(steer, accel) = autopilot_control(left, r, w, 1, 8.0, cfg);
  CHECK(steer > 0.0);
}

TEST_CASE("TrafficWorld: deterministic replay and playback") {
  auto run = [](uint64_t seed) {
    auto map = std::make_shared<MapGraph>(build_map(straight_road_spec(300.0, 2, 3.5)));
    TrafficWorld world(map, WorldConfig{}, seed);
    world.set_ego(at(10.0, 1.75, 0.0, 5.0));
    for (int k = 0; k < 4; ++k) {
      const double x = 30.0 + 20.0 * k;
      const double y = k % 2 ? 1.75 : 5.25;
      const Route r = plan_route(*map, {x, y}, {290.0, y});
      world.add_agent(at(x, y, 0.0, 6.0), r, 6.0 + k);
    }
    std::vector<std::string> records;
    for (int i = 0; i < 150; ++i) {
      world.step(std::sin(0.1 * i) * 0.1, 0.3);
      records.push_back(world.trace_record(detect_collisions(world.state())).dump());
    }
    return records;
  };
  CHECK(run(7) == run(7));

  auto map = std::make_shared<MapGraph>(build_map(straight_road_spec(300.0, 1, 3.5)));
  TrafficWorld world(map, WorldConfig{}, 1);
  world.set_ego(at(10.0, 1.75, 0.0));
  const int id = world.add_agent(at(50.0, 1.75, 0.0, 5.0),
                                 plan_route(*map, {50.0, 1.75}, {290.0, 1.75}), 5.0);
  std::vector<VehicleState> poses;
  for (int i = 1; i <= 5; ++i) poses.push_back(at(50.0 + i, 1.75, 0.0, 5.0));
  world.set_playback(id, poses);
  for (int i = 0; i < 5; ++i) {
    CHECK(world.playback_active(id));
    world.step(0.0, 0.0);
    CHECK(world.state().agents.at(id).position.x() == doctest::Approx(51.0 + i));
  }
  CHECK_FALSE(world.playback_active(id));
  CHECK(world.state().ego_past.size() <= 15);
}
