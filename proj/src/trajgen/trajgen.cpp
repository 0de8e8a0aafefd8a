#include "advedit/trajgen/trajgen.hpp"

#include <algorithm>
#include <cmath>

namespace advedit::trajgen {

using world::Lane;
using world::MapGraph;
using world::VehicleState;

Trajectory ctrv_predict(const VehicleState& state, int n, double dt) {
  if (n < 1) throw ValidationError("ctrv_predict: N must be >= 1");
  Trajectory t;
  t.stage = Stage::Model;
  t.frame = TrajFrame::World;
  t.dt = dt;
  t.points.reserve(static_cast<size_t>(n));
  const double x = state.position.x(), y = state.position.y();
  const double th = state.heading, v = state.speed, w = state.yaw_rate;
  for (int i = 1; i <= n; ++i) {
    const double ti = i * dt;
    if (std::abs(w) > kCtrvEpsilon) {
      t.points.emplace_back(x + (v / w) * (std::sin(th + w * ti) - std::sin(th)),
                            y - (v / w) * (std::cos(th + w * ti) - std::cos(th)));
    } else {
      // Chord of the arc along the mid-heading; sin(h)/h by its series.
      const double h = 0.5 * w * ti;
      const double chord = v * ti * (1.0 - h * h / 6.0);
      t.points.emplace_back(x + chord * std::cos(th + h), y + chord * std::sin(th + h));
    }
  }
  return t;
}

namespace {

double total_turn(const Lane& lane) {
  return std::abs(wrap_angle(lane.heading_at(lane.length()) - lane.heading_at(0.0)));
}

int pick_successor(const MapGraph& map, const Lane& lane) {
  int best = lane.successors.front();
  double best_turn = total_turn(map.lane(best));
  for (int id : lane.successors) {
    const double turn = total_turn(map.lane(id));
    if (turn < best_turn - 1e-12 || (std::abs(turn - best_turn) <= 1e-12 && id < best)) {
      best = id;
      best_turn = turn;
    }
  }
  return best;
}

}  // namespace

Trajectory map_waypoint_traj(const VehicleState& agent, const MapGraph& map, int n,
                             double dt) {
  if (n < 1) throw ValidationError("map_waypoint_traj: N must be >= 1");
  const auto match = map.nearest_aligned(agent.position, agent.heading);
  if (!match) throw ValidationError("map_waypoint_traj: agent is not on a lane");
  const double spacing = std::max(agent.speed, 1.0) * dt;
  const double needed = spacing * n;

  // Chain centerline pieces ahead of the foot point until long enough.
  const Lane* lane = &map.lane(match->lane_id);
  const double s0 = std::clamp(match->proj.s, 0.0, lane->length());
  std::vector<Vec2> poly{lane->point_at(s0)};
  double have = 0.0;
  auto append = [&](const Vec2& p) {
    const double d = (p - poly.back()).norm();
    if (d > 1e-12) {
      poly.push_back(p);
      have += d;
    }
  };
  for (size_t i = 0; i < lane->arc.size(); ++i) {
    if (lane->arc[i] > s0) append(lane->centerline[i]);
  }
  for (int guard = 0; guard < 64 && have < needed && !lane->successors.empty(); ++guard) {
    lane = &map.lane(pick_successor(map, *lane));
    for (const auto& p : lane->centerline) append(p);
  }

  Vec2 tangent = heading_vec(lane->heading_at(lane->length()));
  if (poly.size() >= 2) tangent = (poly.back() - poly[poly.size() - 2]).normalized();

  Trajectory t;
  t.stage = Stage::Map;
  t.frame = TrajFrame::World;
  t.dt = dt;
  t.points.reserve(static_cast<size_t>(n));
  size_t seg = 0;
  double seg_start = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double s = i * spacing;
    while (seg + 1 < poly.size() &&
           seg_start + (poly[seg + 1] - poly[seg]).norm() < s) {
      seg_start += (poly[seg + 1] - poly[seg]).norm();
      ++seg;
    }
    if (seg + 1 >= poly.size()) {
      t.points.push_back(poly.back() + tangent * (s - have));
    } else {
      const Vec2 d = poly[seg + 1] - poly[seg];
      t.points.push_back(poly[seg] + d * ((s - seg_start) / d.norm()));
    }
  }
  return t;
}

Trajectory fuse_linear(const Trajectory& model, const Trajectory& map_t) {
  if (model.size() != map_t.size()) {
    throw ValidationError("fuse_linear: length mismatch (" + std::to_string(model.size()) +
                          " vs " + std::to_string(map_t.size()) + ")");
  }
  if (model.frame != map_t.frame) throw ValidationError("fuse_linear: frame mismatch");
  if (std::abs(model.dt - map_t.dt) > 1e-12) throw ValidationError("fuse_linear: dt mismatch");
  if (model.points.empty()) throw ValidationError("fuse_linear: empty input");
  Trajectory out;
  out.stage = Stage::Base;
  out.frame = model.frame;
  out.dt = model.dt;
  const int n = static_cast<int>(model.size());
  out.points.reserve(model.size());
  for (int i = 1; i <= n; ++i) {
    const double w = static_cast<double>(i) / n;
    const size_t k = static_cast<size_t>(i - 1);
    out.points.push_back((1.0 - w) * model.points[k] + w * map_t.points[k]);
  }
  return out;
}

}  // namespace advedit::trajgen
