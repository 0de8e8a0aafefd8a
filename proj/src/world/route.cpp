#include "advedit/world/route.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

namespace advedit::world {

namespace {

struct Candidate {
  int lane_id;
  double s;
};

std::vector<Candidate> corridor_candidates(const MapGraph& map, const Vec2& p) {
  std::vector<Candidate> out;
  for (const auto& lane : map.lanes) {
    const auto pr = lane.project(p);
    if (pr.within_extent && std::abs(pr.lateral) <= 0.5 * lane.width) {
      out.push_back({lane.id, std::clamp(pr.s, 0.0, lane.length())});
    }
  }
  return out;
}

bool same_direction(const Lane& a, double sa, const Lane& b, double sb) {
  return std::abs(wrap_angle(a.heading_at(sa) - b.heading_at(sb))) < 0.5 * kPi;
}

struct Node {
  int lane_id;
  double s;
  double g;
  int parent;
  bool terminal;  // reached the goal point on this lane
  bool via_successor = false;
};

}  // namespace

std::vector<RouteLeg> plan_legs(const MapGraph& map, const Vec2& start,
                                const Vec2& goal, const RoutePlanOptions& opts) {
  const auto starts = corridor_candidates(map, start);
  const auto goals = corridor_candidates(map, goal);
  if (starts.empty()) throw NoRouteError("plan_route: start is off the drivable area");
  if (goals.empty()) throw NoRouteError("plan_route: goal is off the drivable area");

  std::vector<Node> nodes;
  using Entry = std::pair<double, int>;  // (f, node index)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  auto heuristic = [&](int lane_id, double s) {
    return (map.lane(lane_id).point_at(s) - goal).norm();
  };
  auto push = [&](Node n) {
    const double h = n.terminal ? 0.0 : heuristic(n.lane_id, n.s);
    nodes.push_back(n);
    open.push({n.g + h, static_cast<int>(nodes.size()) - 1});
  };
  for (const auto& c : starts) push({c.lane_id, c.s, 0.0, -1, false});

  std::set<std::pair<int, long long>> closed;
  int found = -1;
  while (!open.empty()) {
    const int idx = open.top().second;
    open.pop();
    const Node node = nodes[static_cast<size_t>(idx)];
    if (node.terminal) {
      found = idx;
      break;
    }
    const auto key = std::make_pair(node.lane_id, std::llround(node.s * 1000.0));
    if (!closed.insert(key).second) continue;
    const Lane& lane = map.lane(node.lane_id);

    for (const auto& gc : goals) {
      if (gc.lane_id == node.lane_id && gc.s >= node.s - 1e-9) {
        push({node.lane_id, gc.s, node.g + std::max(0.0, gc.s - node.s), idx, true});
      }
    }
    for (int succ_id : lane.successors) {
      const Lane& succ = map.lane(succ_id);
      const double gap = (succ.centerline.front() - lane.centerline.back()).norm();
      push({succ_id, 0.0, node.g + (lane.length() - node.s) + gap, idx, false, true});
    }
    for (const auto& nb : {lane.left, lane.right}) {
      if (!nb) continue;
      const Lane& other = map.lane(*nb);
      const double s_exit = node.s + opts.lane_change_length;
      if (s_exit > lane.length()) continue;
      const double s_entry = other.project(lane.point_at(s_exit)).s;
      if (s_entry < 0.0 || s_entry > other.length()) continue;
      if (!same_direction(lane, node.s, other, s_entry)) continue;
      const double cost = (other.point_at(s_entry) - lane.point_at(node.s)).norm();
      push({*nb, s_entry, node.g + cost, idx, false});
    }
  }
  if (found < 0) throw NoRouteError("plan_route: goal is unreachable from start");

  // Walk back: each non-terminal node's leg ends where its child begins.
  std::vector<int> chain;
  for (int i = found; i >= 0; i = nodes[static_cast<size_t>(i)].parent) chain.push_back(i);
  std::reverse(chain.begin(), chain.end());
  std::vector<RouteLeg> legs;
  for (size_t k = 0; k + 1 < chain.size(); ++k) {
    const Node& n = nodes[static_cast<size_t>(chain[k])];
    const Node& next = nodes[static_cast<size_t>(chain[k + 1])];
    double s_to = n.s;
    if (next.terminal) {
      s_to = next.s;
    } else if (next.via_successor) {
      s_to = map.lane(n.lane_id).length();
    }
    legs.push_back({n.lane_id, n.s, s_to});
  }
  return legs;
}

double path_cost(const MapGraph& map, const std::vector<RouteLeg>& legs) {
  double cost = 0.0;
  for (size_t k = 0; k < legs.size(); ++k) {
    cost += legs[k].s_to - legs[k].s_from;
    if (k + 1 < legs.size()) {
      const Vec2 a = map.lane(legs[k].lane_id).point_at(legs[k].s_to);
      const Vec2 b = map.lane(legs[k + 1].lane_id).point_at(legs[k + 1].s_from);
      cost += (b - a).norm();
    }
  }
  return cost;
}

std::vector<Vec2> resample_uniform(const std::vector<Vec2>& pts, double spacing) {
  if (pts.size() < 2) return pts;
  std::vector<double> arc(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) arc[i] = arc[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = arc.back();
  if (total <= 0.0) return {pts.front()};
  const int n = std::max(1, static_cast<int>(std::ceil(total / spacing - 1e-9)));
  const double step = total / n;
  std::vector<Vec2> out;
  out.reserve(static_cast<size_t>(n) + 1);
  size_t seg = 0;
  for (int i = 0; i <= n; ++i) {
    const double s = i == n ? total : i * step;
    while (seg + 2 < pts.size() && arc[seg + 1] < s) ++seg;
    const double len = arc[seg + 1] - arc[seg];
    const double t = len > 0.0 ? std::clamp((s - arc[seg]) / len, 0.0, 1.0) : 0.0;
    out.push_back(pts[seg] + t * (pts[seg + 1] - pts[seg]));
  }
  return out;
}

Route route_from_legs(const MapGraph& map, const std::vector<RouteLeg>& legs,
                      double spacing) {
  std::vector<Vec2> poly;
  auto add = [&](const Vec2& p) {
    if (poly.empty() || (poly.back() - p).norm() > 1e-9) poly.push_back(p);
  };
  Route route;
  for (const auto& leg : legs) {
    const Lane& lane = map.lane(leg.lane_id);
    add(lane.point_at(leg.s_from));
    for (size_t i = 0; i < lane.arc.size(); ++i) {
      if (lane.arc[i] > leg.s_from && lane.arc[i] < leg.s_to) add(lane.centerline[i]);
    }
    add(lane.point_at(leg.s_to));
    if (route.lane_ids.empty() || route.lane_ids.back() != leg.lane_id) {
      route.lane_ids.push_back(leg.lane_id);
    }
  }
  route.spacing = spacing;
  route.waypoints = resample_uniform(poly, spacing);
  route.length = 0.0;
  for (size_t i = 1; i < route.waypoints.size(); ++i) {
    route.length += (route.waypoints[i] - route.waypoints[i - 1]).norm();
  }
  return route;
}

Route plan_route(const MapGraph& map, const Vec2& start, const Vec2& goal,
                 const RoutePlanOptions& opts) {
  return route_from_legs(map, plan_legs(map, start, goal, opts), opts.spacing);
}

size_t nearest_waypoint(const Route& route, const Vec2& p, std::optional<size_t> hint) {
  if (route.waypoints.empty()) throw ValidationError("route: empty waypoint list");
  size_t lo = 0, hi = route.waypoints.size();
  if (hint) {
    lo = *hint > 8 ? *hint - 8 : 0;
    hi = std::min(route.waypoints.size(), *hint + 40);
  }
  size_t best = lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = lo; i < hi; ++i) {
    const double d = (route.waypoints[i] - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

double route_progress(const Route& route, const Vec2& p, std::optional<size_t> hint) {
  const auto& w = route.waypoints;
  if (w.size() < 2) return 0.0;
  const size_t i = nearest_waypoint(route, p, hint);
  const double step = route.length / static_cast<double>(w.size() - 1);
  double best_s = step * static_cast<double>(i);
  double best_d = (w[i] - p).squaredNorm();
  for (size_t a : {i > 0 ? i - 1 : i, i}) {
    if (a + 1 >= w.size()) continue;
    const Vec2 ab = w[a + 1] - w[a];
    const double t = std::clamp((p - w[a]).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const double d = (w[a] + t * ab - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_s = step * (static_cast<double>(a) + t);
    }
  }
  return best_s;
}

std::vector<Vec2> upcoming_waypoints(const Route& route, const VehicleState& pose,
                                     int k, std::optional<size_t> hint) {
  if (route.waypoints.empty()) throw ValidationError("upcoming_waypoints: empty route");
  if (k < 1) throw ValidationError("upcoming_waypoints: k must be >= 1");
  const auto& w = route.waypoints;
  size_t i = nearest_waypoint(route, pose.position, hint);
  if (w.size() == 1) return std::vector<Vec2>(static_cast<size_t>(k), Frame2D{pose.position, pose.heading}.to_local(w[0]));
  // Skip the nearest waypoint unless it still lies ahead along the route.
  const Vec2 tangent = i + 1 < w.size() ? Vec2(w[i + 1] - w[i]) : Vec2(w[i] - w[i - 1]);
  if ((w[i] - pose.position).dot(tangent) <= 0.0) ++i;
  const Frame2D frame{pose.position, pose.heading};
  std::vector<Vec2> out;
  out.reserve(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    const size_t idx = std::min(i + static_cast<size_t>(j), w.size() - 1);
    out.push_back(frame.to_local(w[idx]));
  }
  return out;
}

}  // namespace advedit::world
