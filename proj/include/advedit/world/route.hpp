#pragma once

#include <optional>
#include <vector>

#include "advedit/world/map.hpp"
#include "advedit/world/vehicle.hpp"

namespace advedit::world {

class NoRouteError : public Error {
 public:
  using Error::Error;
};

struct Route {
  std::vector<Vec2> waypoints;
  double length = 0.0;
  double spacing = 1.0;       // nominal spacing requested at planning time
  std::vector<int> lane_ids;  // lanes traversed, in order

  bool empty() const { return waypoints.empty(); }
};

struct RoutePlanOptions {
  double spacing = 1.0;
  /// Longitudinal distance over which a lane change is drawn.
  double lane_change_length = 10.0;
};

/// One leg of a lane-graph path: travel along `lane_id` from `s_from` to
/// `s_to`. Consecutive legs on different lanes are joined by a straight
/// connector (successor junction or lane change).
struct RouteLeg {
  int lane_id = 0;
  double s_from = 0.0;
  double s_to = 0.0;
};

/// A* over (lane, entry arc position) states with successor and
/// same-direction lane-change transitions and a Euclidean heuristic.
/// Throws NoRouteError when the goal is unreachable or either endpoint is
/// off the drivable area.
Route plan_route(const MapGraph& map, const Vec2& start, const Vec2& goal,
                 const RoutePlanOptions& opts = {});

/// Geometric cost of a leg sequence (sum of lane arcs plus connectors).
double path_cost(const MapGraph& map, const std::vector<RouteLeg>& legs);

/// Lane-graph path found by the planner (exposed for oracle comparison).
std::vector<RouteLeg> plan_legs(const MapGraph& map, const Vec2& start,
                                const Vec2& goal, const RoutePlanOptions& opts = {});

/// Resamples a polyline at uniform spacing close to `spacing`.
std::vector<Vec2> resample_uniform(const std::vector<Vec2>& pts, double spacing);

/// Lane-following route from a vehicle's current position, choosing among
/// successors with `choose(successor_count)`; used by autopilot traffic.
template <typename Chooser>
Route follow_lanes(const MapGraph& map, int lane_id, double s0, double max_length,
                   Chooser&& choose, double spacing = 1.0);

/// Index of the route waypoint closest to `p`. With a hint, only a window
/// around the hint is searched.
size_t nearest_waypoint(const Route& route, const Vec2& p,
                        std::optional<size_t> hint = std::nullopt);

/// Arc position of `p` projected on the route polyline.
double route_progress(const Route& route, const Vec2& p,
                      std::optional<size_t> hint = std::nullopt);

/// The next `k` route waypoints ahead of `pose`, in the vehicle frame
/// (x forward, y right). Padded by repeating the final waypoint.
std::vector<Vec2> upcoming_waypoints(const Route& route, const VehicleState& pose,
                                     int k, std::optional<size_t> hint = std::nullopt);

// -- template implementation --

Route route_from_legs(const MapGraph& map, const std::vector<RouteLeg>& legs,
                      double spacing);

template <typename Chooser>
Route follow_lanes(const MapGraph& map, int lane_id, double s0, double max_length,
                   Chooser&& choose, double spacing) {
  std::vector<RouteLeg> legs;
  double remaining = max_length;
  int current = lane_id;
  double s = std::max(0.0, s0);
  for (int guard = 0; guard < 64 && remaining > 0.0; ++guard) {
    const Lane& lane = map.lane(current);
    const double s_end = std::min(lane.length(), s + remaining);
    if (s_end > s) legs.push_back({current, s, s_end});
    remaining -= s_end - s;
    if (lane.successors.empty() || remaining <= 0.0) break;
    const int pick = choose(static_cast<int>(lane.successors.size()));
    current = lane.successors[static_cast<size_t>(pick)];
    s = 0.0;
  }
  if (legs.empty()) {
    const Lane& lane = map.lane(lane_id);
    legs.push_back({lane_id, std::max(0.0, lane.length() - 1.0), lane.length()});
  }
  return route_from_legs(map, legs, spacing);
}

}  // namespace advedit::world
