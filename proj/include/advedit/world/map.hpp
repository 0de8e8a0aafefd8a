#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/common.hpp"

namespace advedit::world {

enum class LaneDirection { Forward, Backward };

struct LaneProjection {
  double s = 0.0;        // arc position of the foot point, may lie outside [0, length]
  double lateral = 0.0;  // signed, right of the lane direction is positive
  double distance = 0.0;
  double heading = 0.0;  // lane heading at the foot point
  bool within_extent = true;
};

struct Lane {
  int id = 0;
  std::vector<Vec2> centerline;
  std::vector<double> arc;  // cumulative arc length, arc[0] == 0
  double width = 3.5;
  LaneDirection direction = LaneDirection::Forward;
  std::optional<int> left;
  std::optional<int> right;
  std::vector<int> successors;

  double length() const { return arc.empty() ? 0.0 : arc.back(); }
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  LaneProjection project(const Vec2& p) const;
};

struct Polygon {
  std::vector<Vec2> vertices;

  bool contains(const Vec2& p) const;
  Vec2 centroid() const;
  bool is_simple() const;
};

struct LaneMatch {
  int lane_id = -1;
  LaneProjection proj;
};

class MapGraph {
 public:
  std::vector<Lane> lanes;
  std::vector<Polygon> intersections;

  /// Rebuilds the id index. Call after mutating `lanes`.
  void reindex();
  bool has_lane(int id) const { return index_.count(id) > 0; }
  const Lane& lane(int id) const;

  bool in_intersection(const Vec2& p) const;
  /// Inside some lane corridor or intersection polygon.
  bool on_drivable(const Vec2& p) const;

  /// Lane whose corridor contains `p`, preferring lanes aligned with
  /// `heading`, then the smallest lateral offset. nullopt when off-road.
  std::optional<LaneMatch> localize(const Vec2& p, double heading) const;
  /// Nearest lane aligned with `heading` (|error| < 90 deg) regardless of
  /// corridor containment; falls back to the nearest lane of any direction.
  std::optional<LaneMatch> nearest_aligned(const Vec2& p, double heading) const;

  /// Throws ValidationError on any broken invariant.
  void validate() const;

 private:
  std::map<int, size_t> index_;
};

/// Parses and validates a `map/v1` document. Lane geometry may be given as
/// explicit `points` or as `start` + `heading_deg` + `segments`, where each
/// segment is `{"line": length}` or `{"arc": {"radius": r, "angle_deg": a}}`
/// (positive angle turns right). Errors carry a JSON-pointer location.
MapGraph build_map(const nlohmann::json& spec);
MapGraph build_map_from_text(const std::string& text);

/// Serializes a built map as `map/v1` with explicit centerline points.
nlohmann::json map_to_json(const MapGraph& map);

// Procedural map descriptions.
nlohmann::json straight_road_spec(double length, int same_dir_lanes,
                                  double width, int opposite_lanes = 0);
/// Four-way junction centred at the origin, one lane per direction per arm.
nlohmann::json four_way_spec(double arm_length, double width);
/// T junction: west and east arms plus a stem on the -y side.
nlohmann::json t_junction_spec(double arm_length, double width);

}  // namespace advedit::world
