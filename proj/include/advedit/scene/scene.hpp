#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/trajgen/trajgen.hpp"
#include "advedit/world/world.hpp"

namespace advedit::scene {

class ClassificationError : public Error {
 public:
  using Error::Error;
};

enum class Direction { Same, Opposite };
enum class LaneRelation { SameLane, DifferentLane, NotApplicable };
enum class Longitudinal { Front, Rear, NotApplicable };
enum class Horizontal { Left, Right, NotApplicable };

struct DrivingMode {
  Direction direction = Direction::Same;
  LaneRelation lane_relation = LaneRelation::NotApplicable;
  Longitudinal longitudinal = Longitudinal::NotApplicable;
  Horizontal horizontal = Horizontal::NotApplicable;

  bool operator==(const DrivingMode&) const = default;
  /// True when the NotApplicable cells match the maneuver table layout.
  bool valid() const;
};

enum class HazardousManeuver { SuddenBrake, Overtake, CutInLeft, CutInRight, LaneEncroachment, UTurn };

/// "sudden-brake", "overtake", "cut-in-left", "cut-in-right",
/// "lane-encroachment", "u-turn".
std::string maneuver_tag(HazardousManeuver m);
HazardousManeuver maneuver_from_tag(const std::string& tag);

/// "same_ahead", "same_behind", "adjacent_left", "adjacent_right", "opposite".
std::string position_tag(const DrivingMode& mode);

constexpr double kDefaultZoneRadius = 30.0;

/// Nearest agent whose centre lies within `zone_radius` of the ego, ties to
/// the lowest id.
std::optional<int> select_risky_agent(const world::WorldState& world,
                                      double zone_radius = kDefaultZoneRadius);

/// Throws ClassificationError when either vehicle cannot be matched to a lane.
DrivingMode classify_driving_mode(const world::VehicleState& ego,
                                  const world::VehicleState& agent,
                                  const world::MapGraph& map);

HazardousManeuver assign_maneuver(const DrivingMode& mode, bool is_intersection, Rng& rng);

// ---------------------------------------------------------------- BEV raster

enum class BevClass : uint8_t { Background, Drivable, Marking, Neutral, Risky, Ego };

struct Rgb {
  uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

Rgb palette(BevClass c);

struct BevRaster {
  int width = 80;
  int height = 120;
  double scale = 0.25;  // m per pixel
  std::vector<BevClass> cells;  // row-major, row 0 at the top (ahead of ego)

  BevClass at(int row, int col) const {
    return cells[static_cast<size_t>(row) * static_cast<size_t>(width) + static_cast<size_t>(col)];
  }
  /// Pixel containing an ego-frame point (x forward, y right); nullopt when
  /// the point falls outside the raster.
  std::optional<std::pair<int, int>> pixel_of(const Vec2& ego_local) const;
  std::vector<uint8_t> to_png() const;
  void write_png(const std::string& path) const;
};

BevRaster render_bev(const world::WorldState& world, double scale = 0.25, int width = 80,
                     int height = 120);

// ----------------------------------------------------------- scene message

struct VehicleSummary {
  int id = 0;
  Vec2 position{0.0, 0.0};  // risky-agent frame
  double heading = 0.0;     // relative to the risky agent's heading
  double speed = 0.0;
  double yaw_rate = 0.0;
  std::vector<Vec2> past;   // oldest first, risky-agent frame
};

struct SceneMessage {
  double bev_scale = 0.25;
  int bev_width = 80;
  int bev_height = 120;
  double fps = 15.0;
  VehicleSummary ego;
  VehicleSummary risky;
  std::vector<VehicleSummary> neutrals;
  std::string risk_category;  // maneuver tag
  std::string position_tag;
  bool is_intersection_hint = false;
  double lane_width = 3.5;
  int horizon = trajgen::kDefaultHorizon;
  std::vector<Vec2> base_trajectory;  // risky-agent frame, length == horizon
  std::optional<BevRaster> bev;       // not serialized

  /// Risky agent's world pose at encoding time, used to map edits back.
  Frame2D agent_frame;
};

SceneMessage encode_scene(const world::WorldState& world, int risky_id,
                          HazardousManeuver maneuver, const DrivingMode& mode,
                          const trajgen::Trajectory& base, int n, double fps,
                          bool with_bev = true, double bev_scale = 0.25);

/// `scene/v1` document, coordinates rounded to 3 decimals.
nlohmann::json scene_to_json(const SceneMessage& msg);
SceneMessage scene_from_json(const nlohmann::json& j);

}  // namespace advedit::scene

