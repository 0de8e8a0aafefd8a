#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/policy/policy.hpp"
#include "advedit/reward/reward.hpp"
#include "advedit/trainer/adversary.hpp"

namespace advedit::trainer {

enum class ScenarioKind { Normal, Challenging };
std::string kind_name(ScenarioKind k);
ScenarioKind kind_from_name(const std::string& s);

struct EnvConfig {
  world::WorldConfig world;
  int num_vehicles = 20;
  int step_cap = 1000;
  double route_min_length = 100.0;  // m
  double route_max_length = 400.0;  // m
  double route_spacing = 2.0;       // m between route waypoints
  double goal_tolerance = 3.0;      // m
  double cruise_min = 5.0;          // m/s, autopilot cruise speed range
  double cruise_max = 9.0;
  double ego_start_speed = 0.0;
  double spawn_gap = 10.0;      // m, minimum centre distance between spawns
  double ego_clearance = 12.0;  // m, minimum spawn distance from the ego
  double action_smoothing = 0.75;
  reward::RewardWeights reward;
  policy::ObservationParams observation;
  PipelineParams pipeline;

  void validate() const;
};

nlohmann::json to_json(const EnvConfig& c);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
EnvConfig env_config_from_json(const nlohmann::json& j);

/// Freshly spawned episode: the ego on a planned route plus autopilot traffic.
/// The first agent is placed inside the hazardous zone so that a challenging
/// episode has an adversary candidate from the first step.
struct EpisodeWorld {
  std::unique_ptr<world::TrafficWorld> world;
  world::Route ego_route;
};

EpisodeWorld spawn_episode(const std::shared_ptr<const world::MapGraph>& map,
                           const EnvConfig& cfg, uint64_t seed);

struct AdversaryEvent {
  long step = 0;
  int risky_id = 0;
  std::string maneuver;
  std::string position_tag;
  std::vector<Vec2> t_final;
};

struct EpisodeResult {
  long index = 0;
  ScenarioKind kind = ScenarioKind::Normal;
  int steps = 0;
  double route_completion = 0.0;  // [0, 1]
  double distance = 0.0;          // m
  int collisions = 0;
  std::vector<double> collision_speeds;  // km/h, ego speed at impact
  double mean_speed = 0.0;               // m/s
  double total_return = 0.0;
  std::vector<double> rewards;
  reward::Termination termination = reward::Termination::None;  // None: step cap
  bool downgraded = false;
  std::string downgrade_reason;
  std::vector<AdversaryEvent> adversary;
};

nlohmann::json to_json(const EpisodeResult& r);

struct EpisodeSpec {
  long index = 0;
  ScenarioKind kind = ScenarioKind::Normal;
  uint64_t seed = 0;
  int max_steps = 1000;
};

using PolicyFn = std::function<policy::Action(const Eigen::VectorXd& obs)>;
using TransitionFn =
    std::function<void(const Eigen::VectorXd& obs, const policy::Action& raw, double reward,
                       const Eigen::VectorXd& next_obs, bool done)>;
/// Called after every step with the world and that step's reward terms.
using StepObserver =
    std::function<void(const world::TrafficWorld& world, const reward::RewardBreakdown& reward)>;

/// Plays one episode. `ed` may be null for Normal episodes. Challenging
/// episodes edit the nearest in-zone agent at the first opportunity and again
/// whenever the previous edit has been played out and the zone has emptied
/// and refilled. Pipeline failures other than classification misses
/// downgrade the episode to Normal behaviour and are recorded.
EpisodeResult run_episode(const std::shared_ptr<const world::MapGraph>& map,
                          const EnvConfig& cfg, const EpisodeSpec& spec, const PolicyFn& policy,
                          editor::Editor* ed, const TransitionFn& on_transition = {},
                          const StepObserver& observer = {});

/// Map described by a preset (`{"preset": "straight"|"four_way"|"t_junction", ...}`),
/// an inline `map/v1` document, or `{"file": path}`.
std::shared_ptr<const world::MapGraph> load_map(const nlohmann::json& source);

}  // namespace advedit::trainer
