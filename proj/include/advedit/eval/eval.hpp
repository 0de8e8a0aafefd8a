#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/trainer/trainer.hpp"

namespace advedit::eval {

struct MetricsReport {
  double rc = 0.0;  // mean route completion, [0, 1]
  double td = 0.0;  // total distance, m
  double cr = 0.0;  // fraction of episodes with a collision
  std::optional<double> cpm;  // collisions per km; unset when td == 0
  double cs = 0.0;  // mean collision speed, km/h (0 without collisions)
  double as = 0.0;  // mean speed, km/h
  long episodes = 0;
  long collisions = 0;
  uint64_t seed = 0;
};

/// Throws ValidationError on an empty list.
MetricsReport aggregate(const std::vector<trainer::EpisodeResult>& results, uint64_t seed = 0);

nlohmann::json to_json(const MetricsReport& m);

struct TrajFeatures {
  double length = 0.0;         // m
  double avg_speed = 0.0;      // m/s
  double max_curvature = 0.0;  // 1/m
  Vec2 endpoint = Vec2::Zero();
  double min_distance = 0.0;   // m, to the time-aligned ego path
  double max_accel = 0.0;      // m/s^2
  double max_steer = 0.0;      // normalized steering, [0, 1]
};

/// Features of `t` against the time-aligned `ego` path. `start` prepends the
/// vehicle's current position so that N points span N steps. `endpoint` is
/// reported in `frame` (world frame when omitted). `controls`, when given,
/// supplies the commanded steering; otherwise a curvature-based proxy is used.
TrajFeatures extract_features(const trajgen::Trajectory& t, const trajgen::Trajectory& ego,
                              const world::VehicleLimits& limits,
                              const std::optional<Vec2>& start = std::nullopt,
                              const std::optional<Frame2D>& frame = std::nullopt,
                              const std::vector<postproc::ControlStep>* controls = nullptr);

/// Evaluation rollouts: `n` episodes of one kind with per-episode seeds
/// derived from `seed`.
std::vector<trainer::EpisodeResult> run_evaluation(const std::shared_ptr<const world::MapGraph>& map,
                                                   const trainer::EnvConfig& env,
                                                   const trainer::PolicyFn& policy,
                                                   trainer::ScenarioKind kind, int n,
                                                   uint64_t seed, editor::Editor* ed);

/// Uniform random actions from a seeded stream.
trainer::PolicyFn random_policy(uint64_t seed);

/// Spawns an episode and drives every vehicle, ego included, under the
/// autopilot for `steps` steps so that histories and yaw rates are populated.
trainer::EpisodeWorld warm_up(const std::shared_ptr<const world::MapGraph>& map,
                              const trainer::EnvConfig& env, uint64_t seed, int steps);

enum class Variant { Base, Edited, Generated };
std::string variant_name(Variant v);

struct FeatureRow {
  int scene = 0;
  Variant variant = Variant::Base;
  std::string maneuver;
  TrajFeatures f;
};

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

struct VariantSummary {
  Quartiles length, avg_speed, max_curvature, min_distance, max_accel, max_steer;
  double endpoint_spread = 0.0;  // trace of the endpoint covariance
};

/// Straight road with two forward lanes and one oncoming lane, so
/// that every driving mode occurs among the sampled scenes.
nlohmann::json default_study_map();

struct DiversityConfig {
  int scenes = 100;
  uint64_t seed = 0;
  int warmup_steps = 30;
  int max_attempts_per_scene = 20;
  trainer::EnvConfig env;
  nlohmann::json map = default_study_map();
};

struct DiversityResult {
  std::vector<FeatureRow> rows;  // scene-major, variants in Base, Edited, Generated order
  VariantSummary base, edited, generated;
  bool min_distance_closer = false;   // median(edited) < median(base)
  bool endpoints_more_spread = false; // spread(edited) > spread(base)
  double max_paired_delta = 0.0;      // max |edited - base| over all features
};

/// Seeded scenes warmed up under autopilot; each scene's risky agent goes
/// through the pipeline three times: the identity editor (base), `edited`
/// and `generated`. Endpoints are taken in the agent's starting frame.
DiversityResult diversity_study(const DiversityConfig& cfg, editor::Editor& edited,
                                editor::Editor& generated);

Quartiles quartiles(std::vector<double> v);

struct LabeledMetrics {
  std::string label;
  MetricsReport report;
};

/// metrics.csv (RC, TD, CR, CPM, CS, AS per row plus a summed row when
/// there are several), features.csv and summary.json (`metrics/v1`).
void emit_report(const std::vector<LabeledMetrics>& metrics, const std::vector<FeatureRow>& features,
                 const std::string& dir, const nlohmann::json& extra = nlohmann::json::object());

std::string metrics_csv(const std::vector<LabeledMetrics>& metrics);
std::string features_csv(const std::vector<FeatureRow>& rows);

}  // namespace advedit::eval
