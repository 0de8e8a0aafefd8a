#pragma once

#include <optional>

#include "advedit/editor/editor.hpp"
#include "advedit/postproc/postproc.hpp"
#include "advedit/scene/scene.hpp"

namespace advedit::trainer {

struct PipelineParams {
  int horizon = trajgen::kDefaultHorizon;
  double zone_radius = scene::kDefaultZoneRadius;
  double smoothing = postproc::kDefaultSmoothing;
  int spline_degree = 3;
  double sigmoid_m = postproc::kDefaultSigmoidM;
  bool with_bev = true;
  double bev_scale = 0.25;
  postproc::LqrParams lqr;
};

/// Every stage of one adversarial edit. Trajectories are in the world frame
/// except `t_edit_local`, which is the editor's agent-frame output.
struct PipelineResult {
  int risky_id = 0;
  scene::DrivingMode mode;
  scene::HazardousManeuver maneuver = scene::HazardousManeuver::SuddenBrake;
  bool is_intersection = false;
  scene::SceneMessage scene;
  editor::EditorResponse response;
  trajgen::Trajectory t_model, t_map, t_base, t_edit_local, t_edit, t_smoothed, t_curve, t_final;
  postproc::LqrResult rollout;
};

/// Runs scene -> trajgen -> editor -> postproc for the agent nearest the ego.
/// Returns nullopt when no agent is inside the zone or either vehicle cannot
/// be classified (off-road). `maneuver_rng` resolves the Opposite-mode choice;
/// `edit_seed` is forwarded to the editor request.
std::optional<PipelineResult> run_adversary(const world::WorldState& ws,
                                            const world::VehicleLimits& limits,
                                            editor::Editor& ed, const PipelineParams& p,
                                            Rng& maneuver_rng, uint64_t edit_seed);

/// Same pipeline for a chosen agent.
std::optional<PipelineResult> run_adversary_for(const world::WorldState& ws, int risky_id,
                                                const world::VehicleLimits& limits,
                                                editor::Editor& ed, const PipelineParams& p,
                                                Rng& maneuver_rng, uint64_t edit_seed);

/// T_base of an arbitrary vehicle (CTRV and lane prediction fused).
trajgen::Trajectory predict_base(const world::VehicleState& v, const world::MapGraph& map, int n,
                                 double dt);

}  // namespace advedit::trainer
