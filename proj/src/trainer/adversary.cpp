#include "advedit/trainer/adversary.hpp"

#include "advedit/trajgen/trajgen.hpp"

namespace advedit::trainer {

trajgen::Trajectory predict_base(const world::VehicleState& v, const world::MapGraph& map, int n,
                                 double dt) {
  return trajgen::fuse_linear(trajgen::ctrv_predict(v, n, dt),
                              trajgen::map_waypoint_traj(v, map, n, dt));
}

std::optional<PipelineResult> run_adversary(const world::WorldState& ws,
                                            const world::VehicleLimits& limits,
                                            editor::Editor& ed, const PipelineParams& p,
                                            Rng& maneuver_rng, uint64_t edit_seed) {
  const auto risky = scene::select_risky_agent(ws, p.zone_radius);
  if (!risky) return std::nullopt;
  return run_adversary_for(ws, *risky, limits, ed, p, maneuver_rng, edit_seed);
}

std::optional<PipelineResult> run_adversary_for(const world::WorldState& ws, int risky_id,
                                                const world::VehicleLimits& limits,
                                                editor::Editor& ed, const PipelineParams& p,
                                                Rng& maneuver_rng, uint64_t edit_seed) {
  if (!ws.map) throw ValidationError("run_adversary: world has no map");
  const auto& map = *ws.map;
  const auto& agent = ws.agents.at(risky_id);
  PipelineResult r;
  r.risky_id = risky_id;
  try {
    r.mode = scene::classify_driving_mode(ws.ego, agent, map);
  } catch (const scene::ClassificationError&) {
    return std::nullopt;
  }
  r.is_intersection = map.in_intersection(agent.position) || map.in_intersection(ws.ego.position);
  r.maneuver = scene::assign_maneuver(r.mode, r.is_intersection, maneuver_rng);

  const double dt = ws.dt;
  const double fps = 1.0 / dt;
  r.t_model = trajgen::ctrv_predict(agent, p.horizon, dt);
  r.t_map = trajgen::map_waypoint_traj(agent, map, p.horizon, dt);
  r.t_base = trajgen::fuse_linear(r.t_model, r.t_map);
  r.scene = scene::encode_scene(ws, risky_id, r.maneuver, r.mode, r.t_base, p.horizon, fps,
                                p.with_bev, p.bev_scale);

  editor::EditorRequest req;
  req.scene = r.scene;
  req.maneuver = r.maneuver;
  req.n = p.horizon;
  req.fps = fps;
  req.seed = edit_seed;
  r.response = ed.edit(req);

  r.t_edit_local = editor::response_trajectory(r.response, fps);
  r.t_edit = trajgen::to_frame(r.t_edit_local, r.scene.agent_frame, trajgen::TrajFrame::World);
  r.t_smoothed = postproc::bspline_smooth(r.t_edit, p.smoothing, p.spline_degree);
  r.t_curve = postproc::sigmoid_fuse(r.t_base, r.t_smoothed, p.sigmoid_m);
  r.rollout = postproc::lqr_track(r.t_curve, agent, dt, p.lqr, limits);
  r.t_final = r.rollout.final_traj;
  return r;
}

}  // namespace advedit::trainer
