#include <cstdio>
#include <sstream>

#include "advedit/editor/editor.hpp"

namespace advedit::editor {

namespace {

std::string fmt3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f", round3(v) == 0.0 ? 0.0 : round3(v));
  return buf;
}

std::string point(const Vec2& p) { return "[" + fmt3(p.x()) + ", " + fmt3(p.y()) + "]"; }

std::string point_list(const std::vector<Vec2>& pts) {
  std::string s = "[";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) s += ", ";
    s += point(pts[i]);
  }
  return s + "]";
}

std::string rule_for(const std::string& position_tag, scene::HazardousManeuver m) {
  if (position_tag == "same_ahead") return "The risky agent drives ahead of the ego in the same lane, so it must brake suddenly.";
  if (position_tag == "same_behind") return "The risky agent follows the ego in the same lane, so it must overtake aggressively and merge back in front of the ego.";
  if (position_tag == "adjacent_left" || position_tag == "adjacent_right") {
    return "The risky agent drives in an adjacent lane (" + position_tag +
           "), so it must cut into the ego's lane close in front of the ego.";
  }
  if (position_tag == "opposite") {
    return "The risky agent drives in the opposite direction, so it must perform a u-turn or a lane-encroachment toward the ego. The requested maneuver is " +
           scene::maneuver_tag(m) + ".";
  }
  return "Perform the maneuver '" + scene::maneuver_tag(m) + "'.";
}

}  // namespace

std::string build_prompt(const EditorRequest& req, PromptMode mode) {
  const auto& s = req.scene;
  std::ostringstream out;
  out << "You design safety-critical driving scenarios. ";
  if (mode == PromptMode::Edit) {
    out << "Your task is to edit the future trajectory of one designated risky vehicle so that it "
           "creates a challenging but realistic interaction with the ego vehicle.\n\n";
  } else {
    out << "Your task is to generate, from scratch, the future trajectory of one designated risky "
           "vehicle so that it creates a challenging but realistic interaction with the ego "
           "vehicle.\n\n";
  }
  out << "The attached bird's-eye-view image is centred on the ego vehicle with the ego heading "
         "up. Colours: ego vehicle white, risky agent yellow, neutral vehicles blue, drivable area "
         "gray, lane markings magenta, background black.\n\n";
  out << "BEV scale: " << fmt3(s.bev_scale) << " m/pixel (" << s.bev_width << "x" << s.bev_height
      << " pixels). Simulation FPS: " << fmt3(req.fps) << ". Number of waypoints requested: "
      << req.n << " (one per frame).\n\n";
  out << "All coordinates are [relative_x, relative_y] in metres in the risky agent's current "
         "frame: x points forward along its heading, y points to its right.\n\n";
  out << "Ego vehicle: position " << point(s.ego.position) << ", relative heading "
      << fmt3(s.ego.heading) << " rad, speed " << fmt3(s.ego.speed) << " m/s, past trajectory "
      << point_list(s.ego.past) << ".\n";
  out << "Risky agent: position " << point(s.risky.position) << ", speed " << fmt3(s.risky.speed)
      << " m/s, yaw rate " << fmt3(s.risky.yaw_rate) << " rad/s, past trajectory "
      << point_list(s.risky.past) << ".\n";
  out << "Neutral vehicles:";
  if (s.neutrals.empty()) out << " none";
  for (const auto& v : s.neutrals) {
    out << " " << point(v.position) << " at " << fmt3(v.speed) << " m/s;";
  }
  out << "\nLane width: " << fmt3(s.lane_width) << " m.\n\n";

  if (mode == PromptMode::Edit) {
    out << "Base trajectory of the risky agent (index: [relative_x, relative_y]):\n";
    for (size_t i = 0; i < s.base_trajectory.size(); ++i) {
      out << "  " << (i + 1) << ": " << point(s.base_trajectory[i]) << "\n";
    }
    out << "\n";
  }
  out << "Initial risk_category: " << scene::maneuver_tag(req.maneuver) << " (position "
      << s.position_tag << "). " << rule_for(s.position_tag, req.maneuver) << "\n";
  out << "is_intersection: " << (s.is_intersection_hint ? "true" : "false") << ". "
      << "When the flag is true you may exploit the junction layout and choose among more varied "
         "hazardous paths; when it is false you must follow the rule above.\n\n";
  out << "The trajectory has to be kinematically feasible and smooth, stay on the drivable "
         "area, avoid the neutral vehicles, and come very close to or overlap the ego's future "
         "path.\n\n";
  out << "Reply with exactly one JSON object with these keys: \"risk_level\" (one of \"High\", "
         "\"Medium\", \"Low\"), \"risk_category\" (the maneuver you performed), "
         "\"is_intersection\" (boolean), \"analysis\" (a paragraph explaining your reasoning) and "
         "\"waypoints\" (a list of exactly "
      << req.n << " [relative_x, relative_y] pairs with three decimals).\n";
  return out.str();
}

}  // namespace advedit::editor
