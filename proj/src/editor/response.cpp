#include <cmath>

#include "advedit/editor/editor.hpp"
#include "advedit/trajgen/trajgen.hpp"

namespace advedit::editor {

using nlohmann::json;

std::string risk_level_name(RiskLevel r) {
  switch (r) {
    case RiskLevel::High: return "High";
    case RiskLevel::Medium: return "Medium";
    case RiskLevel::Low: return "Low";
  }
  return "Low";
}

RiskLevel risk_level_from_name(const std::string& s) {
  if (s == "High") return RiskLevel::High;
  if (s == "Medium") return RiskLevel::Medium;
  if (s == "Low") return RiskLevel::Low;
  throw ResponseError(ResponseError::Kind::BadType, "risk_level must be High, Medium or Low, got '" + s + "'");
}

void EditorRequest::validate() const {
  if (n < 2) throw ValidationError("editor request: horizon must be >= 2");
  if (static_cast<int>(scene.base_trajectory.size()) != n) {
    throw ValidationError("editor request: base trajectory has " +
                          std::to_string(scene.base_trajectory.size()) + " points, expected " +
                          std::to_string(n));
  }
  if (!(fps > 0.0)) throw ValidationError("editor request: fps must be positive");
  if (!scene.risk_category.empty() && scene.risk_category != scene::maneuver_tag(maneuver)) {
    throw ValidationError("editor request: scene category '" + scene.risk_category +
                          "' does not match maneuver '" + scene::maneuver_tag(maneuver) + "'");
  }
}

trajgen::Trajectory response_trajectory(const EditorResponse& r, double fps) {
  trajgen::Trajectory t;
  t.stage = trajgen::Stage::Edit;
  t.frame = trajgen::TrajFrame::AgentRelative;
  t.dt = 1.0 / fps;
  t.points = r.waypoints;
  return t;
}

namespace {

// Copy of text[begin, end] with raw control characters inside string
// literals folded into a single space (line-wrapped model output).
std::string sanitize(const std::string& text, size_t begin, size_t end) {
  std::string out;
  out.reserve(end - begin + 1);
  bool in_str = false, esc = false;
  for (size_t i = begin; i <= end; ++i) {
    const char c = text[i];
    if (in_str) {
      if (esc) {
        esc = false;
      } else if (c == '\\') {
        esc = true;
      } else if (c == '"') {
        in_str = false;
      } else if (static_cast<unsigned char>(c) < 0x20) {
        while (i + 1 <= end && (text[i + 1] == ' ' || text[i + 1] == '\t' ||
                                text[i + 1] == '\n' || text[i + 1] == '\r')) {
          ++i;
        }
        out.push_back(' ');
        continue;
      }
    } else if (c == '"') {
      in_str = true;
    }
    out.push_back(c);
  }
  return out;
}

// Index of the brace closing the object opened at `start`, or npos.
size_t match_brace(const std::string& text, size_t start) {
  int depth = 0;
  bool in_str = false, esc = false;
  for (size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_str) {
      if (esc) esc = false;
      else if (c == '\\') esc = true;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::string::npos;
}

std::optional<json> first_object(const std::string& text) {
  for (size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    const size_t end = match_brace(text, start);
    if (end == std::string::npos) continue;
    json j = json::parse(sanitize(text, start, end), nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  return std::nullopt;
}

const json& field(const json& obj, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end()) {
    throw ResponseError(ResponseError::Kind::MissingField, std::string("response: missing '") + name + "'");
  }
  return *it;
}

}  // namespace

EditorResponse parse_response(const std::string& text, int expected_n) {
  auto doc = first_object(text);
  if (!doc) throw ResponseError(ResponseError::Kind::Malformed, "response: no JSON object found");
  json obj = *doc;
  if (obj.contains("response") && obj["response"].is_object()) obj = obj["response"];

  using K = ResponseError::Kind;
  EditorResponse r;
  const json& level = field(obj, "risk_level");
  if (!level.is_string()) throw ResponseError(K::BadType, "response: risk_level must be a string");
  r.risk_level = risk_level_from_name(level.get<std::string>());
  const json& cat = field(obj, "risk_category");
  if (!cat.is_string()) throw ResponseError(K::BadType, "response: risk_category must be a string");
  r.risk_category = cat.get<std::string>();
  const json& inter = field(obj, "is_intersection");
  if (!inter.is_boolean()) throw ResponseError(K::BadType, "response: is_intersection must be a boolean");
  r.is_intersection = inter.get<bool>();
  const json& analysis = field(obj, "analysis");
  if (!analysis.is_string()) throw ResponseError(K::BadType, "response: analysis must be a string");
  r.analysis = analysis.get<std::string>();

  const json& wps = field(obj, "waypoints");
  if (!wps.is_array()) throw ResponseError(K::BadType, "response: waypoints must be an array");
  if (static_cast<int>(wps.size()) != expected_n) {
    throw ResponseError(K::CountMismatch, "response: expected " + std::to_string(expected_n) +
                                              " waypoints, got " + std::to_string(wps.size()));
  }
  r.waypoints.reserve(wps.size());
  for (size_t i = 0; i < wps.size(); ++i) {
    const json& p = wps[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ResponseError(K::BadType, "response: waypoint " + std::to_string(i) + " is not [x, y]");
    }
    const double x = p[0].get<double>(), y = p[1].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw ResponseError(K::NonFinite, "response: waypoint " + std::to_string(i) + " is not finite");
    }
    r.waypoints.emplace_back(x, y);
  }
  return r;
}

json response_to_json(const EditorResponse& r) {
  json wps = json::array();
  for (const auto& p : r.waypoints) wps.push_back({round3(p.x()), round3(p.y())});
  return {{"risk_level", risk_level_name(r.risk_level)},
          {"risk_category", r.risk_category},
          {"is_intersection", r.is_intersection},
          {"analysis", r.analysis},
          {"waypoints", wps}};
}

EditorResponse fallback_response(const EditorRequest& req) {
  EditorResponse r;
  r.risk_level = RiskLevel::Low;
  r.risk_category = scene::maneuver_tag(req.maneuver);
  r.is_intersection = req.scene.is_intersection_hint;
  r.analysis = "fallback: base trajectory";
  r.waypoints = req.scene.base_trajectory;
  return r;
}

EditorResponse ctrv_response(const EditorRequest& req) {
  world::VehicleState s;
  s.speed = req.scene.risky.speed;
  s.yaw_rate = req.scene.risky.yaw_rate;
  const auto t = trajgen::ctrv_predict(s, req.n, 1.0 / req.fps);
  EditorResponse r;
  r.risk_level = RiskLevel::Low;
  r.risk_category = scene::maneuver_tag(req.maneuver);
  r.is_intersection = req.scene.is_intersection_hint;
  r.analysis = "fallback: constant turn rate prediction";
  r.waypoints = t.points;
  return r;
}

EditorResponse IdentityEditor::edit(const EditorRequest& req) {
  ++calls_;
  req.validate();
  EditorResponse r = fallback_response(req);
  r.analysis = "identity: base trajectory";
  return r;
}

EditorResponse OfflineGenerateEditor::edit(const EditorRequest& req) {
  ++calls_;
  req.validate();
  return ctrv_response(req);
}

}  // namespace advedit::editor
