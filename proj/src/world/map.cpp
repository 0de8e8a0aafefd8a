#include "advedit/world/map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace advedit::world {

using nlohmann::json;

Vec2 Lane::point_at(double s) const {
  const size_t n = centerline.size();
  if (s <= 0.0) {
    const Vec2 d = (centerline[1] - centerline[0]).normalized();
    return centerline[0] + d * s;
  }
  if (s >= arc.back()) {
    const Vec2 d = (centerline[n - 1] - centerline[n - 2]).normalized();
    return centerline[n - 1] + d * (s - arc.back());
  }
  const auto it = std::upper_bound(arc.begin(), arc.end(), s);
  const size_t i = static_cast<size_t>(it - arc.begin()) - 1;
  const double t = (s - arc[i]) / (arc[i + 1] - arc[i]);
  return centerline[i] + t * (centerline[i + 1] - centerline[i]);
}

double Lane::heading_at(double s) const {
  const size_t n = centerline.size();
  size_t i = 0;
  if (s >= arc.back()) {
    i = n - 2;
  } else if (s > 0.0) {
    const auto it = std::upper_bound(arc.begin(), arc.end(), s);
    i = static_cast<size_t>(it - arc.begin()) - 1;
  }
  const Vec2 d = centerline[i + 1] - centerline[i];
  return std::atan2(d.y(), d.x());
}

LaneProjection Lane::project(const Vec2& p) const {
  const size_t n = centerline.size();
  double best = std::numeric_limits<double>::infinity();
  size_t best_i = 0;
  double best_t = 0.0;
  for (size_t i = 0; i + 1 < n; ++i) {
    const Vec2 a = centerline[i];
    const Vec2 ab = centerline[i + 1] - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const double d = (a + t * ab - p).squaredNorm();
    if (d < best) {
      best = d;
      best_i = i;
      best_t = t;
    }
  }
  const Vec2 a = centerline[best_i];
  const Vec2 ab = centerline[best_i + 1] - a;
  const double seg_len = ab.norm();
  const double heading = std::atan2(ab.y(), ab.x());
  const double t_raw = (p - a).dot(ab) / ab.squaredNorm();

  LaneProjection out;
  out.heading = heading;
  out.lateral = (p - a).dot(right_normal(heading));
  if ((best_i == 0 && t_raw < 0.0) || (best_i + 2 == n && t_raw > 1.0)) {
    out.within_extent = false;
    out.s = arc[best_i] + t_raw * seg_len;
    out.distance = std::sqrt(best);
  } else {
    out.s = arc[best_i] + best_t * seg_len;
    out.distance = std::sqrt(best);
    // Keep the sign of the perpendicular offset at convex polyline corners.
    if (out.distance > std::abs(out.lateral)) {
      out.lateral = out.lateral >= 0.0 ? out.distance : -out.distance;
    }
  }
  return out;
}

bool Polygon::contains(const Vec2& p) const {
  bool inside = false;
  const size_t n = vertices.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

Vec2 Polygon::centroid() const {
  Vec2 c = Vec2::Zero();
  for (const auto& v : vertices) c += v;
  return c / static_cast<double>(vertices.size());
}

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1,
                        const Vec2& q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 &&
         d2 != 0 && d3 != 0 && d4 != 0;
}

}  // namespace

bool Polygon::is_simple() const {
  const size_t n = vertices.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(vertices[i], vertices[(i + 1) % n], vertices[j],
                             vertices[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

void MapGraph::reindex() {
  index_.clear();
  for (size_t i = 0; i < lanes.size(); ++i) index_[lanes[i].id] = i;
}

const Lane& MapGraph::lane(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    throw ValidationError("map: unknown lane id " + std::to_string(id));
  }
  return lanes[it->second];
}

bool MapGraph::in_intersection(const Vec2& p) const {
  return std::any_of(intersections.begin(), intersections.end(),
                     [&](const Polygon& poly) { return poly.contains(p); });
}

bool MapGraph::on_drivable(const Vec2& p) const {
  for (const auto& lane : lanes) {
    const auto pr = lane.project(p);
    if (pr.within_extent && std::abs(pr.lateral) <= 0.5 * lane.width) return true;
  }
  return in_intersection(p);
}

std::optional<LaneMatch> MapGraph::localize(const Vec2& p, double heading) const {
  std::optional<LaneMatch> best;
  bool best_aligned = false;
  for (const auto& lane : lanes) {
    const auto pr = lane.project(p);
    if (!pr.within_extent || std::abs(pr.lateral) > 0.5 * lane.width) continue;
    const bool aligned = std::abs(wrap_angle(heading - pr.heading)) < 0.5 * kPi;
    const bool better =
        !best || (aligned && !best_aligned) ||
        (aligned == best_aligned && std::abs(pr.lateral) < std::abs(best->proj.lateral));
    if (better) {
      best = LaneMatch{lane.id, pr};
      best_aligned = aligned;
    }
  }
  return best;
}

std::optional<LaneMatch> MapGraph::nearest_aligned(const Vec2& p, double heading) const {
  std::optional<LaneMatch> aligned_best, any_best;
  for (const auto& lane : lanes) {
    const auto pr = lane.project(p);
    const bool aligned = std::abs(wrap_angle(heading - pr.heading)) < 0.5 * kPi;
    if (aligned && (!aligned_best || pr.distance < aligned_best->proj.distance)) {
      aligned_best = LaneMatch{lane.id, pr};
    }
    if (!any_best || pr.distance < any_best->proj.distance) {
      any_best = LaneMatch{lane.id, pr};
    }
  }
  return aligned_best ? aligned_best : any_best;
}

void MapGraph::validate() const {
  std::set<int> ids;
  for (const auto& lane : lanes) {
    const std::string where = "lane " + std::to_string(lane.id);
    if (!ids.insert(lane.id).second) throw ValidationError(where + ": duplicate id");
    if (lane.centerline.size() < 2) {
      throw ValidationError(where + ": centerline needs at least 2 points");
    }
    if (lane.arc.size() != lane.centerline.size()) {
      throw ValidationError(where + ": arc table out of sync");
    }
    for (size_t i = 1; i < lane.arc.size(); ++i) {
      if (!(lane.arc[i] > lane.arc[i - 1])) {
        throw ValidationError(where + ": arc length not strictly increasing at point " +
                              std::to_string(i));
      }
    }
    if (!(lane.width > 0.0)) throw ValidationError(where + ": width must be > 0");
  }
  auto check_ref = [&](int lane_id, const char* field, int ref) {
    if (!ids.count(ref)) {
      throw ValidationError("lane " + std::to_string(lane_id) + ": " + field +
                            " references unknown lane id " + std::to_string(ref));
    }
  };
  for (const auto& lane : lanes) {
    if (lane.left) check_ref(lane.id, "left", *lane.left);
    if (lane.right) check_ref(lane.id, "right", *lane.right);
    for (int s : lane.successors) check_ref(lane.id, "successor", s);
  }
  for (size_t i = 0; i < intersections.size(); ++i) {
    if (!intersections[i].is_simple()) {
      throw ValidationError("intersection " + std::to_string(i) +
                            ": polygon is not simple");
    }
  }
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ParseError("map/v1 at " + (path.empty() ? std::string("/") : path) + ": " + msg);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(path, "missing key '" + key + "'");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "non-finite number");
  return v;
}

Vec2 point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) fail(path, "expected [x, y]");
  return {number(j[0], path + "/0"), number(j[1], path + "/1")};
}

std::optional<int> optional_id(const json& obj, const std::string& key,
                               const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) fail(path + "/" + key, "expected an integer lane id");
  return it->get<int>();
}

std::vector<Vec2> trace_segments(const json& lane, const std::string& path) {
  Vec2 p = point(require(lane, "start", path), path + "/start");
  double h = deg2rad(number(require(lane, "heading_deg", path), path + "/heading_deg"));
  const json& segs = require(lane, "segments", path);
  if (!segs.is_array() || segs.empty()) fail(path + "/segments", "expected a non-empty list");
  std::vector<Vec2> pts{p};
  for (size_t k = 0; k < segs.size(); ++k) {
    const std::string sp = path + "/segments/" + std::to_string(k);
    const json& seg = segs[k];
    if (seg.contains("line")) {
      const double len = number(seg["line"], sp + "/line");
      if (!(len > 0.0)) fail(sp + "/line", "length must be > 0");
      p = p + len * heading_vec(h);
      pts.push_back(p);
    } else if (seg.contains("arc")) {
      const json& a = seg["arc"];
      const double r = number(require(a, "radius", sp + "/arc"), sp + "/arc/radius");
      const double ang = deg2rad(number(require(a, "angle_deg", sp + "/arc"),
                                        sp + "/arc/angle_deg"));
      if (!(r > 0.0)) fail(sp + "/arc/radius", "radius must be > 0");
      if (ang == 0.0) fail(sp + "/arc/angle_deg", "angle must be non-zero");
      const double sigma = ang > 0.0 ? 1.0 : -1.0;
      const Vec2 c = p + sigma * r * right_normal(h);
      const int steps = std::max(2, static_cast<int>(std::ceil(std::abs(ang) * r / 0.5)));
      for (int i = 1; i <= steps; ++i) {
        const double hi = h + ang * static_cast<double>(i) / steps;
        pts.push_back(c - sigma * r * right_normal(hi));
      }
      h += ang;
      p = pts.back();
    } else {
      fail(sp, "segment must be {\"line\": ...} or {\"arc\": {...}}");
    }
  }
  return pts;
}

}  // namespace

MapGraph build_map(const json& spec) {
  if (!spec.is_object()) fail("", "document must be an object");
  const json& version = require(spec, "version", "");
  if (!version.is_string() || version.get<std::string>() != "map/v1") {
    fail("/version", "unsupported version (expected \"map/v1\")");
  }
  MapGraph map;
  const json& lanes = require(spec, "lanes", "");
  if (!lanes.is_array()) fail("/lanes", "expected a list");
  for (size_t i = 0; i < lanes.size(); ++i) {
    const std::string path = "/lanes/" + std::to_string(i);
    const json& lj = lanes[i];
    Lane lane;
    const json& id = require(lj, "id", path);
    if (!id.is_number_integer()) fail(path + "/id", "expected an integer");
    lane.id = id.get<int>();
    lane.width = number(require(lj, "width", path), path + "/width");
    if (!(lane.width > 0.0)) fail(path + "/width", "width must be > 0");
    const std::string dir = lj.value("direction", std::string("forward"));
    if (dir == "forward") {
      lane.direction = LaneDirection::Forward;
    } else if (dir == "backward") {
      lane.direction = LaneDirection::Backward;
    } else {
      fail(path + "/direction", "expected \"forward\" or \"backward\"");
    }
    if (lj.contains("points")) {
      const json& pts = lj["points"];
      if (!pts.is_array()) fail(path + "/points", "expected a list");
      for (size_t k = 0; k < pts.size(); ++k) {
        lane.centerline.push_back(point(pts[k], path + "/points/" + std::to_string(k)));
      }
    } else {
      lane.centerline = trace_segments(lj, path);
    }
    if (lane.centerline.size() < 2) fail(path, "centerline needs at least 2 points");
    lane.arc.assign(lane.centerline.size(), 0.0);
    for (size_t k = 1; k < lane.centerline.size(); ++k) {
      const double d = (lane.centerline[k] - lane.centerline[k - 1]).norm();
      if (!(d > 0.0)) fail(path, "repeated centerline point " + std::to_string(k));
      lane.arc[k] = lane.arc[k - 1] + d;
    }
    lane.left = optional_id(lj, "left", path);
    lane.right = optional_id(lj, "right", path);
    if (lj.contains("successors")) {
      const json& succ = lj["successors"];
      if (!succ.is_array()) fail(path + "/successors", "expected a list");
      for (size_t k = 0; k < succ.size(); ++k) {
        if (!succ[k].is_number_integer()) {
          fail(path + "/successors/" + std::to_string(k), "expected an integer lane id");
        }
        lane.successors.push_back(succ[k].get<int>());
      }
    }
    map.lanes.push_back(std::move(lane));
  }
  if (spec.contains("intersections")) {
    const json& xs = spec["intersections"];
    if (!xs.is_array()) fail("/intersections", "expected a list");
    for (size_t i = 0; i < xs.size(); ++i) {
      const std::string path = "/intersections/" + std::to_string(i);
      const json& poly = require(xs[i], "polygon", path);
      if (!poly.is_array() || poly.size() < 3) {
        fail(path + "/polygon", "expected at least 3 vertices");
      }
      Polygon p;
      for (size_t k = 0; k < poly.size(); ++k) {
        p.vertices.push_back(point(poly[k], path + "/polygon/" + std::to_string(k)));
      }
      map.intersections.push_back(std::move(p));
    }
  }
  map.reindex();
  try {
    map.validate();
  } catch (const ValidationError& e) {
    throw ParseError(std::string("map/v1: ") + e.what());
  }
  return map;
}

MapGraph build_map_from_text(const std::string& text) {
  json spec;
  try {
    spec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("map/v1: syntax error: ") + e.what());
  }
  return build_map(spec);
}

json map_to_json(const MapGraph& map) {
  json lanes = json::array();
  for (const auto& lane : map.lanes) {
    json pts = json::array();
    for (const auto& p : lane.centerline) pts.push_back({p.x(), p.y()});
    json lj = {{"id", lane.id},
               {"width", lane.width},
               {"direction", lane.direction == LaneDirection::Forward ? "forward" : "backward"},
               {"points", pts},
               {"left", lane.left ? json(*lane.left) : json(nullptr)},
               {"right", lane.right ? json(*lane.right) : json(nullptr)},
               {"successors", lane.successors}};
    lanes.push_back(std::move(lj));
  }
  json xs = json::array();
  for (const auto& poly : map.intersections) {
    json pts = json::array();
    for (const auto& p : poly.vertices) pts.push_back({p.x(), p.y()});
    xs.push_back({{"polygon", pts}});
  }
  return {{"version", "map/v1"}, {"lanes", lanes}, {"intersections", xs}};
}

json straight_road_spec(double length, int same_dir_lanes, double width,
                        int opposite_lanes) {
  json lanes = json::array();
  for (int i = 0; i < same_dir_lanes; ++i) {
    json lane = {{"id", i},
                 {"width", width},
                 {"direction", "forward"},
                 {"start", {0.0, 0.5 * width + i * width}},
                 {"heading_deg", 0.0},
                 {"segments", json::array({{{"line", length}}})},
                 {"successors", json::array()}};
    lane["left"] = i > 0 ? json(i - 1) : (opposite_lanes > 0 ? json(100) : json(nullptr));
    lane["right"] = i + 1 < same_dir_lanes ? json(i + 1) : json(nullptr);
    lanes.push_back(std::move(lane));
  }
  for (int j = 0; j < opposite_lanes; ++j) {
    json lane = {{"id", 100 + j},
                 {"width", width},
                 {"direction", "backward"},
                 {"start", {length, -0.5 * width - j * width}},
                 {"heading_deg", 180.0},
                 {"segments", json::array({{{"line", length}}})},
                 {"successors", json::array()}};
    lane["left"] = j > 0 ? json(100 + j - 1) : (same_dir_lanes > 0 ? json(0) : json(nullptr));
    lane["right"] = j + 1 < opposite_lanes ? json(100 + j + 1) : json(nullptr);
    lanes.push_back(std::move(lane));
  }
  return {{"version", "map/v1"}, {"lanes", lanes}, {"intersections", json::array()}};
}

namespace {

Vec2 rotate(const Vec2& p, double ang) {
  const double c = std::cos(ang), s = std::sin(ang);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

json junction_spec(const std::vector<int>& arms, double arm_length, double w) {
  // Arm k is entered with heading k*90 deg. Canonical geometry is arm 0
  // (vehicles enter from -x); other arms are rotations of it.
  json lanes = json::array();
  auto present = [&](int k) { return std::find(arms.begin(), arms.end(), k) != arms.end(); };
  for (int a : arms) {
    const double rot = a * 0.5 * kPi;
    const double hdeg = a * 90.0;
    const Vec2 in_start = rotate({-w - arm_length, 0.5 * w}, rot);
    const Vec2 out_start = rotate({-w, -0.5 * w}, rot);
    json succ = json::array();
    for (int b : arms) {
      if (b != a) succ.push_back(100 + 10 * a + b);
    }
    lanes.push_back({{"id", 10 * a},
                     {"width", w},
                     {"direction", "forward"},
                     {"start", {in_start.x(), in_start.y()}},
                     {"heading_deg", hdeg},
                     {"segments", json::array({{{"line", arm_length}}})},
                     {"left", 10 * a + 1},
                     {"right", nullptr},
                     {"successors", succ}});
    lanes.push_back({{"id", 10 * a + 1},
                     {"width", w},
                     {"direction", "backward"},
                     {"start", {out_start.x(), out_start.y()}},
                     {"heading_deg", hdeg + 180.0},
                     {"segments", json::array({{{"line", arm_length}}})},
                     {"left", 10 * a},
                     {"right", nullptr},
                     {"successors", json::array()}});
    const Vec2 c_start = rotate({-w, 0.5 * w}, rot);
    for (int b : arms) {
      if (b == a || !present(b)) continue;
      const int turn = ((b - a) % 4 + 4) % 4;
      json seg;
      if (turn == 2) {
        seg = {{"line", 2.0 * w}};
      } else if (turn == 3) {
        seg = {{"arc", {{"radius", 0.5 * w}, {"angle_deg", 90.0}}}};
      } else {
        seg = {{"arc", {{"radius", 1.5 * w}, {"angle_deg", -90.0}}}};
      }
      lanes.push_back({{"id", 100 + 10 * a + b},
                       {"width", w},
                       {"direction", "forward"},
                       {"start", {c_start.x(), c_start.y()}},
                       {"heading_deg", hdeg},
                       {"segments", json::array({seg})},
                       {"left", nullptr},
                       {"right", nullptr},
                       {"successors", json::array({10 * b + 1})}});
    }
  }
  json box = json::array({{-w, -w}, {w, -w}, {w, w}, {-w, w}});
  return {{"version", "map/v1"},
          {"lanes", lanes},
          {"intersections", json::array({{{"polygon", box}}})}};
}

}  // namespace

json four_way_spec(double arm_length, double width) {
  return junction_spec({0, 1, 2, 3}, arm_length, width);
}

json t_junction_spec(double arm_length, double width) {
  return junction_spec({0, 1, 2}, arm_length, width);
}

}  // namespace advedit::world
