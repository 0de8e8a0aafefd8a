#include <algorithm>
#include <cmath>
#include <cstdio>

#include "advedit/editor/editor.hpp"

namespace advedit::editor {

using scene::HazardousManeuver;

namespace {

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

// Base trajectory as a polyline starting at the agent (origin), queried by
// arc length with linear extrapolation past either end.
class BasePath {
 public:
  explicit BasePath(const std::vector<Vec2>& base) {
    pts_.push_back(Vec2::Zero());
    pts_.insert(pts_.end(), base.begin(), base.end());
    arc_.push_back(0.0);
    for (size_t i = 1; i < pts_.size(); ++i) arc_.push_back(arc_.back() + (pts_[i] - pts_[i - 1]).norm());
  }

  double arc_at_index(size_t i) const { return arc_[i]; }
  double length() const { return arc_.back(); }

  Vec2 point(double s) const {
    const size_t k = segment(s);
    return pts_[k] + tangent_of(k) * (s - arc_[k]);
  }
  Vec2 tangent(double s) const { return tangent_of(segment(s)); }
  Vec2 normal(double s) const {
    const Vec2 t = tangent(s);
    return {-t.y(), t.x()};  // right of the direction of travel
  }

 private:
  size_t segment(double s) const {
    size_t k = 0;
    while (k + 2 < pts_.size() && arc_[k + 1] <= s) ++k;
    // Skip zero-length segments so the tangent stays defined.
    while (k > 0 && arc_[k + 1] - arc_[k] < 1e-9) --k;
    return k;
  }
  Vec2 tangent_of(size_t k) const {
    for (size_t j = k; j + 1 < pts_.size(); ++j) {
      const Vec2 d = pts_[j + 1] - pts_[j];
      if (d.norm() > 1e-9) return d.normalized();
    }
    for (size_t j = std::min(k, pts_.size() - 1); j > 0; --j) {
      const Vec2 d = pts_[j] - pts_[j - 1];
      if (d.norm() > 1e-9) return d.normalized();
    }
    return {1.0, 0.0};
  }

  std::vector<Vec2> pts_;
  std::vector<double> arc_;
};

double side_toward(const Vec2& p) { return p.y() > 0.1 ? 1.0 : -1.0; }

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

EditorResponse RuleBasedEditor::edit(const EditorRequest& req) {
  ++calls_;
  req.validate();
  Rng rng(Rng::derive(req.seed, "rule-editor"));
  const auto& sc = req.scene;
  const int n = req.n;
  const double dt = 1.0 / req.fps;
  const double horizon = n * dt;
  const BasePath base(sc.base_trajectory);
  auto ego_at = [&](double t) {
    return Vec2(sc.ego.position + sc.ego.speed * t * heading_vec(sc.ego.heading));
  };

  std::vector<Vec2> out;
  out.reserve(static_cast<size_t>(n));
  std::string analysis;
  const double ego_dist = sc.ego.position.norm();

  switch (req.maneuver) {
    case HazardousManeuver::SuddenBrake: {
      const double v0 = base.arc_at_index(1) / dt;
      const double ratio = p_.brake_ratio_max * rng.uniform();
      const double t_mid = 0.5 * horizon;
      // Speed holds for the first frame, then falls linearly to ratio * v0 by
      // mid-horizon and stays there.
      auto speed = [&](double t) {
        if (t <= dt) return v0;
        const double u = std::min(1.0, (t - dt) / (t_mid - dt));
        return v0 * (1.0 - (1.0 - ratio) * u);
      };
      double s = 0.0;
      for (int i = 1; i <= n; ++i) {
        const double t0 = (i - 1) * dt, t1 = i * dt;
        s += 0.5 * (speed(t0) + speed(t1)) * dt;  // exact for piecewise-linear speed on grid
        out.push_back(base.point(s));
      }
      analysis = "The risky agent is " + fmt1(ego_dist) + " m from the ego in the same lane ahead of it and brakes hard to " +
                 fmt1(ratio * 100.0) + "% of its speed by mid-horizon, leaving the ego little room to stop.";
      break;
    }
    case HazardousManeuver::Overtake: {
      const Vec2 ego_end = ego_at(horizon);
      const double needed = (ego_end.x() + 6.0) / std::max(base.length(), 1e-6);
      const double factor = std::clamp(needed, p_.overtake_speedup, 2.0);
      for (int i = 1; i <= n; ++i) {
        const double u = static_cast<double>(i) / n;
        double bump = 0.0;
        if (u < 0.3) bump = smoothstep(u / 0.3);
        else if (u <= 0.6) bump = 1.0;
        else bump = smoothstep((0.9 - u) / 0.3);
        const double s = factor * base.arc_at_index(static_cast<size_t>(i));
        out.push_back(base.point(s) - p_.overtake_swing * bump * base.normal(s));
      }
      analysis = "The risky agent closes in from behind at " + fmt1(factor) +
                 "x its planned progress, swings out to the left to pass the ego and merges back into the ego's lane just ahead of it.";
      break;
    }
    case HazardousManeuver::CutInLeft:
    case HazardousManeuver::CutInRight: {
      const int k = std::clamp(static_cast<int>(std::lround(p_.cut_in_fraction * n)), 1, n);
      const Vec2 target = ego_at(k * dt);
      const Vec2 shift = target - sc.base_trajectory[static_cast<size_t>(k - 1)];
      for (int i = 1; i <= n; ++i) {
        const double w = i >= k ? 1.0 : smoothstep(static_cast<double>(i) / k);
        out.push_back(sc.base_trajectory[static_cast<size_t>(i - 1)] + w * shift);
      }
      analysis = std::string("The risky agent in the ") +
                 (req.maneuver == HazardousManeuver::CutInLeft ? "left" : "right") +
                 " adjacent lane cuts into the ego's lane and reaches the ego's projected position at frame " +
                 std::to_string(k) + ".";
      break;
    }
    case HazardousManeuver::LaneEncroachment: {
      const double side = side_toward(sc.ego.position);
      const double amp = p_.encroach_fraction * sc.lane_width;
      for (int i = 1; i <= n; ++i) {
        const double u = static_cast<double>(i) / n;
        double prof = 1.0;
        if (u < 1.0 / 3.0) prof = smoothstep(3.0 * u);
        else if (u > 2.0 / 3.0) prof = smoothstep(3.0 * (1.0 - u));
        const double s = base.arc_at_index(static_cast<size_t>(i));
        out.push_back(base.point(s) + side * amp * prof * base.normal(s));
      }
      analysis = "The oncoming risky agent drifts " + fmt1(amp) +
                 " m across the centre line toward the ego through the middle of the horizon before returning to its lane.";
      break;
    }
    case HazardousManeuver::UTurn: {
      const double side = side_toward(sc.ego.position);
      const double radius = p_.wheelbase / std::tan(p_.max_steer_rad);
      const double half_turn = kPi * radius;
      const double v = std::max(base.length() / horizon, half_turn / (0.8 * horizon));
      for (int i = 1; i <= n; ++i) {
        const double s = v * i * dt;
        if (s <= half_turn) {
          const double phi = s / radius;
          out.emplace_back(radius * std::sin(phi), side * radius * (1.0 - std::cos(phi)));
        } else {
          out.emplace_back(-(s - half_turn), side * 2.0 * radius);
        }
      }
      analysis = "The risky agent turns back on a " + fmt1(radius) + " m radius toward the " +
                 (side < 0 ? "left" : "right") + " and heads into the ego's path.";
      break;
    }
  }

  EditorResponse r;
  r.risk_level = RiskLevel::High;
  r.risk_category = scene::maneuver_tag(req.maneuver);
  r.is_intersection = sc.is_intersection_hint;
  r.analysis = analysis;
  r.waypoints.reserve(out.size());
  for (const auto& p : out) r.waypoints.emplace_back(round3(p.x()), round3(p.y()));
  return r;
}

}  // namespace advedit::editor
