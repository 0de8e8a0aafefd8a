#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/scene/scene.hpp"
#include "advedit/trajgen/trajectory.hpp"
#include "advedit/world/vehicle.hpp"

namespace advedit::editor {

enum class RiskLevel { High, Medium, Low };

std::string risk_level_name(RiskLevel r);
RiskLevel risk_level_from_name(const std::string& s);

struct EditorRequest {
  scene::SceneMessage scene;
  scene::HazardousManeuver maneuver = scene::HazardousManeuver::SuddenBrake;
  int n = trajgen::kDefaultHorizon;
  double fps = 15.0;
  uint64_t seed = 0;

  /// Throws ValidationError when the horizon or tags are inconsistent.
  void validate() const;
};

struct EditorResponse {
  RiskLevel risk_level = RiskLevel::Low;
  std::string risk_category;
  bool is_intersection = false;
  std::string analysis;
  std::vector<Vec2> waypoints;  // risky-agent frame
};

/// Edit output as a trajectory in the agent frame, stage T_edit.
trajgen::Trajectory response_trajectory(const EditorResponse& r, double fps);

/// Raised by parse_response. `kind` tells malformed documents apart from
/// schema violations.
class ResponseError : public ValidationError {
 public:
  enum class Kind { Malformed, MissingField, BadType, CountMismatch, NonFinite };
  ResponseError(Kind kind, const std::string& msg) : ValidationError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Extracts the first well-formed JSON object from free text (prose and
/// code fences allowed, raw line breaks inside strings tolerated, an outer
/// "response" wrapper unwrapped) and validates it against `expected_n`.
EditorResponse parse_response(const std::string& text, int expected_n);

nlohmann::json response_to_json(const EditorResponse& r);

enum class PromptMode { Edit, Generate };

/// Deterministic prompt text. Generate mode omits the base trajectory.
std::string build_prompt(const EditorRequest& req, PromptMode mode = PromptMode::Edit);

/// Response whose waypoints are the base trajectory, risk Low.
EditorResponse fallback_response(const EditorRequest& req);

/// CTRV prediction of the risky agent in its own frame, risk Low.
EditorResponse ctrv_response(const EditorRequest& req);

class Editor {
 public:
  virtual ~Editor() = default;
  /// Total: implementations fall back instead of throwing on bad replies.
  virtual EditorResponse edit(const EditorRequest& req) = 0;
  virtual std::string name() const = 0;
  long calls() const { return calls_; }

 protected:
  long calls_ = 0;
};

struct RuleParams {
  double brake_ratio_max = 0.2;   // final speed fraction upper bound
  double overtake_speedup = 1.3;
  double overtake_swing = 2.5;    // m, lateral swing of the pass
  double cut_in_fraction = 0.6;   // horizon fraction at which the cut-in meets the ego
  double encroach_fraction = 0.5; // of lane width
  double wheelbase = world::VehicleLimits{}.wheelbase;
  double max_steer_rad = world::VehicleLimits{}.max_steer_rad;
};

/// Offline stand-in: deterministic maneuver templates applied to the base.
class RuleBasedEditor : public Editor {
 public:
  explicit RuleBasedEditor(RuleParams p = {}) : p_(p) {}
  EditorResponse edit(const EditorRequest& req) override;
  std::string name() const override { return "rule"; }

 private:
  RuleParams p_;
};

/// Returns the base trajectory unchanged (control runs).
class IdentityEditor : public Editor {
 public:
  EditorResponse edit(const EditorRequest& req) override;
  std::string name() const override { return "identity"; }
};

struct RemoteEditorConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string api_key_env = "VLM_API_KEY";  // empty: no credential needed
  double timeout_s = 30.0;
  int retries = 2;
  std::vector<double> backoff_s = {1.0, 2.0, 4.0};
  std::string model = "vision-model";
  double temperature = 0.2;
  int max_in_flight = 1;

  void validate() const;
};

/// Chat-completion client. Edit mode implements the editing protocol;
/// Generate mode asks for a trajectory from scratch and falls back to CTRV.
class VlmEditor : public Editor {
 public:
  /// Throws ConfigError when the credential variable is unset.
  VlmEditor(RemoteEditorConfig cfg, PromptMode mode = PromptMode::Edit);
  EditorResponse edit(const EditorRequest& req) override;
  std::string name() const override { return mode_ == PromptMode::Edit ? "vlm" : "direct"; }

  long requests_sent() const { return requests_; }
  /// Replies that parsed and validated.
  long successes() const { return successes_; }
  /// Raw text of the last successful reply, if any.
  const std::string& last_body() const { return last_body_; }

 private:
  RemoteEditorConfig cfg_;
  PromptMode mode_;
  std::string api_key_;
  long requests_ = 0;
  long successes_ = 0;
  std::string last_body_;
};

/// Offline generator used when no endpoint is configured: always the CTRV
/// fallback.
class OfflineGenerateEditor : public Editor {
 public:
  EditorResponse edit(const EditorRequest& req) override;
  std::string name() const override { return "direct"; }
};

/// `vlmfix/v1` recorded replies keyed by the canonical request.
class FixtureStore {
 public:
  static std::string canonical_request(const std::string& prompt, PromptMode mode);
  static std::string key_of(const std::string& canonical);

  void put(const std::string& canonical, const std::string& body);
  /// Body recorded for `canonical`, else the default body, else nullopt.
  std::optional<std::string> find(const std::string& canonical) const;
  void set_default(const std::string& body) { default_ = body; }
  size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const;
  static FixtureStore from_json(const nlohmann::json& j);
  static FixtureStore load(const std::string& path);
  void save(const std::string& path) const;

 private:
  struct Entry {
    std::string request;
    std::string body;
  };
  std::map<std::string, Entry> entries_;
  std::optional<std::string> default_;
};

/// Replays recorded replies; behaves like the remote editor's fallback when
/// a request is missing or its reply does not validate.
class FixtureEditor : public Editor {
 public:
  FixtureEditor(FixtureStore store, PromptMode mode = PromptMode::Edit)
      : store_(std::move(store)), mode_(mode) {}
  EditorResponse edit(const EditorRequest& req) override;
  std::string name() const override { return "fixture"; }
  long misses() const { return misses_; }

 private:
  FixtureStore store_;
  PromptMode mode_;
  long misses_ = 0;
};

}  // namespace advedit::editor
