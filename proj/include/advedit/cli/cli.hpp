#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "advedit/eval/eval.hpp"
#include "advedit/trainer/trainer.hpp"

namespace advedit::cli {

struct EditorSection {
  std::string kind = "rule";  // rule, vlm, direct, fixture, identity
  editor::RemoteEditorConfig remote;
  editor::RuleParams rule;
  std::string fixtures;  // vlmfix/v1 path for the fixture editor
};

struct EvalSection {
  int episodes = 20;
  std::string kind = "challenging";
  std::string checkpoint;        // defaults to <out>/final.ckpt
  std::string policy = "agent";  // agent, random, straight
};

struct AnalyzeSection {
  nlohmann::json map = eval::default_study_map();  // null: use the run map
  int scenes = 100;
  int warmup_steps = 30;
  int max_attempts = 20;
};

struct DemoSection {
  int warmup_steps = 30;
};

/// `run/v1`: every tunable of a run in one document.
struct RunConfig {
  uint64_t seed = 0;
  std::string out = "runs/default";
  nlohmann::json map = {{"preset", "four_way"}};
  trainer::EnvConfig env;
  policy::SacConfig sac;
  trainer::AlternationSchedule schedule;
  long checkpoint_every = 10;
  bool persist_buffer = true;
  EditorSection editor;
  EvalSection eval;
  AnalyzeSection analyze;
  DemoSection demo;

  trainer::TrainConfig train_config() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Editor named `kind`. The remote kinds throw ConfigError when the
/// credential variable is unset; the fixture kind needs `fixtures`.
std::unique_ptr<editor::Editor> make_editor(const EditorSection& s, const std::string& kind);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 2 configuration error, 3 runtime error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advedit::cli
