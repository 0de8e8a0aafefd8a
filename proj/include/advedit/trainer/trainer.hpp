#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "advedit/policy/policy.hpp"
#include "advedit/trainer/env.hpp"

namespace advedit::trainer {

/// k Normal episodes followed by one Challenging episode, repeating.
struct AlternationSchedule {
  int k = 2;
  bool normal_only = false;  // control runs: every episode Normal

  ScenarioKind kind_of(long episode) const;
};

struct TrainConfig {
  EnvConfig env;
  policy::SacConfig sac;
  nlohmann::json map = {{"preset", "four_way"}};
  AlternationSchedule schedule;
  uint64_t seed = 0;
  long checkpoint_every = 10;  // episodes; 0 writes only the final checkpoint
  bool persist_buffer = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Seed of episode `e` of a run.
uint64_t episode_seed(uint64_t run_seed, long episode);

/// In-memory image of a `ckpt/v1` file.
struct Checkpoint {
  TrainConfig config;
  long global_step = 0;
  long episode = 0;  // next episode index
  long challenging = 0;
  long downgraded = 0;
  std::optional<policy::SacAgent> agent;
  std::optional<policy::ReplayBuffer> buffer;
};

std::string encode_checkpoint(const Checkpoint& c);
/// Throws ParseError on a bad magic, version, truncation or trailing data.
Checkpoint decode_checkpoint(const std::string& bytes);
Checkpoint load_checkpoint(const std::string& path);

struct TrainOptions {
  std::string out_dir;  // train_log.jsonl, ckpt_<episode>.ckpt, final.ckpt
  std::optional<std::string> resume_from;
  long max_episodes = -1;  // stop after this many episodes in this invocation
  std::function<void(const nlohmann::json&)> on_log;
};

struct TrainSummary {
  long global_step = 0;
  long episodes = 0;
  long challenging = 0;
  long downgraded = 0;
  std::string final_checkpoint;
  std::string final_hash;  // fnv1a64 hex of the final checkpoint bytes
};

/// Runs SAC over alternating Normal/Challenging episodes until the step
/// budget (sac.total_steps) or `max_episodes` is reached. A non-finite loss
/// raises TrainingError after the log has been flushed; the newest
/// checkpoint on disk is left untouched.
TrainSummary train(const TrainConfig& cfg, editor::Editor* ed, const TrainOptions& opts);

/// Greedy (deterministic) action of a trained agent.
PolicyFn greedy_policy(policy::SacAgent& agent);

}  // namespace advedit::trainer
