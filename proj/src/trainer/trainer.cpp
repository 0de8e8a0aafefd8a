#include "advedit/trainer/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advedit/binio.hpp"
#include "advedit/json_fields.hpp"

namespace advedit::trainer {

namespace {
constexpr const char* kMagic = "ADVEDIT-CKPT";
constexpr const char* kVersion = "ckpt/v1";
}  // namespace

ScenarioKind AlternationSchedule::kind_of(long episode) const {
  if (normal_only) return ScenarioKind::Normal;
  return (episode + 1) % (k + 1) == 0 ? ScenarioKind::Challenging : ScenarioKind::Normal;
}

void TrainConfig::validate() const {
  env.validate();
  sac.validate();
  if (schedule.k < 1) throw ConfigError("schedule: k must be a positive integer");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (std::abs(sac.action_smoothing - env.action_smoothing) > 0.0) {
    throw ConfigError("sac.action_smoothing and env.action_smoothing must agree");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"env", to_json(c.env)},
          {"sac", policy::to_json(c.sac)},
          {"map", c.map},
          {"schedule", {{"k", c.schedule.k}, {"normal_only", c.schedule.normal_only}}},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"persist_buffer", c.persist_buffer}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  StrictObject o(j, "train");
  if (const auto* e = o.take("env")) c.env = env_config_from_json(*e);
  if (const auto* s = o.take("sac")) c.sac = policy::sac_config_from_json(*s);
  if (const auto* m = o.take("map")) {
    load_map(*m);  // fail early on a bad map description
    c.map = *m;
  }
  if (const auto* s = o.take("schedule")) {
    StrictObject os(*s, "train.schedule");
    os.get("k", c.schedule.k);
    os.get("normal_only", c.schedule.normal_only);
    os.finish();
  }
  o.get("seed", c.seed);
  o.get("checkpoint_every", c.checkpoint_every);
  o.get("persist_buffer", c.persist_buffer);
  o.finish();
  c.validate();
  return c;
}

uint64_t episode_seed(uint64_t run_seed, long episode) {
  return Rng::derive(run_seed, "world", static_cast<uint64_t>(episode));
}

std::string encode_checkpoint(const Checkpoint& c) {
  if (!c.agent) throw ValidationError("checkpoint: no agent to save");
  BinaryWriter w;
  w.str(kMagic);
  w.str(kVersion);
  const nlohmann::json header = {{"config", to_json(c.config)},
                                 {"global_step", c.global_step},
                                 {"episode", c.episode},
                                 {"challenging", c.challenging},
                                 {"downgraded", c.downgraded}};
  w.str(header.dump());
  c.agent->save(w);
  w.u64(c.buffer ? 1 : 0);
  if (c.buffer) c.buffer->save(w);
  return w.data();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  BinaryReader r(bytes);
  std::string magic;
  try {
    magic = r.str();
  } catch (const ParseError&) {
    throw ParseError("checkpoint: not a checkpoint file");
  }
  if (magic != kMagic) throw ParseError("checkpoint: not a checkpoint file");
  const std::string version = r.str();
  if (version != kVersion) throw ParseError("checkpoint: unsupported version '" + version + "'");
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(r.str());
    c.config = train_config_from_json(header.at("config"));
    c.global_step = header.at("global_step").get<long>();
    c.episode = header.at("episode").get<long>();
    c.challenging = header.at("challenging").get<long>();
    c.downgraded = header.at("downgraded").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: bad config: ") + e.what());
  }
  c.agent = policy::SacAgent::load(r);
  const uint64_t has_buffer = r.u64();
  if (has_buffer > 1) throw ParseError("checkpoint: bad buffer flag");
  if (has_buffer) c.buffer = policy::ReplayBuffer::load(r);
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return c;
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

PolicyFn greedy_policy(policy::SacAgent& agent) {
  return [&agent](const Eigen::VectorXd& obs) { return agent.act(obs, true); };
}

namespace {

std::string checkpoint_name(long episode) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06ld.ckpt", episode);
  return buf;
}

}  // namespace

TrainSummary train(const TrainConfig& cfg_in, editor::Editor* ed, const TrainOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.out_dir.empty()) throw ConfigError("train: an output directory is required");
  fs::create_directories(opts.out_dir);

  Checkpoint state;
  if (opts.resume_from) {
    state = load_checkpoint(*opts.resume_from);
  } else {
    cfg_in.validate();
    state.config = cfg_in;
  }
  const TrainConfig& cfg = state.config;
  const auto map = load_map(cfg.map);
  const int obs_dim = cfg.env.observation.dim();
  if (!state.agent) state.agent.emplace(cfg.sac, obs_dim, Rng::derive(cfg.seed, "policy"));
  if (!state.buffer) state.buffer.emplace(cfg.sac.buffer_size, obs_dim);
  if (state.buffer->obs_dim() != obs_dim) {
    throw ParseError("checkpoint: buffer observation size does not match the config");
  }
  policy::SacAgent& agent = *state.agent;
  policy::ReplayBuffer& buffer = *state.buffer;

  const std::string log_path = (fs::path(opts.out_dir) / "train_log.jsonl").string();
  std::ofstream log(log_path, opts.resume_from ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("train: cannot open " + log_path);

  auto save = [&](const std::string& name) {
    Checkpoint out;
    out.config = cfg;
    out.global_step = state.global_step;
    out.episode = state.episode;
    out.challenging = state.challenging;
    out.downgraded = state.downgraded;
    out.agent = agent;
    if (cfg.persist_buffer) out.buffer = buffer;
    const std::string bytes = encode_checkpoint(out);
    const std::string path = (fs::path(opts.out_dir) / name).string();
    write_file_atomic(path, bytes);
    return std::make_pair(path, hex64(fnv1a64(bytes)));
  };

  const long budget = cfg.sac.total_steps;
  long run_episodes = 0;
  while (state.global_step < budget &&
         (opts.max_episodes < 0 || run_episodes < opts.max_episodes)) {
    EpisodeSpec spec;
    spec.index = state.episode;
    spec.kind = cfg.schedule.kind_of(state.episode);
    spec.seed = episode_seed(cfg.seed, state.episode);
    spec.max_steps = static_cast<int>(std::min<long>(cfg.env.step_cap, budget - state.global_step));

    Rng explore(Rng::derive(cfg.seed, "explore", static_cast<uint64_t>(state.episode)));
    PolicyFn policy = [&](const Eigen::VectorXd& obs) {
      if (state.global_step < cfg.sac.learning_starts) {
        return policy::Action{explore.uniform(-1.0, 1.0), explore.uniform(-1.0, 1.0)};
      }
      return agent.act(obs, false);
    };

    long updates = 0;
    double critic_sum = 0.0, actor_sum = 0.0;
    double entropy_coef = std::exp(agent.log_alpha());
    std::optional<std::string> failure;
    auto on_transition = [&](const Eigen::VectorXd& obs, const policy::Action& raw, double r,
                             const Eigen::VectorXd& next, bool done) {
      buffer.add(obs, raw, r, next, done);
      ++state.global_step;
      if (state.global_step >= cfg.sac.learning_starts &&
          state.global_step % cfg.sac.train_freq == 0 && buffer.size() >= cfg.sac.batch_size) {
        for (int g = 0; g < cfg.sac.gradient_steps; ++g) {
          const auto st = agent.update(buffer, state.global_step);
          critic_sum += st.critic_loss;
          actor_sum += st.actor_loss;
          entropy_coef = st.entropy_coef;
          ++updates;
        }
      }
    };

    EpisodeResult res;
    try {
      res = run_episode(map, cfg.env, spec, policy,
                        spec.kind == ScenarioKind::Challenging ? ed : nullptr, on_transition);
    } catch (const policy::TrainingError& e) {
      nlohmann::json rec = {{"event", "abort"}, {"episode", state.episode},
                            {"global_step", state.global_step}, {"error", e.what()}};
      log << rec.dump() << '\n';
      log.flush();
      if (opts.on_log) opts.on_log(rec);
      throw;
    }

    if (spec.kind == ScenarioKind::Challenging) ++state.challenging;
    if (res.downgraded) ++state.downgraded;
    nlohmann::json rec = to_json(res);
    rec["global_step"] = state.global_step;
    rec["updates"] = updates;
    rec["critic_loss"] = updates ? nlohmann::json(critic_sum / updates) : nlohmann::json(nullptr);
    rec["actor_loss"] = updates ? nlohmann::json(actor_sum / updates) : nlohmann::json(nullptr);
    rec["entropy_coef"] = entropy_coef;
    rec["learning_rate"] = cfg.sac.learning_rate(state.global_step);
    log << rec.dump() << '\n';
    log.flush();
    if (opts.on_log) opts.on_log(rec);

    ++state.episode;
    ++run_episodes;
    if (cfg.checkpoint_every > 0 && state.episode % cfg.checkpoint_every == 0) {
      save(checkpoint_name(state.episode));
    }
  }

  const auto [path, hash] = save("final.ckpt");
  TrainSummary s;
  s.global_step = state.global_step;
  s.episodes = state.episode;
  s.challenging = state.challenging;
  s.downgraded = state.downgraded;
  s.final_checkpoint = path;
  s.final_hash = hash;
  return s;
}

}  // namespace advedit::trainer
