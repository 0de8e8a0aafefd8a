#include <fstream>

#include "advedit/binio.hpp"
#include "advedit/cli/cli.hpp"
#include "advedit/json_fields.hpp"

namespace advedit::cli {

trainer::TrainConfig RunConfig::train_config() const {
  trainer::TrainConfig t;
  t.env = env;
  t.sac = sac;
  t.map = map;
  t.schedule = schedule;
  t.seed = seed;
  t.checkpoint_every = checkpoint_every;
  t.persist_buffer = persist_buffer;
  return t;
}

void RunConfig::validate() const {
  train_config().validate();
  trainer::load_map(map);
  static const std::vector<std::string> kinds = {"rule", "vlm", "direct", "fixture", "identity"};
  if (std::find(kinds.begin(), kinds.end(), editor.kind) == kinds.end()) {
    throw ConfigError("editor.kind must be one of rule, vlm, direct, fixture, identity");
  }
  editor.remote.validate();
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  trainer::kind_from_name(eval.kind);
  if (eval.policy != "agent" && eval.policy != "random" && eval.policy != "straight") {
    throw ConfigError("eval.policy must be agent, random or straight");
  }
  if (!analyze.map.is_null()) trainer::load_map(analyze.map);
  if (analyze.scenes < 1 || analyze.warmup_steps < 0 || analyze.max_attempts < 1) {
    throw ConfigError("analyze: scenes and max_attempts must be >= 1, warmup_steps >= 0");
  }
  if (demo.warmup_steps < 0) throw ConfigError("demo.warmup_steps must be >= 0");
}

nlohmann::json to_json(const RunConfig& c) {
  const auto& r = c.editor.remote;
  const auto& p = c.editor.rule;
  return {{"version", "run/v1"},
          {"seed", c.seed},
          {"out", c.out},
          {"map", c.map},
          {"env", trainer::to_json(c.env)},
          {"sac", policy::to_json(c.sac)},
          {"schedule", {{"k", c.schedule.k}, {"normal_only", c.schedule.normal_only}}},
          {"checkpoint_every", c.checkpoint_every},
          {"persist_buffer", c.persist_buffer},
          {"editor",
           {{"kind", c.editor.kind},
            {"fixtures", c.editor.fixtures},
            {"remote",
             {{"endpoint", r.endpoint},
              {"api_key_env", r.api_key_env},
              {"timeout_s", r.timeout_s},
              {"retries", r.retries},
              {"backoff_s", r.backoff_s},
              {"model", r.model},
              {"temperature", r.temperature},
              {"max_in_flight", r.max_in_flight}}},
            {"rule",
             {{"brake_ratio_max", p.brake_ratio_max},
              {"overtake_speedup", p.overtake_speedup},
              {"overtake_swing", p.overtake_swing},
              {"cut_in_fraction", p.cut_in_fraction},
              {"encroach_fraction", p.encroach_fraction},
              {"wheelbase", p.wheelbase},
              {"max_steer_rad", p.max_steer_rad}}}}},
          {"eval",
           {{"episodes", c.eval.episodes},
            {"kind", c.eval.kind},
            {"checkpoint", c.eval.checkpoint},
            {"policy", c.eval.policy}}},
          {"analyze",
           {{"map", c.analyze.map},
            {"scenes", c.analyze.scenes},
            {"warmup_steps", c.analyze.warmup_steps},
            {"max_attempts", c.analyze.max_attempts}}},
          {"demo", {{"warmup_steps", c.demo.warmup_steps}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  StrictObject o(j, "run");
  std::string version;
  o.get("version", version);
  if (version != "run/v1") throw ConfigError("run: version must be \"run/v1\"");
  o.get("seed", c.seed);
  o.get("out", c.out);
  if (const auto* m = o.take("map")) c.map = *m;
  if (const auto* e = o.take("env")) c.env = trainer::env_config_from_json(*e);
  if (const auto* s = o.take("sac")) c.sac = policy::sac_config_from_json(*s);
  if (const auto* s = o.take("schedule")) {
    StrictObject os(*s, "run.schedule");
    os.get("k", c.schedule.k);
    os.get("normal_only", c.schedule.normal_only);
    os.finish();
  }
  o.get("checkpoint_every", c.checkpoint_every);
  o.get("persist_buffer", c.persist_buffer);
  if (const auto* e = o.take("editor")) {
    StrictObject oe(*e, "run.editor");
    oe.get("kind", c.editor.kind);
    oe.get("fixtures", c.editor.fixtures);
    if (const auto* r = oe.take("remote")) {
      StrictObject orr(*r, "run.editor.remote");
      auto& x = c.editor.remote;
      orr.get("endpoint", x.endpoint);
      orr.get("api_key_env", x.api_key_env);
      orr.get("timeout_s", x.timeout_s);
      orr.get("retries", x.retries);
      orr.get("backoff_s", x.backoff_s);
      orr.get("model", x.model);
      orr.get("temperature", x.temperature);
      orr.get("max_in_flight", x.max_in_flight);
      orr.finish();
    }
    if (const auto* r = oe.take("rule")) {
      StrictObject orl(*r, "run.editor.rule");
      auto& x = c.editor.rule;
      orl.get("brake_ratio_max", x.brake_ratio_max);
      orl.get("overtake_speedup", x.overtake_speedup);
      orl.get("overtake_swing", x.overtake_swing);
      orl.get("cut_in_fraction", x.cut_in_fraction);
      orl.get("encroach_fraction", x.encroach_fraction);
      orl.get("wheelbase", x.wheelbase);
      orl.get("max_steer_rad", x.max_steer_rad);
      orl.finish();
    }
    oe.finish();
  }
  if (const auto* e = o.take("eval")) {
    StrictObject oe(*e, "run.eval");
    oe.get("episodes", c.eval.episodes);
    oe.get("kind", c.eval.kind);
    oe.get("checkpoint", c.eval.checkpoint);
    oe.get("policy", c.eval.policy);
    oe.finish();
  }
  if (const auto* a = o.take("analyze")) {
    StrictObject oa(*a, "run.analyze");
    if (const auto* m = oa.take("map")) c.analyze.map = *m;
    oa.get("scenes", c.analyze.scenes);
    oa.get("warmup_steps", c.analyze.warmup_steps);
    oa.get("max_attempts", c.analyze.max_attempts);
    oa.finish();
  }
  if (const auto* d = o.take("demo")) {
    StrictObject od(*d, "run.demo");
    od.get("warmup_steps", c.demo.warmup_steps);
    od.finish();
  }
  o.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: " + path + " is not valid JSON");
  return run_config_from_json(j);
}

std::unique_ptr<editor::Editor> make_editor(const EditorSection& s, const std::string& kind) {
  if (kind == "rule") return std::make_unique<editor::RuleBasedEditor>(s.rule);
  if (kind == "identity") return std::make_unique<editor::IdentityEditor>();
  if (kind == "vlm") return std::make_unique<editor::VlmEditor>(s.remote, editor::PromptMode::Edit);
  if (kind == "direct") return std::make_unique<editor::VlmEditor>(s.remote, editor::PromptMode::Generate);
  if (kind == "fixture") {
    if (s.fixtures.empty()) throw ConfigError("editor: the fixture editor needs editor.fixtures");
    try {
      return std::make_unique<editor::FixtureEditor>(editor::FixtureStore::load(s.fixtures));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("editor: cannot load fixtures: ") + e.what());
    }
  }
  throw ConfigError("editor: unknown kind '" + kind + "' (rule, vlm, direct, fixture, identity)");
}

}  // namespace advedit::cli
