#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "advedit/binio.hpp"
#include "advedit/cli/cli.hpp"

namespace advedit::cli {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string editor;
  std::string out;
  std::optional<int> episodes;
  std::string kind;
  bool trace = false;
};

RunConfig resolve(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.editor.empty()) c.editor.kind = f.editor;
  if (!f.out.empty()) c.out = f.out;
  if (!f.kind.empty()) c.eval.kind = f.kind;
  if (f.episodes) {
    if (*f.episodes < 1) throw ConfigError("--episodes must be >= 1");
    c.eval.episodes = *f.episodes;
    c.analyze.scenes = *f.episodes;
  }
  c.validate();
  return c;
}

void write_text(const fs::path& p, const std::string& text) {
  write_file_atomic(p.string(), text);
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ------------------------------------------------------------------ map

int cmd_map(const std::string& spec_path, const std::string& out_path, std::ostream& out) {
  std::string text;
  try {
    text = read_file(spec_path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(spec_path + " is not valid JSON");
  std::shared_ptr<const world::MapGraph> map;
  try {
    map = trainer::load_map(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("map: ") + e.what());
  }
  const auto doc = world::map_to_json(*map);
  world::build_map(doc);  // the written document must rebuild
  if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
  write_text(out_path, dump(doc));
  out << "map: " << map->lanes.size() << " lanes, " << map->intersections.size()
      << " intersections -> " << out_path << "\n";
  return 0;
}

// ------------------------------------------------------------ edit-demo

int cmd_edit_demo(const RunConfig& c, bool trace, std::ostream& out) {
  auto ed = make_editor(c.editor, c.editor.kind);
  const auto map = trainer::load_map(c.map);
  for (int attempt = 0; attempt < c.analyze.max_attempts; ++attempt) {
    const uint64_t s = Rng::derive(c.seed, "demo", static_cast<uint64_t>(attempt));
    const auto ep = eval::warm_up(map, c.env, s, c.demo.warmup_steps);
    const auto& ws = ep.world->state();
    if (!world::detect_collisions(ws).empty()) continue;
    Rng mrng(Rng::derive(s, "maneuver"));
    const auto r = trainer::run_adversary(ws, c.env.world.limits, *ed, c.env.pipeline, mrng,
                                          Rng::derive(s, "editor"));
    if (!r) continue;
    const fs::path dir(c.out);
    fs::create_directories(dir);
    const std::pair<const char*, const trajgen::Trajectory*> stages[] = {
        {"t_model", &r->t_model},       {"t_map", &r->t_map},       {"t_base", &r->t_base},
        {"t_edit", &r->t_edit_local},   {"t_smoothed", &r->t_smoothed},
        {"t_curve", &r->t_curve},       {"t_final", &r->t_final}};
    for (const auto& [name, t] : stages) write_text(dir / (std::string(name) + ".json"), dump(trajgen::to_json(*t)));
    write_text(dir / "scene.json", dump(scene::scene_to_json(r->scene)));
    write_text(dir / "response.json", dump(editor::response_to_json(r->response)));
    if (r->scene.bev) r->scene.bev->write_png((dir / "bev.png").string());
    if (trace) {
      nlohmann::json log = nlohmann::json::array();
      for (const auto& st : r->rollout.log) {
        log.push_back({{"steer", st.steer}, {"accel", st.accel}, {"e_lat", st.e_lat}, {"e_head", st.e_head}});
      }
      const auto feas = postproc::feasibility_report(r->t_final, r->t_final.dt, c.env.world.limits);
      write_text(dir / "pipeline_trace.json",
                 dump({{"risky_id", r->risky_id},
                       {"maneuver", scene::maneuver_tag(r->maneuver)},
                       {"position", r->scene.position_tag},
                       {"editor", ed->name()},
                       {"t_edit_world", trajgen::to_json(r->t_edit)},
                       {"max_deviation", r->rollout.max_deviation},
                       {"feasible", feas.within_limits},
                       {"control_log", log}}));
    }
    out << "edit-demo: agent " << r->risky_id << " " << scene::maneuver_tag(r->maneuver) << " ("
        << r->scene.position_tag << "), editor " << ed->name() << ", risk "
        << editor::risk_level_name(r->response.risk_level) << " -> " << c.out << "\n";
    return 0;
  }
  throw Error("edit-demo: no scene with an agent in the hazardous zone after " +
              std::to_string(c.analyze.max_attempts) + " attempts");
}

// ---------------------------------------------------------------- train

int cmd_train(const RunConfig& c, const std::string& resume, std::optional<long> max_episodes,
              std::ostream& out) {
  std::unique_ptr<editor::Editor> ed;
  if (!c.schedule.normal_only) ed = make_editor(c.editor, c.editor.kind);
  trainer::TrainOptions opts;
  opts.out_dir = c.out;
  if (!resume.empty()) opts.resume_from = resume;
  if (max_episodes) opts.max_episodes = *max_episodes;
  std::vector<double> window;
  opts.on_log = [&](const nlohmann::json& rec) {
    if (!rec.contains("return")) {
      out << "train: aborted at step " << rec.value("global_step", 0L) << ": "
          << rec.value("error", std::string()) << "\n";
      return;
    }
    window.push_back(rec.at("return").get<double>());
    if (window.size() == 10) {
      double sum = 0.0;
      for (double v : window) sum += v;
      out << "train: episode " << rec.at("episode").get<long>() + 1 << " step "
          << rec.at("global_step").get<long>() << " mean return (10 ep) " << std::fixed
          << std::setprecision(3) << sum / 10.0 << "\n";
      out.unsetf(std::ios::fixed);
      window.clear();
    }
  };
  const auto s = trainer::train(c.train_config(), ed.get(), opts);
  write_text(fs::path(c.out) / "run_config.json", dump(to_json(c)));
  out << "train: " << s.episodes << " episodes (" << s.challenging << " challenging, "
      << s.downgraded << " downgraded), " << s.global_step << " steps, checkpoint "
      << s.final_checkpoint << " hash " << s.final_hash << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval

int cmd_eval(const RunConfig& c, bool trace, std::ostream& out) {
  const auto kind = trainer::kind_from_name(c.eval.kind);
  std::unique_ptr<editor::Editor> ed;
  if (kind == trainer::ScenarioKind::Challenging) ed = make_editor(c.editor, c.editor.kind);
  const auto map = trainer::load_map(c.map);

  std::optional<policy::SacAgent> agent;
  trainer::PolicyFn policy;
  if (c.eval.policy == "agent") {
    const std::string path = c.eval.checkpoint.empty() ? (fs::path(c.out) / "final.ckpt").string()
                                                       : c.eval.checkpoint;
    auto ck = trainer::load_checkpoint(path);
    agent = std::move(ck.agent);
    if (agent->actor().in_dim() != c.env.observation.dim()) {
      throw ConfigError("eval: checkpoint observation size does not match env.observation");
    }
    policy = trainer::greedy_policy(*agent);
  } else if (c.eval.policy == "random") {
    policy = eval::random_policy(c.seed);
  } else {
    policy = [](const Eigen::VectorXd&) { return policy::Action{0.0, 0.5}; };
  }

  const fs::path dir = fs::path(c.out) / ("eval_" + c.eval.kind);
  fs::create_directories(dir);
  std::ofstream trace_out;
  if (trace) trace_out.open(dir / "trace.jsonl", std::ios::trunc);

  std::vector<trainer::EpisodeResult> results;
  for (int i = 0; i < c.eval.episodes; ++i) {
    trainer::EpisodeSpec spec;
    spec.index = i;
    spec.kind = kind;
    spec.seed = Rng::derive(c.seed, "eval", static_cast<uint64_t>(i));
    spec.max_steps = c.env.step_cap;
    trainer::StepObserver obs;
    if (trace) {
      obs = [&](const world::TrafficWorld& w, const reward::RewardBreakdown& b) {
        auto rec = w.trace_record(world::detect_collisions(w.state()));
        rec["episode"] = i;
        rec["reward"] = reward::to_json(b);
        trace_out << rec.dump() << "\n";
      };
    }
    results.push_back(trainer::run_episode(map, c.env, spec, policy, ed.get(), {}, obs));
  }
  const auto m = eval::aggregate(results, c.seed);
  nlohmann::json episodes = nlohmann::json::array();
  for (const auto& r : results) {
    auto j = trainer::to_json(r);
    j["return"] = r.total_return;
    episodes.push_back(j);
  }
  eval::emit_report({{c.eval.kind, m}}, {}, dir.string(),
                    {{"policy", c.eval.policy}, {"episodes", episodes}});
  out << "eval: " << c.eval.episodes << " " << c.eval.kind << " episodes, RC "
      << m.rc << " TD " << m.td << " CR " << m.cr << " CPM "
      << (m.cpm ? std::to_string(*m.cpm) : std::string("NA")) << " CS " << m.cs << " AS " << m.as
      << " -> " << dir.string() << "\n";
  return 0;
}

// -------------------------------------------------------------- analyze

int cmd_analyze(const RunConfig& c, std::ostream& out) {
  auto edited = make_editor(c.editor, c.editor.kind);
  editor::OfflineGenerateEditor generated;
  eval::DiversityConfig d;
  d.scenes = c.analyze.scenes;
  d.seed = c.seed;
  d.warmup_steps = c.analyze.warmup_steps;
  d.max_attempts_per_scene = c.analyze.max_attempts;
  d.env = c.env;
  d.map = c.analyze.map.is_null() ? c.map : c.analyze.map;
  const auto r = eval::diversity_study(d, *edited, generated);
  auto q = [](const eval::Quartiles& x) { return nlohmann::json{{"q1", x.q1}, {"median", x.median}, {"q3", x.q3}}; };
  auto summary = [&](const eval::VariantSummary& s) {
    return nlohmann::json{{"length", q(s.length)},           {"avg_speed", q(s.avg_speed)},
                          {"max_curvature", q(s.max_curvature)}, {"min_distance", q(s.min_distance)},
                          {"max_accel", q(s.max_accel)},     {"max_steer", q(s.max_steer)},
                          {"endpoint_spread", s.endpoint_spread}};
  };
  const fs::path dir = fs::path(c.out) / "analyze";
  eval::emit_report({}, r.rows, dir.string(),
                    {{"editor", edited->name()},
                     {"scenes", d.scenes},
                     {"variants", {{"base", summary(r.base)}, {"edited", summary(r.edited)}, {"generated", summary(r.generated)}}},
                     {"claims",
                      {{"min_distance_closer", r.min_distance_closer},
                       {"endpoints_more_spread", r.endpoints_more_spread}}},
                     {"max_paired_delta", r.max_paired_delta}});
  out << "analyze: " << r.rows.size() << " rows; median min distance base " << r.base.min_distance.median
      << " edited " << r.edited.min_distance.median << "; endpoint spread base " << r.base.endpoint_spread
      << " edited " << r.edited.endpoint_spread << " -> " << dir.string() << "\n";
  return 0;
}

// ------------------------------------------------------- record-fixtures

int cmd_record_fixtures(const RunConfig& c, const std::string& out_file, std::ostream& out) {
  const std::string kind = c.editor.kind == "direct" ? "direct" : "vlm";
  const auto mode = kind == "direct" ? editor::PromptMode::Generate : editor::PromptMode::Edit;
  // Constructing the live client fails before any simulation when offline.
  editor::VlmEditor live(c.editor.remote, mode);

  class Recorder : public editor::Editor {
   public:
    Recorder(editor::VlmEditor& inner, editor::PromptMode mode, editor::FixtureStore& store)
        : inner_(inner), mode_(mode), store_(store) {}
    editor::EditorResponse edit(const editor::EditorRequest& req) override {
      ++calls_;
      const long before = inner_.successes();
      auto r = inner_.edit(req);
      if (inner_.successes() > before) {
        store_.put(editor::FixtureStore::canonical_request(editor::build_prompt(req, mode_), mode_),
                   inner_.last_body());
      }
      return r;
    }
    std::string name() const override { return "recorder"; }

   private:
    editor::VlmEditor& inner_;
    editor::PromptMode mode_;
    editor::FixtureStore& store_;
  };

  editor::FixtureStore store;
  Recorder rec(live, mode, store);
  const auto map = trainer::load_map(c.map);
  int done = 0;
  for (int i = 0; done < c.analyze.scenes && i < c.analyze.scenes * c.analyze.max_attempts; ++i) {
    const uint64_t s = Rng::derive(c.seed, "demo", static_cast<uint64_t>(i));
    const auto ep = eval::warm_up(map, c.env, s, c.demo.warmup_steps);
    Rng mrng(Rng::derive(s, "maneuver"));
    if (trainer::run_adversary(ep.world->state(), c.env.world.limits, rec, c.env.pipeline, mrng,
                               Rng::derive(s, "editor"))) {
      ++done;
    }
  }
  if (store.size() == 0) throw Error("record-fixtures: no valid replies from " + c.editor.remote.endpoint);
  const std::string path = out_file.empty() ? (fs::path(c.out) / "fixtures.json").string() : out_file;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  store.save(path);
  out << "record-fixtures: " << store.size() << " of " << rec.calls() << " requests recorded -> "
      << path << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial trajectory editing for driving-policy training", "advedit"};
  app.require_subcommand(1);
  CommonFlags f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "run/v1 configuration file");
    sub->add_option("--seed", f.seed, "Run seed");
    sub->add_option("--editor", f.editor, "Editor: rule, vlm, direct, fixture or identity")
        ->check(CLI::IsMember({"rule", "vlm", "direct", "fixture", "identity"}));
    sub->add_option("--out", f.out, "Output directory");
  };

  std::string map_spec, map_out;
  auto* map_cmd = app.add_subcommand("map", "Build and validate a map, write map/v1");
  map_cmd->add_option("spec", map_spec, "Map description (preset object or map/v1)")->required();
  map_cmd->add_option("--out", map_out, "Output file")->required();

  auto* demo = app.add_subcommand("edit-demo", "Run one scene through the editing pipeline");
  add_common(demo);
  demo->add_flag("--trace-pipeline", f.trace, "Also write the control log and feasibility");

  std::string resume;
  std::optional<long> max_episodes;
  auto* train = app.add_subcommand("train", "Train the driving policy");
  add_common(train);
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--episodes", max_episodes, "Stop after this many episodes");

  std::string checkpoint, policy_kind;
  auto* ev = app.add_subcommand("eval", "Evaluate a policy and write metrics");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
  ev->add_option("--episodes", f.episodes, "Number of episodes");
  ev->add_option("--kind", f.kind, "Scenario kind")->check(CLI::IsMember({"normal", "challenging"}));
  ev->add_option("--policy", policy_kind, "agent, random or straight")
      ->check(CLI::IsMember({"agent", "random", "straight"}));
  ev->add_flag("--trace-pipeline", f.trace, "Write a per-step trace log");

  auto* an = app.add_subcommand("analyze", "Trajectory diversity study");
  add_common(an);
  an->add_option("--episodes", f.episodes, "Number of scenes");

  std::string fixture_out;
  auto* rec = app.add_subcommand("record-fixtures", "Record live editor replies for offline replay");
  add_common(rec);
  rec->add_option("--episodes", f.episodes, "Number of scenes");
  rec->add_option("--fixtures", fixture_out, "Output vlmfix/v1 file (default <out>/fixtures.json)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (map_cmd->parsed()) return cmd_map(map_spec, map_out, out);
    RunConfig c = resolve(f);
    if (demo->parsed()) return cmd_edit_demo(c, f.trace, out);
    if (train->parsed()) return cmd_train(c, resume, max_episodes, out);
    if (ev->parsed()) {
      if (!checkpoint.empty()) c.eval.checkpoint = checkpoint;
      if (!policy_kind.empty()) c.eval.policy = policy_kind;
      return cmd_eval(c, f.trace, out);
    }
    if (an->parsed()) return cmd_analyze(c, out);
    if (rec->parsed()) return cmd_record_fixtures(c, fixture_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace advedit::cli
