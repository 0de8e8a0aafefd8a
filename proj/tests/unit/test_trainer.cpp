#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "advedit/binio.hpp"
#include "advedit/trainer/trainer.hpp"

using namespace advedit;
using namespace advedit::trainer;
namespace fs = std::filesystem;

namespace {

EnvConfig small_env(int vehicles = 5) {
  EnvConfig c;
  c.num_vehicles = vehicles;
  c.step_cap = 150;
  c.route_min_length = 80.0;
  c.route_max_length = 300.0;
  return c;
}

std::shared_ptr<const world::MapGraph> straight_map() {
  return load_map({{"preset", "straight"}, {"length", 400.0}, {"lanes", 2}});
}

TrainConfig tiny_train(uint64_t seed) {
  TrainConfig c;
  c.env = small_env();
  c.map = {{"preset", "straight"}, {"length", 400.0}, {"lanes", 2}};
  c.sac.hidden = {8, 8};
  c.sac.total_steps = 600;
  c.sac.learning_starts = 200;
  c.sac.batch_size = 32;
  c.sac.train_freq = 16;
  c.sac.gradient_steps = 4;
  c.sac.buffer_size = 1000;
  c.schedule.k = 2;
  c.seed = seed;
  c.checkpoint_every = 2;
  return c;
}

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advedit_trainer_" + name);
  fs::remove_all(p);
  return p;
}

policy::Action cruise(const Eigen::VectorXd&) { return {0.0, 0.3}; }

}  // namespace

TEST_CASE("schedule: k normals then one challenging") {
  AlternationSchedule s;
  s.k = 2;
  std::string seq;
  for (long e = 0; e < 9; ++e) seq += s.kind_of(e) == ScenarioKind::Normal ? 'N' : 'C';
  CHECK(seq == "NNCNNCNNC");
  for (int k : {1, 2, 4, 8, 16, 5}) {
    s.k = k;
    long challenging = 0;
    for (long e = 0; e < 90; ++e) {
      if (s.kind_of(e) == ScenarioKind::Challenging) ++challenging;
      // Exactly periodic with period k + 1.
      CHECK(s.kind_of(e) == s.kind_of(e + k + 1));
    }
    CHECK(challenging == 90 / (k + 1));
  }
  s.k = 8;
  long c8 = 0;
  for (long e = 0; e < 90; ++e) c8 += s.kind_of(e) == ScenarioKind::Challenging;
  CHECK(c8 == 10);
  s.normal_only = true;
  for (long e = 0; e < 30; ++e) CHECK(s.kind_of(e) == ScenarioKind::Normal);
}

TEST_CASE("spawn: ego route length and spacing between vehicles") {
  const auto map = load_map({{"preset", "four_way"}});
  EnvConfig cfg;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto ep = spawn_episode(map, cfg, seed);
    const auto& ws = ep.world->state();
    CHECK(ws.agents.size() == 20);
    CHECK(ep.ego_route.waypoints.size() >= 2);
    for (const auto& [id, a] : ws.agents) {
      CHECK((a.position - ws.ego.position).norm() >= cfg.ego_clearance - 1e-9);
      for (const auto& [id2, b] : ws.agents) {
        if (id2 != id) CHECK((a.position - b.position).norm() >= cfg.spawn_gap - 1e-9);
      }
    }
    CHECK_FALSE(ws.risky_id.has_value());
  }
}

TEST_CASE("normal episodes never call the editor") {
  const auto map = straight_map();
  editor::RuleBasedEditor ed;
  EpisodeSpec spec;
  spec.kind = ScenarioKind::Normal;
  spec.seed = 3;
  spec.max_steps = 150;
  bool risky_seen = false;
  const auto r = run_episode(map, small_env(), spec, cruise, &ed, {},
                             [&](const world::TrafficWorld& w, const reward::RewardBreakdown&) {
                               risky_seen |= w.state().risky_id.has_value();
                             });
  CHECK(ed.calls() == 0);
  CHECK_FALSE(risky_seen);
  CHECK(r.adversary.empty());
  CHECK_FALSE(r.downgraded);
}

TEST_CASE("challenging episode replays T_final exactly") {
  const auto map = straight_map();
  editor::RuleBasedEditor ed;
  int checked = 0;
  for (uint64_t seed = 0; seed < 6; ++seed) {
    EpisodeSpec spec;
    spec.kind = ScenarioKind::Challenging;
    spec.seed = seed;
    spec.max_steps = 150;
    std::vector<std::map<int, Vec2>> positions;
    const auto r = run_episode(map, small_env(), spec, cruise, &ed, {},
                               [&](const world::TrafficWorld& w, const reward::RewardBreakdown&) {
                                 std::map<int, Vec2> m;
                                 for (const auto& [id, a] : w.state().agents) m[id] = a.position;
                                 positions.push_back(m);
                               });
    CHECK_FALSE(r.downgraded);
    REQUIRE_FALSE(r.adversary.empty());
    CHECK(r.adversary.front().step == 0);
    for (const auto& ev : r.adversary) {
      for (size_t i = 0; i < ev.t_final.size(); ++i) {
        const size_t step = static_cast<size_t>(ev.step) + i;
        if (step >= positions.size()) break;
        CHECK((positions[step].at(ev.risky_id) - ev.t_final[i]).norm() <= 1e-9);
        ++checked;
      }
    }
  }
  CHECK(ed.calls() >= 6);
  CHECK(checked > 0);
}

TEST_CASE("challenging without an editor is downgraded") {
  EpisodeSpec spec;
  spec.kind = ScenarioKind::Challenging;
  spec.max_steps = 20;
  const auto r = run_episode(straight_map(), small_env(), spec, cruise, nullptr);
  CHECK(r.downgraded);
  CHECK(r.adversary.empty());
  CHECK(to_json(r).at("downgraded") == true);
}

TEST_CASE("step cap ends the episode without a terminal flag") {
  EnvConfig cfg = small_env(0);
  cfg.step_cap = 500;
  EpisodeSpec spec;
  spec.max_steps = cfg.step_cap;
  spec.seed = 1;
  int dones = 0;
  const auto r = run_episode(straight_map(), cfg, spec,
                             [](const Eigen::VectorXd&) { return policy::Action{0.0, -1.0}; },
                             nullptr,
                             [&](const Eigen::VectorXd&, const policy::Action&, double,
                                 const Eigen::VectorXd&, bool done) { dones += done; });
  CHECK(r.steps == 500);
  CHECK(dones == 0);
  CHECK(r.termination == reward::Termination::None);
  CHECK(r.distance == doctest::Approx(0.0));
  CHECK(r.rewards.size() == 500);
}

TEST_CASE("episodes are deterministic for a fixed seed") {
  editor::RuleBasedEditor ed1, ed2;
  EpisodeSpec spec;
  spec.kind = ScenarioKind::Challenging;
  spec.seed = 11;
  spec.max_steps = 150;
  const auto a = run_episode(straight_map(), small_env(), spec, cruise, &ed1);
  const auto b = run_episode(straight_map(), small_env(), spec, cruise, &ed2);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.rewards == b.rewards);
}

TEST_CASE("config JSON round trip and strictness") {
  const TrainConfig c = tiny_train(5);
  const auto j = to_json(c);
  CHECK(to_json(train_config_from_json(j)).dump() == j.dump());
  auto bad = j;
  bad["env"]["pipeline"]["lqr"]["typo"] = 1;
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  bad = j;
  bad["schedule"]["k"] = 0;
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  bad = j;
  bad["env"]["num_vehicles"] = "many";
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  CHECK_THROWS_AS(load_map({{"preset", "roundabout"}}), ConfigError);
  CHECK_THROWS_AS(kind_from_name("chaotic"), ConfigError);
}

TEST_CASE("training is reproducible and resumable") {
  editor::RuleBasedEditor ed;
  const TrainConfig cfg = tiny_train(9);
  const auto d1 = fresh_dir("a"), d2 = fresh_dir("b");
  TrainOptions o1;
  o1.out_dir = d1.string();
  const auto s1 = train(cfg, &ed, o1);
  TrainOptions o2;
  o2.out_dir = d2.string();
  const auto s2 = train(cfg, &ed, o2);
  CHECK(s1.global_step == 600);
  CHECK(s1.final_hash == s2.final_hash);
  const auto log1 = lines_of((d1 / "train_log.jsonl").string());
  CHECK(log1 == lines_of((d2 / "train_log.jsonl").string()));
  REQUIRE(log1.size() >= 4);
  CHECK(s1.challenging == s1.episodes / 3);

  SUBCASE("resume with no further episodes re-emits the same checkpoint") {
    const auto d3 = fresh_dir("c");
    TrainOptions o3;
    o3.out_dir = d3.string();
    o3.resume_from = s1.final_checkpoint;
    o3.max_episodes = 0;
    const auto s3 = train(TrainConfig{}, &ed, o3);
    CHECK(read_file(s3.final_checkpoint) == read_file(s1.final_checkpoint));
    CHECK(s3.final_hash == s1.final_hash);
  }

  SUBCASE("interrupted run resumes onto the same log") {
    const auto d4 = fresh_dir("d");
    TrainOptions o4;
    o4.out_dir = d4.string();
    o4.max_episodes = 2;
    const auto part = train(cfg, &ed, o4);
    CHECK(part.episodes == 2);
    const auto d5 = fresh_dir("e");
    TrainOptions o5;
    o5.out_dir = d5.string();
    o5.resume_from = part.final_checkpoint;
    const auto rest = train(TrainConfig{}, &ed, o5);
    const auto suffix = lines_of((d5 / "train_log.jsonl").string());
    REQUIRE(suffix.size() == log1.size() - 2);
    CHECK(std::equal(suffix.begin(), suffix.end(), log1.begin() + 2));
    CHECK(rest.final_hash == s1.final_hash);
  }

  SUBCASE("corrupt checkpoints raise a parse error") {
    const std::string bytes = read_file(s1.final_checkpoint);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), ParseError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), ParseError);
    CHECK_THROWS_AS(decode_checkpoint("garbage"), ParseError);
    std::string flipped = bytes;
    flipped[9] ^= 0x5a;
    CHECK_THROWS_AS(decode_checkpoint(flipped), ParseError);
    const auto ok = decode_checkpoint(bytes);
    CHECK(ok.global_step == 600);
    CHECK(ok.buffer.has_value());
  }

  SUBCASE("checkpoint series is written at the configured interval") {
    CHECK(fs::exists(d1 / "ckpt_000002.ckpt"));
    CHECK(fs::exists(d1 / "final.ckpt"));
  }
}
