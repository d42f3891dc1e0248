#include <doctest.h>

#include <fstream>
#include <sstream>

#include <unistd.h>

#include "nsg/experiment.hpp"

using namespace nsg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nsg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

json tiny_config() {
  return json{{"name", "tiny"},
              {"scenario", NSG_SCENARIO},
              {"master_seed", 7},
              {"variant_seeds", {1, 2, 3, 4, 5, 6}},
              {"eval", {{"episodes", 20}, {"groups", 2}}},
              {"dqn", {{"hidden", 8}, {"min_replay", 50}, {"batch", 8}, {"episodes_per_variant", 2}}},
              {"ddqn", {{"embedding_dim", 16}, {"hidden", {8}}, {"min_replay", 50}, {"episodes_per_variant", 2}}},
              {"conceptual", {{"max_episodes_per_variant", 5}}},
              {"meta",
               {{"epochs", 1},
                {"tasks_per_epoch", 2},
                {"support_episodes", 2},
                {"inner_steps", 1},
                {"query_episodes", 1},
                {"test_support_per_step", 1},
                {"test_query", 2},
                {"eval_episodes", 1}}}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("shipped config loads") {
  const auto cfg = ExperimentConfig::load(NSG_CONFIG);
  CHECK(cfg.variant_seeds.size() == 6);
  CHECK(fs::exists(cfg.scenario));
  CHECK(ExperimentConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}

TEST_CASE("config validation") {
  auto doc = tiny_config();
  doc["variant_seeds"] = {1, 2, 3};
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), UsageError);
  doc = tiny_config();
  doc["eval"]["episodes"] = 21;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), UsageError);
}

TEST_CASE("registry") {
  CHECK(registered_agents().size() == 9);
  CHECK_FALSE(is_trainable("random"));
  CHECK(is_trainable("maml"));
  CHECK(Experiment::checkpoint_stem("dqn_single", 2) == "dqn_single_t2");
}

TEST_CASE("end to end on a tiny budget") {
  TempDir tmp;
  const Experiment exp(ExperimentConfig::from_json(tiny_config()), tmp.path);
  const auto files = exp.gen_variants();
  REQUIRE(files.size() == 6);
  CHECK(read_json_file(files[5]).at("role") == "test");
  CHECK(exp.variants()[5]->assignment().variant_id == 5);
  exp.oracle_check();

  CHECK_THROWS_AS(exp.train("random"), UsageError);
  CHECK_THROWS_AS(exp.train("nobody"), UsageError);
  CHECK_THROWS_AS(exp.train("dqn_single", 0), UsageError);
  CHECK_THROWS_AS(exp.eval("dqn_single"), UsageError);  // no checkpoint yet

  for (const std::string agent : {"dqn_single", "dqn_dual", "ddqn", "conceptual", "maml", "reptile"}) {
    const auto ckpt = exp.train(agent);
    CHECK(fs::exists(ckpt));
    CHECK(read_json_file(ckpt).at("trained_on").size() == 5);
    const auto m = exp.eval(agent);
    CHECK(m.groups == 2);
  }
  EvalOptions noadapt;
  noadapt.adapt = false;
  exp.eval("maml", noadapt);
  CHECK(fs::exists(exp.dir() / "metrics" / "maml_v5_noadapt.json"));

  EvalOptions wrong;
  wrong.checkpoint = exp.dir() / "checkpoints" / "conceptual.json";
  CHECK_THROWS_AS(exp.eval("dqn_single", wrong), UsageError);

  exp.train("dqn_single", 2, 0);
  EvalOptions own;
  own.train_variant = 0;
  own.variant = 0;
  exp.eval("dqn_single", own);
  CHECK(fs::exists(exp.dir() / "metrics" / "dqn_single_t0_v0.json"));

  const auto r1 = exp.eval("random");
  const std::string first = slurp(exp.dir() / "metrics" / "random_v5.json");
  const auto r2 = exp.eval("random");
  CHECK(slurp(exp.dir() / "metrics" / "random_v5.json") == first);
  CHECK(r1.episodes == 20);

  const auto rows = exp.analyze({exp.dir() / "traces"});
  CHECK(rows.size() >= 8);
  CHECK(fs::exists(exp.dir() / "figures" / "random_v5.svg"));
  CHECK(fs::exists(exp.dir() / "metrics" / "comparison.csv"));
  CHECK_THROWS_AS(exp.analyze({tmp.path / "missing"}), UsageError);
}
