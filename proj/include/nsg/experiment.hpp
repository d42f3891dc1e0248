#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nsg/analysis.hpp"
#include "nsg/concepts.hpp"
#include "nsg/meta_learning.hpp"
#include "nsg/scenario.hpp"
#include "nsg/value_learning.hpp"

namespace nsg {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on. Paths inside the file are relative to it.
struct ExperimentConfig {
  std::string name = "default";
  std::filesystem::path scenario = "data/scenario.json";
  std::uint64_t master_seed = 1;
  /// Six seeds: the first five give the training variants, the last the test variant.
  std::vector<std::uint64_t> variant_seeds{11, 12, 13, 14, 15, 16};
  int eval_episodes = 500;
  int eval_groups = 5;

  DqnConfig dqn;
  DqnTraining dqn_training;
  DdqnConfig ddqn;
  DqnTraining ddqn_training{200, 0.5, 1.0, 0.05};
  ConceptualConfig conceptual;
  ConceptualTraining conceptual_training;
  MetaConfig meta;

  void validate() const;
  json to_json() const;
  static ExperimentConfig from_json(const json& doc, const std::filesystem::path& base = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  static constexpr int kTestVariant = 5;
};

/// Names accepted by train/eval.
const std::vector<std::string>& registered_agents();
bool is_trainable(const std::string& agent);

struct EvalOptions {
  std::optional<int> episodes;
  int variant = ExperimentConfig::kTestVariant;
  /// Checkpoint trained on this variant alone instead of the five training variants.
  std::optional<int> train_variant;
  bool adapt = true;
  std::optional<std::filesystem::path> checkpoint;
  /// Required for agent "external".
  Agent* external = nullptr;
};

/// Output layout: <root>/<name>/{variants,checkpoints,traces,metrics,figures}.
class Experiment {
 public:
  Experiment(ExperimentConfig config, const std::filesystem::path& out_root);

  const ExperimentConfig& config() const { return config_; }
  const ScenarioConfig& scenario() const { return scenario_; }
  const std::vector<std::shared_ptr<const Topology>>& variants() const { return variants_; }
  std::vector<std::shared_ptr<const Topology>> train_variants() const;
  std::filesystem::path dir() const { return dir_; }

  std::vector<std::filesystem::path> gen_variants() const;
  /// Returns the checkpoint path.
  std::filesystem::path train(const std::string& agent, std::optional<int> episodes = std::nullopt,
                              std::optional<int> train_variant = std::nullopt) const;
  RunMetrics eval(const std::string& agent, const EvalOptions& options = {}) const;
  /// Signatures for every trace file (or directory of them) plus a comparison table.
  std::vector<std::pair<std::string, RunMetrics>> analyze(const std::vector<std::filesystem::path>& inputs) const;
  /// Throws ProtocolError unless the oracle wins every variant in 5 steps with return 95.
  void oracle_check() const;

  static std::string checkpoint_stem(const std::string& agent, std::optional<int> train_variant);

 private:
  std::filesystem::path ensure(const std::string& sub) const;
  std::uint64_t train_seed(const std::string& agent, std::optional<int> train_variant) const;
  std::uint64_t eval_seed(int variant) const;

  ExperimentConfig config_;
  ScenarioConfig scenario_;
  std::vector<std::shared_ptr<const Topology>> variants_;
  std::filesystem::path dir_;
};

json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& doc);

}  // namespace nsg
