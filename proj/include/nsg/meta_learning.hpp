#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsg/agents.hpp"
#include "nsg/features.hpp"
#include "nsg/mlp.hpp"

namespace nsg {

template <typename S>
using CandidateRows = Eigen::Matrix<S, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor>;

/// 12 -> 64 -> 64 -> 5, He-uniform.
Mlp<float> make_policy_net(std::uint64_t seed, int hidden = 64);

/// Softmax over candidates of logit[type(candidate)]. Candidate i reads
/// row rows[i] of x; an empty `rows` means row i.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> policy_distribution(const Mlp<S>& net, const CandidateRows<S>& x,
                                                        const std::vector<int>& rows,
                                                        const std::vector<std::uint8_t>& types);

Eigen::VectorXd policy_distribution(const Mlp<float>& net, const CandidateMatrix& matrix);

/// One decision: feature rows, the row and type of every candidate, the
/// chosen candidate and its policy-gradient weight (advantage).
template <typename S>
struct PolicySample {
  CandidateRows<S> x;
  std::vector<int> rows;
  std::vector<std::uint8_t> types;
  int chosen = 0;
  double weight = 0.0;
};

/// -(1/N) sum_i weight_i * log pi(chosen_i); gradient written to `grad` when given.
template <typename S>
double reinforce_loss(const std::vector<PolicySample<S>>& samples, const Mlp<S>& net, Mlp<S>* grad);

/// Samples from the policy (or takes its argmax when greedy). Never changes
/// the network; records the decisions of the current episode.
class PolicyAgent : public Agent {
 public:
  struct Step {
    PolicySample<float> sample;
    double reward = 0.0;
  };

  explicit PolicyAgent(const Mlp<float>& net, bool greedy = false) : net_(net), greedy_(greedy) {}

  std::string name() const override { return "policy"; }
  void episode_start(const Topology& topology, const Observation& obs) override;
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;
  void observe(const Action& action, const StepResult& result) override;

  const std::vector<Step>& steps() const { return steps_; }

 private:
  const Mlp<float>& net_;
  bool greedy_;
  int host_count_ = 0;
  std::set<Action> executed_;
  std::vector<Step> steps_;
};

struct MetaConfig {
  int tasks_per_epoch = 5;
  int support_episodes = 30;
  int inner_steps = 3;
  int query_episodes = 10;
  double inner_lr = 0.01;
  double outer_lr = 0.001;
  /// Reptile interpolation step.
  double reptile_step = 0.1;
  int epochs = 500;
  int test_support_per_step = 50;
  int test_query = 350;
  double gamma = 0.99;
  /// Environment rewards are multiplied by this before computing returns.
  double reward_scale = 1.0;
  int hidden = 64;
  /// Held-out evaluation during meta-training (frozen, no adaptation).
  int eval_every = 10;
  int eval_episodes = 50;

  void validate() const;
  json to_json() const;
  static MetaConfig from_json(const json& doc);
};

struct TaskSpec {
  std::shared_ptr<const Topology> topology;
  std::uint64_t seed = 0;
};

struct Rollouts {
  std::vector<EpisodeTrace> traces;
  std::vector<PolicySample<float>> samples;  // weights filled with baselined returns
  double win_rate() const;
};

/// `episodes` sampled episodes with discounted returns and a mean-return
/// baseline over the whole batch.
Rollouts collect_rollouts(const Mlp<float>& net, const TaskSpec& task, int episodes, const MetaConfig& cfg,
                          std::uint64_t stream);

/// Copy of `net` after `steps` REINFORCE steps of `episodes_per_step` each.
Mlp<float> inner_adapt(const Mlp<float>& net, const TaskSpec& task, const MetaConfig& cfg, int episodes_per_step,
                       int steps);
inline Mlp<float> inner_adapt(const Mlp<float>& net, const TaskSpec& task, const MetaConfig& cfg) {
  return inner_adapt(net, task, cfg, cfg.support_episodes / cfg.inner_steps, cfg.inner_steps);
}

struct MetaStepStats {
  double meta_loss = 0.0;
  double query_win_rate = 0.0;
};

/// First-order MAML: average of query gradients taken at the adapted
/// parameters, applied to `net` through `optimizer`.
MetaStepStats maml_outer_step(Mlp<float>& net, Adam<float>& optimizer, const std::vector<TaskSpec>& tasks,
                              const MetaConfig& cfg);

/// net += reptile_step * mean(adapted - net).
MetaStepStats reptile_outer_step(Mlp<float>& net, const std::vector<TaskSpec>& tasks, const MetaConfig& cfg);

enum class MetaMethod { Maml, Reptile };

struct MetaCurveRow {
  int epoch = 0;
  double meta_loss = 0.0;
  double query_win_rate = 0.0;
  /// Negative when not evaluated this epoch.
  double eval_win_rate = -1.0;
};

/// Meta-training over `train` variants; `held_out` (may be null) is used
/// for the periodic frozen evaluation only.
std::vector<MetaCurveRow> meta_train(Mlp<float>& net, MetaMethod method,
                                     const std::vector<std::shared_ptr<const Topology>>& train,
                                     std::shared_ptr<const Topology> held_out, const MetaConfig& cfg,
                                     std::uint64_t seed);

struct AdaptationResult {
  Mlp<float> adapted;
  std::vector<EpisodeTrace> query;
};

/// 3 x 50 support episodes of adaptation (skipped when !adapt), then 350
/// frozen query episodes.
AdaptationResult test_time_adapt_and_eval(const Mlp<float>& net, const TaskSpec& task, const MetaConfig& cfg,
                                          bool adapt = true);

void write_meta_curve_csv(std::ostream& out, const std::vector<MetaCurveRow>& rows);

}  // namespace nsg
