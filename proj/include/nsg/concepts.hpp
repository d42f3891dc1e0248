#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "nsg/agents.hpp"
#include "nsg/engine.hpp"

namespace nsg {

class GroundingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 10/8, 172.16/12 and 192.168/16.
bool is_private(Ipv4 ip);

/// Address-free image of an Observation. Host labels look like
/// "unknown_0", "host_1_p22/TCP_p5432/TCP" or "external_0"; several hosts
/// with the same kind and service surface share one label, hence the
/// multiplicity maps.
struct ConceptState {
  std::map<std::string, int> known;
  std::map<std::string, int> controlled;
  std::map<std::string, std::set<std::string>> services;
  std::map<std::string, std::set<DataRef>> data;
  std::map<std::string, int> networks;
  std::set<std::pair<std::string, std::string>> blocks;

  /// Canonical serialization, used as the Q-table key.
  std::string digest() const;
  bool operator==(const ConceptState&) const = default;
};

/// ConceptState plus the label of every concrete host and network.
struct ConceptView {
  ConceptState state;
  std::map<Ipv4, std::string> host_label;
  std::map<Cidr, std::string> network_label;
};

ConceptView abstract_view(const Observation& obs);
inline ConceptState abstract_state(const Observation& obs) { return abstract_view(obs).state; }

struct ConceptAction {
  ActionType type = ActionType::ScanNetwork;
  std::string source;
  std::string target;
  std::optional<ServiceRef> service;
  std::optional<DataRef> data;

  std::string key() const;
  auto operator<=>(const ConceptAction&) const = default;
};

ConceptAction abstract_action(const ConceptView& view, const Action& action);

/// Distinct concept actions of the valid concrete set, sorted.
std::vector<ConceptAction> concept_candidates(const ConceptView& view, const std::vector<Action>& valid);

/// Uniform choice among the valid concrete actions whose abstraction is
/// `ca`. Throws GroundingError when none exists.
Action ground_action(const ConceptAction& ca, const Observation& obs, Rng& rng);
Action ground_action(const ConceptAction& ca, const ConceptView& view, const std::vector<Action>& valid, Rng& rng);

/// (type, source, target) triples tried since the last state change.
using ConceptHistory = std::set<std::tuple<ActionType, std::string, std::string>>;

struct FilterOptions {
  /// Data ids treated as host logs and never exfiltrated.
  std::set<std::string> log_ids{"logfile"};
};

/// Applies the six pruning rules to `candidates`: internal-only and
/// firewall-aware, no repeats, service discovery only on hosts with unknown
/// services, exploit only uncontrolled other hosts, FindData only on
/// controlled internal hosts without known data, exfiltrate only new non-log
/// data to another controlled host.
std::vector<ConceptAction> filter_concept_actions(const ConceptState& cs, const std::vector<ConceptAction>& candidates,
                                                  const ConceptHistory& history, const FilterOptions& options = {});

/// Shaped reward: failure -1000, success +1000, timeout -100, otherwise
/// -100 for an unchanged state and -1 for a changed one.
double recompute_reward(double env_reward, EndReason end_reason, bool state_changed);

struct ConceptualConfig {
  double alpha = 0.1;
  double gamma = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  FilterOptions filters;
};

/// Tabular Q-learning over concept states.
class ConceptualAgent : public Agent {
 public:
  using QTable = std::map<std::string, std::map<std::string, double>>;

  explicit ConceptualAgent(ConceptualConfig config = {}) : config_(std::move(config)) {}

  std::string name() const override { return "conceptual"; }
  void episode_start(const Topology& topology, const Observation& obs) override;
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;
  void observe(const Action& action, const StepResult& result) override;

  void set_epsilon(double eps) { epsilon_ = eps; }
  double epsilon() const { return epsilon_; }
  const ConceptualConfig& config() const { return config_; }
  const QTable& q_table() const { return q_; }
  double q_value(const std::string& digest, const std::string& action_key) const;
  /// Mean squared TD error since the last call; resets the accumulator.
  double take_loss();

  json to_json() const;
  static ConceptualAgent from_json(const json& doc);

 private:
  /// Filtered candidates, falling back to the unfiltered set when empty.
  std::vector<ConceptAction> options(const ConceptView& view, const std::vector<Action>& valid) const;
  void td_update(double target);

  ConceptualConfig config_;
  QTable q_;
  double epsilon_ = 0.0;

  ConceptHistory history_;
  std::optional<std::pair<std::string, std::string>> pending_;  // (digest, action key) awaiting bootstrap
  double pending_reward_ = 0.0;
  double td_sq_sum_ = 0.0;
  int td_count_ = 0;
};

struct ConceptualTraining {
  int max_episodes_per_variant = 2000;
  /// Greedy win rate at which training on a variant stops.
  double stop_win_rate = 0.95;
  int eval_every = 100;
  int eval_episodes = 40;
  /// Episodes over which epsilon decays linearly, per variant.
  int epsilon_decay_episodes = 1000;
};

/// Sequential training over the variants with greedy early stopping.
std::vector<TrainingRow> train_conceptual(ConceptualAgent& agent,
                                          const std::vector<std::shared_ptr<const Topology>>& variants,
                                          const ConceptualTraining& schedule, std::uint64_t seed);

}  // namespace nsg
