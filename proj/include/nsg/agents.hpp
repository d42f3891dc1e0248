#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "nsg/engine.hpp"
#include "nsg/rng.hpp"

namespace nsg {

/// Common contract. The runner hands every agent the engine's valid-action
/// list; frozen agents must not change their parameters.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual std::string name() const = 0;
  virtual void episode_start(const Topology& /*topology*/, const Observation& /*obs*/) {}
  virtual Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) = 0;
  virtual void observe(const Action& /*action*/, const StepResult& /*result*/) {}
  virtual void episode_end(const EpisodeTrace& /*trace*/) {}

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }

 private:
  bool frozen_ = false;
};

class RandomAgent : public Agent {
 public:
  std::string name() const override { return "random"; }
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;
};

/// Scripted five-step plan against the canonical layout: scan the server
/// network, find services on the goal server, exploit it, find its data,
/// exfiltrate the goal item to the C&C host. Throws ProtocolError when a
/// plan step is not available, which signals a broken scenario.
class OracleAgent : public Agent {
 public:
  explicit OracleAgent(std::string goal_host_role = "db_server") : goal_role_(std::move(goal_host_role)) {}

  std::string name() const override { return "oracle"; }
  void episode_start(const Topology& topology, const Observation& obs) override;
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;

 private:
  std::string goal_role_;
  Ipv4 foothold_;
  Ipv4 goal_host_;
  Ipv4 cc_;
  Cidr server_net_;
  DataRef goal_data_;
};

/// Line-delimited JSON bridge to an out-of-process policy. For every
/// decision one request line is written:
///   {"observation": {...}, "valid_actions": [{"action_type":..,"action_params":..}, ...]}
/// and one reply line is read: {"action_index": i} or {"action": {...}}.
/// Episode boundaries are announced with {"event": "episode_start"|"episode_end", ...}.
class ExternalAgent : public Agent {
 public:
  ExternalAgent(std::istream& from_agent, std::ostream& to_agent) : in_(from_agent), out_(to_agent) {}

  std::string name() const override { return "external"; }
  void episode_start(const Topology& topology, const Observation& obs) override;
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;
  void observe(const Action& action, const StepResult& result) override;
  void episode_end(const EpisodeTrace& trace) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

/// One line of a training curve.
struct TrainingRow {
  int variant = 0;
  int episode = 0;
  bool win = false;
  double ret = 0.0;
  int steps = 0;
  double loss = 0.0;
};

/// Per-episode seeds come from derive_seed(episode_seed, 0) for the game
/// and derive_seed(episode_seed, 1) for the agent's RNG.
EpisodeTrace run_episode(std::shared_ptr<const Topology> topology, Agent& agent, std::uint64_t episode_seed,
                         int episode_index = 0, std::uint64_t group = 0);

/// `episodes` consecutive episodes with seeds derive_seed(seed, i).
std::vector<EpisodeTrace> run_episodes(std::shared_ptr<const Topology> topology, Agent& agent, int episodes,
                                       std::uint64_t seed, std::uint64_t group = 0);

}  // namespace nsg
