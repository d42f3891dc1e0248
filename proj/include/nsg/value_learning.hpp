#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsg/agents.hpp"
#include "nsg/features.hpp"
#include "nsg/mlp.hpp"

namespace nsg {

// ---------------------------------------------------------------------------
// Candidate-feature DQN

template <typename S>
struct DqnTransition {
  Eigen::Matrix<S, 1, kFeatureDim> s;
  int a = 0;
  S r = 0;
  /// Distinct next-step feature rows; empty when terminal.
  Eigen::Matrix<S, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor> next;
  /// Row of `next` and action type (head) of every next-step candidate.
  /// An empty next_rows means candidate k reads row k.
  std::vector<int> next_rows;
  std::vector<std::uint8_t> next_types;
  bool done = false;
};

using Transition = DqnTransition<float>;

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  const T& sample(Rng& rng) const { return items_[rng.uniform_index(items_.size())]; }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> items_;
};

/// Index of the chosen candidate. With probability eps a uniform candidate;
/// otherwise argmax over Q(x_i)[type(a_i)], lowest index on ties.
template <typename S>
std::size_t dqn_select(const CandidateMatrix& matrix, const Mlp<S>& q, double eps, Rng& rng);

/// Mean squared TD error over the batch, with targets
/// r + gamma * max_k Qtarget(S'_k)[type_k] (just r when terminal).
/// Writes the gradient with respect to q's parameters when `grad` is given.
template <typename S>
double td_loss(const std::vector<const DqnTransition<S>*>& batch, const Mlp<S>& q, const Mlp<S>& target, double gamma,
               Mlp<S>* grad);

/// One Adam step on td_loss; returns the pre-update loss.
template <typename S>
double td_update(const std::vector<const DqnTransition<S>*>& batch, Mlp<S>& q, const Mlp<S>& target, double gamma,
                 Adam<S>& optimizer);

struct DqnConfig {
  int hidden = 64;
  double gamma = 0.99;
  double lr = 1e-3;
  int batch = 64;
  std::size_t capacity = 50'000;
  std::size_t succ_capacity = 5'000;
  /// Buffer size before the first update.
  std::size_t min_replay = 1'000;
  int target_sync = 500;
  /// Environment steps between gradient updates.
  int train_every = 1;
  /// Dual buffer: mirror progress/success transitions into a second buffer.
  bool dual = false;
  /// Share of each minibatch drawn from the success buffer (dual only).
  double succ_fraction = 0.5;
};

class DqnAgent : public Agent {
 public:
  DqnAgent(DqnConfig config, std::uint64_t seed);

  std::string name() const override { return config_.dual ? "dqn_dual" : "dqn_single"; }
  void episode_start(const Topology& topology, const Observation& obs) override;
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;
  void observe(const Action& action, const StepResult& result) override;

  void set_epsilon(double eps) { epsilon_ = eps; }
  const DqnConfig& config() const { return config_; }
  const Mlp<float>& qnet() const { return q_; }
  Mlp<float>& qnet() { return q_; }
  std::size_t replay_size() const { return all_.size(); }
  std::size_t success_size() const { return succ_.size(); }
  double take_loss();

  json to_json() const;
  static DqnAgent from_json(const json& doc);

 private:
  void store(Transition t, bool mirror);
  void maybe_train();

  DqnConfig config_;
  Mlp<float> q_;
  Mlp<float> target_;
  Adam<float> adam_;
  RingBuffer<Transition> all_;
  RingBuffer<Transition> succ_;
  Rng train_rng_;
  double epsilon_ = 0.0;
  long long env_steps_ = 0;
  long long updates_ = 0;

  int host_count_ = 0;
  std::set<Action> executed_;
  std::optional<Transition> pending_;
  bool pending_mirror_ = false;

  double loss_sum_ = 0.0;
  int loss_count_ = 0;
};

struct DqnTraining {
  int episodes_per_variant = 1000;
  /// Fraction of all training episodes over which epsilon decays 1 -> 0.05.
  double epsilon_decay_fraction = 0.5;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
};

/// Sequential training over the variants (one variant = Configuration #2).
std::vector<TrainingRow> train_dqn(DqnAgent& agent, const std::vector<std::shared_ptr<const Topology>>& variants,
                                   const DqnTraining& schedule, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Catalogue DDQN over a hashed observation embedding

/// Bag of hashed tokens of the observation's JSON serialization, signed
/// feature hashing (FNV-1a 64), L2-normalized.
Eigen::VectorXf hash_embedding(const Observation& obs, int dim = 256);

/// (R_env + 50) / 10 when the state changed, (R_env - 50) / 10 otherwise.
double ddqn_shaped_reward(double env_reward, bool state_changed);

struct DdqnTransition {
  Eigen::VectorXf s;
  int a = 0;
  float r = 0;
  Eigen::VectorXf next;
  std::vector<int> next_valid;  // catalogue indices
  bool done = false;
};

struct DdqnConfig {
  int embedding_dim = 256;
  std::vector<int> hidden{256, 128};
  double gamma = 0.99;
  double lr = 1e-3;
  int batch = 64;
  std::size_t capacity = 50'000;
  std::size_t succ_capacity = 5'000;
  std::size_t min_replay = 1'000;
  int target_sync = 500;
  int train_every = 4;
  double succ_fraction = 0.5;
  /// Catalogue size; fixed at construction and checked on every episode.
  int actions = 1034;
};

class DdqnAgent : public Agent {
 public:
  DdqnAgent(DdqnConfig config, std::uint64_t seed);

  std::string name() const override { return "ddqn"; }
  void episode_start(const Topology& topology, const Observation& obs) override;
  Action select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) override;
  void observe(const Action& action, const StepResult& result) override;

  void set_epsilon(double eps) { epsilon_ = eps; }
  const DdqnConfig& config() const { return config_; }
  double take_loss();

  json to_json() const;
  static DdqnAgent from_json(const json& doc);

 private:
  std::vector<int> mask(const std::vector<Action>& valid) const;
  void maybe_train();

  DdqnConfig config_;
  Mlp<float> q_;
  Mlp<float> target_;
  Adam<float> adam_;
  RingBuffer<DdqnTransition> all_;
  RingBuffer<DdqnTransition> succ_;
  Rng train_rng_;
  double epsilon_ = 0.0;
  long long env_steps_ = 0;
  long long updates_ = 0;

  std::vector<Action> catalogue_;
  std::optional<DdqnTransition> pending_;
  bool pending_mirror_ = false;
  double loss_sum_ = 0.0;
  int loss_count_ = 0;
};

std::vector<TrainingRow> train_ddqn(DdqnAgent& agent, const std::vector<std::shared_ptr<const Topology>>& variants,
                                    const DqnTraining& schedule, std::uint64_t seed);

}  // namespace nsg
