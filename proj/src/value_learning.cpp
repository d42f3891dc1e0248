#include "nsg/value_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nsg {

namespace {

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor>;

std::vector<std::uint8_t> types_of(const std::vector<Action>& actions) {
  std::vector<std::uint8_t> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(static_cast<std::uint8_t>(index_of(a.type)));
  return out;
}

template <typename AgentT>
std::vector<TrainingRow> train_loop(AgentT& agent, const std::vector<std::shared_ptr<const Topology>>& variants,
                                    const DqnTraining& schedule, std::uint64_t seed) {
  std::vector<TrainingRow> rows;
  const double total = static_cast<double>(schedule.episodes_per_variant) * static_cast<double>(variants.size());
  const double decay = std::max(1.0, schedule.epsilon_decay_fraction * total);
  int global = 0;
  agent.set_frozen(false);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::uint64_t vseed = derive_seed(seed, v);
    for (int e = 0; e < schedule.episodes_per_variant; ++e, ++global) {
      const double frac = std::min(1.0, global / decay);
      agent.set_epsilon(schedule.epsilon_start + frac * (schedule.epsilon_end - schedule.epsilon_start));
      const auto trace = run_episode(variants[v], agent, derive_seed(vseed, static_cast<std::uint64_t>(e)), e);
      rows.push_back(TrainingRow{static_cast<int>(v), e, trace.won(), trace.total_return(), trace.length(),
                                 agent.take_loss()});
    }
  }
  agent.set_epsilon(0.0);
  return rows;
}

}  // namespace

template <typename S>
std::size_t dqn_select(const CandidateMatrix& matrix, const Mlp<S>& q, double eps, Rng& rng) {
  if (matrix.empty()) throw std::invalid_argument("dqn_select: no candidates");
  if (eps > 0.0 && rng.bernoulli(eps)) return rng.uniform_index(matrix.rows());
  const typename Mlp<S>::Matrix out = q.forward(matrix.unique.template cast<S>());
  std::size_t best = 0;
  S best_q = -std::numeric_limits<S>::infinity();
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    const S v = out(matrix.row_of[i], static_cast<Eigen::Index>(index_of(matrix.actions[i].type)));
    if (v > best_q) {
      best_q = v;
      best = i;
    }
  }
  return best;
}

template <typename S>
double td_loss(const std::vector<const DqnTransition<S>*>& batch, const Mlp<S>& q, const Mlp<S>& target, double gamma,
               Mlp<S>* grad) {
  using M = typename Mlp<S>::Matrix;
  if (batch.empty()) throw std::invalid_argument("td_loss: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());

  Eigen::Index total = 0;
  for (const auto* t : batch) {
    if (!t->done) total += t->next.rows();
  }
  M next(total, kFeatureDim);
  Eigen::Index off = 0;
  for (const auto* t : batch) {
    if (t->done) continue;
    next.middleRows(off, t->next.rows()) = t->next;
    off += t->next.rows();
  }
  const M qn = total > 0 ? target.forward(next) : M();

  std::vector<double> y(batch.size());
  off = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto* t = batch[b];
    y[b] = static_cast<double>(t->r);
    if (t->done || t->next.rows() == 0) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < t->next_types.size(); ++k) {
      const Eigen::Index row = t->next_rows.empty() ? static_cast<Eigen::Index>(k) : t->next_rows[k];
      best = std::max(best, static_cast<double>(qn(off + row, t->next_types[k])));
    }
    off += t->next.rows();
    y[b] += gamma * best;
  }

  M s(n, kFeatureDim);
  for (Eigen::Index b = 0; b < n; ++b) s.row(b) = batch[static_cast<std::size_t>(b)]->s;
  typename Mlp<S>::Tape tape;
  const M out = q.forward(s, tape);
  M d = M::Zero(n, out.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const int a = batch[static_cast<std::size_t>(b)]->a;
    const double diff = static_cast<double>(out(b, a)) - y[static_cast<std::size_t>(b)];
    loss += diff * diff;
    d(b, a) = static_cast<S>(2.0 * diff / static_cast<double>(n));
  }
  if (grad != nullptr) *grad = q.backward(tape, d);
  return loss / static_cast<double>(n);
}

template <typename S>
double td_update(const std::vector<const DqnTransition<S>*>& batch, Mlp<S>& q, const Mlp<S>& target, double gamma,
                 Adam<S>& optimizer) {
  Mlp<S> grad;
  const double loss = td_loss(batch, q, target, gamma, &grad);
  optimizer.step(q, grad);
  return loss;
}

template std::size_t dqn_select<float>(const CandidateMatrix&, const Mlp<float>&, double, Rng&);
template std::size_t dqn_select<double>(const CandidateMatrix&, const Mlp<double>&, double, Rng&);
template double td_loss<float>(const std::vector<const DqnTransition<float>*>&, const Mlp<float>&,
                               const Mlp<float>&, double, Mlp<float>*);
template double td_loss<double>(const std::vector<const DqnTransition<double>*>&, const Mlp<double>&,
                                const Mlp<double>&, double, Mlp<double>*);
template double td_update<float>(const std::vector<const DqnTransition<float>*>&, Mlp<float>&, const Mlp<float>&,
                                 double, Adam<float>&);
template double td_update<double>(const std::vector<const DqnTransition<double>*>&, Mlp<double>&,
                                  const Mlp<double>&, double, Adam<double>&);

// ---------------------------------------------------------------------------

namespace {

Mlp<float> init_qnet(const std::vector<int>& sizes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  return Mlp<float>::init(sizes, rng);
}

}  // namespace

DqnAgent::DqnAgent(DqnConfig config, std::uint64_t seed)
    : config_(config),
      q_(init_qnet({kFeatureDim, config.hidden, config.hidden, static_cast<int>(kActionTypeCount)}, seed)),
      target_(q_),
      adam_(q_, config.lr),
      all_(config.capacity),
      succ_(config.succ_capacity),
      train_rng_(derive_seed(seed, 1)) {}

void DqnAgent::episode_start(const Topology& topology, const Observation& /*obs*/) {
  host_count_ = host_count(topology);
  executed_.clear();
  pending_.reset();
}

Action DqnAgent::select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) {
  const CandidateMatrix m = build_matrix(obs, valid, executed_, host_count_);
  if (pending_) {
    pending_->next = m.unique.cast<float>();
    pending_->next_rows = m.row_of;
    pending_->next_types = types_of(m.actions);
    store(std::move(*pending_), pending_mirror_);
    pending_.reset();
  }
  const std::size_t i = dqn_select(m, q_, epsilon_, rng);
  executed_.insert(m.actions[i]);
  if (!frozen()) {
    Transition t;
    t.s = m.features.row(static_cast<Eigen::Index>(i)).cast<float>();
    t.a = static_cast<int>(index_of(m.actions[i].type));
    pending_ = std::move(t);
  }
  return m.actions[i];
}

void DqnAgent::observe(const Action& /*action*/, const StepResult& result) {
  if (!pending_) return;
  pending_->r = static_cast<float>(result.reward);
  pending_mirror_ = result.progressed || result.end_reason == EndReason::Success;
  if (result.ended) {
    pending_->done = true;
    store(std::move(*pending_), pending_mirror_);
    pending_.reset();
  }
  maybe_train();
}

void DqnAgent::store(Transition t, bool mirror) {
  if (config_.dual && mirror) succ_.push(t);
  all_.push(std::move(t));
}

void DqnAgent::maybe_train() {
  if (frozen()) return;
  ++env_steps_;
  if (all_.size() < config_.min_replay || env_steps_ % config_.train_every != 0) return;
  const int from_succ =
      config_.dual && !succ_.empty() ? static_cast<int>(std::lround(config_.batch * config_.succ_fraction)) : 0;
  std::vector<const Transition*> batch;
  batch.reserve(static_cast<std::size_t>(config_.batch));
  for (int k = 0; k < config_.batch - from_succ; ++k) batch.push_back(&all_.sample(train_rng_));
  for (int k = 0; k < from_succ; ++k) batch.push_back(&succ_.sample(train_rng_));
  loss_sum_ += td_update(batch, q_, target_, config_.gamma, adam_);
  ++loss_count_;
  if (++updates_ % config_.target_sync == 0) target_ = q_;
}

double DqnAgent::take_loss() {
  const double out = loss_count_ > 0 ? loss_sum_ / loss_count_ : 0.0;
  loss_sum_ = 0.0;
  loss_count_ = 0;
  return out;
}

json DqnAgent::to_json() const {
  return json{{"agent", "dqn"},
              {"dual", config_.dual},
              {"hidden", config_.hidden},
              {"gamma", config_.gamma},
              {"lr", config_.lr},
              {"batch", config_.batch},
              {"capacity", config_.capacity},
              {"succ_capacity", config_.succ_capacity},
              {"min_replay", config_.min_replay},
              {"target_sync", config_.target_sync},
              {"train_every", config_.train_every},
              {"succ_fraction", config_.succ_fraction},
              {"q", q_.to_json()}};
}

DqnAgent DqnAgent::from_json(const json& doc) {
  if (doc.value("agent", std::string()) != "dqn") throw std::invalid_argument("not a dqn checkpoint");
  DqnConfig cfg;
  cfg.dual = doc.at("dual").get<bool>();
  cfg.hidden = doc.at("hidden").get<int>();
  cfg.gamma = doc.at("gamma").get<double>();
  cfg.lr = doc.at("lr").get<double>();
  cfg.batch = doc.at("batch").get<int>();
  cfg.capacity = doc.at("capacity").get<std::size_t>();
  cfg.succ_capacity = doc.at("succ_capacity").get<std::size_t>();
  cfg.min_replay = doc.at("min_replay").get<std::size_t>();
  cfg.target_sync = doc.at("target_sync").get<int>();
  cfg.train_every = doc.at("train_every").get<int>();
  cfg.succ_fraction = doc.at("succ_fraction").get<double>();
  DqnAgent agent(cfg, 0);
  agent.q_ = Mlp<float>::from_json(doc.at("q"));
  if (agent.q_.sizes() != std::vector<int>{kFeatureDim, cfg.hidden, cfg.hidden, static_cast<int>(kActionTypeCount)}) {
    throw std::invalid_argument("dqn checkpoint: network shape mismatch");
  }
  agent.target_ = agent.q_;
  agent.adam_ = Adam<float>(agent.q_, cfg.lr);
  return agent;
}

std::vector<TrainingRow> train_dqn(DqnAgent& agent, const std::vector<std::shared_ptr<const Topology>>& variants,
                                   const DqnTraining& schedule, std::uint64_t seed) {
  return train_loop(agent, variants, schedule, seed);
}

// ---------------------------------------------------------------------------

Eigen::VectorXf hash_embedding(const Observation& obs, int dim) {
  if (dim <= 0) throw std::invalid_argument("embedding dimension must be positive");
  Eigen::VectorXf out = Eigen::VectorXf::Zero(dim);
  const std::string text = to_json(obs).dump();
  auto is_sep = [](char c) {
    return c == '{' || c == '}' || c == '[' || c == ']' || c == '"' || c == ',' || c == ':' || c == ' ';
  };
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_sep(text[i])) ++i;
    if (i >= text.size()) break;
    std::uint64_t h = 14695981039346656037ULL;
    while (i < text.size() && !is_sep(text[i])) {
      h ^= static_cast<unsigned char>(text[i++]);
      h *= 1099511628211ULL;
    }
    out(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim))) += (h >> 63) != 0 ? -1.0f : 1.0f;
  }
  const float norm = out.norm();
  if (norm > 0.0f) out /= norm;
  return out;
}

double ddqn_shaped_reward(double env_reward, bool state_changed) {
  return (env_reward + (state_changed ? 50.0 : -50.0)) / 10.0;
}

namespace {

std::vector<int> ddqn_sizes(const DdqnConfig& cfg) {
  std::vector<int> sizes{cfg.embedding_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(cfg.actions);
  return sizes;
}

}  // namespace

DdqnAgent::DdqnAgent(DdqnConfig config, std::uint64_t seed)
    : config_(config),
      q_(init_qnet(ddqn_sizes(config), seed)),
      target_(q_),
      adam_(q_, config.lr),
      all_(config.capacity),
      succ_(config.succ_capacity),
      train_rng_(derive_seed(seed, 1)) {}

void DdqnAgent::episode_start(const Topology& topology, const Observation& /*obs*/) {
  catalogue_ = enumerate_catalogue(topology);
  std::sort(catalogue_.begin(), catalogue_.end());
  if (static_cast<int>(catalogue_.size()) != config_.actions) {
    throw std::invalid_argument("ddqn: catalogue has " + std::to_string(catalogue_.size()) +
                                " actions but the network was built for " + std::to_string(config_.actions));
  }
  pending_.reset();
}

std::vector<int> DdqnAgent::mask(const std::vector<Action>& valid) const {
  std::vector<int> out;
  out.reserve(valid.size());
  for (const auto& a : valid) {
    const auto it = std::lower_bound(catalogue_.begin(), catalogue_.end(), a);
    if (it != catalogue_.end() && *it == a) out.push_back(static_cast<int>(it - catalogue_.begin()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Action DdqnAgent::select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) {
  Eigen::VectorXf emb = hash_embedding(obs, config_.embedding_dim);
  std::vector<int> allowed = mask(valid);
  if (allowed.empty()) throw std::invalid_argument("ddqn: no valid action is in the catalogue");
  if (pending_) {
    pending_->next = emb;
    pending_->next_valid = allowed;
    if (pending_mirror_) succ_.push(*pending_);
    all_.push(std::move(*pending_));
    pending_.reset();
  }
  int chosen = allowed.front();
  if (epsilon_ > 0.0 && rng.bernoulli(epsilon_)) {
    chosen = allowed[rng.uniform_index(allowed.size())];
  } else {
    const Eigen::MatrixXf out = q_.forward(emb.transpose());
    float best = -std::numeric_limits<float>::infinity();
    for (int a : allowed) {
      if (out(0, a) > best) {
        best = out(0, a);
        chosen = a;
      }
    }
  }
  if (!frozen()) {
    DdqnTransition t;
    t.s = std::move(emb);
    t.a = chosen;
    pending_ = std::move(t);
  }
  return catalogue_[static_cast<std::size_t>(chosen)];
}

void DdqnAgent::observe(const Action& /*action*/, const StepResult& result) {
  if (!pending_) return;
  pending_->r = static_cast<float>(ddqn_shaped_reward(result.reward, result.progressed));
  pending_mirror_ = result.progressed || result.end_reason == EndReason::Success;
  if (result.ended) {
    pending_->done = true;
    if (pending_mirror_) succ_.push(*pending_);
    all_.push(std::move(*pending_));
    pending_.reset();
  }
  maybe_train();
}

void DdqnAgent::maybe_train() {
  if (frozen()) return;
  ++env_steps_;
  if (all_.size() < config_.min_replay || env_steps_ % config_.train_every != 0) return;
  const int from_succ = !succ_.empty() ? static_cast<int>(std::lround(config_.batch * config_.succ_fraction)) : 0;
  std::vector<const DdqnTransition*> batch;
  for (int k = 0; k < config_.batch - from_succ; ++k) batch.push_back(&all_.sample(train_rng_));
  for (int k = 0; k < from_succ; ++k) batch.push_back(&succ_.sample(train_rng_));

  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXf s(n, config_.embedding_dim);
  Eigen::MatrixXf next = Eigen::MatrixXf::Zero(n, config_.embedding_dim);
  for (Eigen::Index b = 0; b < n; ++b) {
    s.row(b) = batch[static_cast<std::size_t>(b)]->s.transpose();
    if (!batch[static_cast<std::size_t>(b)]->done) next.row(b) = batch[static_cast<std::size_t>(b)]->next.transpose();
  }
  const Eigen::MatrixXf online_next = q_.forward(next);
  const Eigen::MatrixXf target_next = target_.forward(next);

  Mlp<float>::Tape tape;
  const Eigen::MatrixXf out = q_.forward(s, tape);
  Eigen::MatrixXf d = Eigen::MatrixXf::Zero(n, out.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto& t = *batch[static_cast<std::size_t>(b)];
    double y = t.r;
    if (!t.done && !t.next_valid.empty()) {
      int best = t.next_valid.front();
      for (int a : t.next_valid) {
        if (online_next(b, a) > online_next(b, best)) best = a;
      }
      y += config_.gamma * static_cast<double>(target_next(b, best));
    }
    const double diff = static_cast<double>(out(b, t.a)) - y;
    loss += diff * diff;
    d(b, t.a) = static_cast<float>(2.0 * diff / static_cast<double>(n));
  }
  adam_.step(q_, q_.backward(tape, d));
  loss_sum_ += loss / static_cast<double>(n);
  ++loss_count_;
  if (++updates_ % config_.target_sync == 0) target_ = q_;
}

double DdqnAgent::take_loss() {
  const double out = loss_count_ > 0 ? loss_sum_ / loss_count_ : 0.0;
  loss_sum_ = 0.0;
  loss_count_ = 0;
  return out;
}

json DdqnAgent::to_json() const {
  return json{{"agent", "ddqn"},
              {"embedding_dim", config_.embedding_dim},
              {"hidden", config_.hidden},
              {"gamma", config_.gamma},
              {"lr", config_.lr},
              {"batch", config_.batch},
              {"capacity", config_.capacity},
              {"succ_capacity", config_.succ_capacity},
              {"min_replay", config_.min_replay},
              {"target_sync", config_.target_sync},
              {"train_every", config_.train_every},
              {"succ_fraction", config_.succ_fraction},
              {"actions", config_.actions},
              {"q", q_.to_json()}};
}

DdqnAgent DdqnAgent::from_json(const json& doc) {
  if (doc.value("agent", std::string()) != "ddqn") throw std::invalid_argument("not a ddqn checkpoint");
  DdqnConfig cfg;
  cfg.embedding_dim = doc.at("embedding_dim").get<int>();
  cfg.hidden = doc.at("hidden").get<std::vector<int>>();
  cfg.gamma = doc.at("gamma").get<double>();
  cfg.lr = doc.at("lr").get<double>();
  cfg.batch = doc.at("batch").get<int>();
  cfg.capacity = doc.at("capacity").get<std::size_t>();
  cfg.succ_capacity = doc.at("succ_capacity").get<std::size_t>();
  cfg.min_replay = doc.at("min_replay").get<std::size_t>();
  cfg.target_sync = doc.at("target_sync").get<int>();
  cfg.train_every = doc.at("train_every").get<int>();
  cfg.succ_fraction = doc.at("succ_fraction").get<double>();
  cfg.actions = doc.at("actions").get<int>();
  DdqnAgent agent(cfg, 0);
  agent.q_ = Mlp<float>::from_json(doc.at("q"));
  if (agent.q_.sizes() != ddqn_sizes(cfg)) throw std::invalid_argument("ddqn checkpoint: network shape mismatch");
  agent.target_ = agent.q_;
  agent.adam_ = Adam<float>(agent.q_, cfg.lr);
  return agent;
}

std::vector<TrainingRow> train_ddqn(DdqnAgent& agent, const std::vector<std::shared_ptr<const Topology>>& variants,
                                    const DqnTraining& schedule, std::uint64_t seed) {
  return train_loop(agent, variants, schedule, seed);
}

}  // namespace nsg
