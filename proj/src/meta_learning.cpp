#include "nsg/meta_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace nsg {

Mlp<float> make_policy_net(std::uint64_t seed, int hidden) {
  Rng rng(derive_seed(seed, 0));
  return Mlp<float>::init({kFeatureDim, hidden, hidden, static_cast<int>(kActionTypeCount)}, rng);
}

namespace {

Eigen::Index row_index(const std::vector<int>& rows, std::size_t i) {
  return rows.empty() ? static_cast<Eigen::Index>(i) : static_cast<Eigen::Index>(rows[i]);
}

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> gather_scores(const typename Mlp<S>::Matrix& out, const std::vector<int>& rows,
                                                  const std::vector<std::uint8_t>& types, Eigen::Index offset) {
  Eigen::Matrix<S, Eigen::Dynamic, 1> scores(static_cast<Eigen::Index>(types.size()));
  for (std::size_t i = 0; i < types.size(); ++i) {
    scores(static_cast<Eigen::Index>(i)) = out(offset + row_index(rows, i), types[i]);
  }
  return scores;
}

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> softmax(const Eigen::Matrix<S, Eigen::Dynamic, 1>& scores) {
  Eigen::Matrix<S, Eigen::Dynamic, 1> p = (scores.array() - scores.maxCoeff()).exp();
  return p / p.sum();
}

std::vector<std::uint8_t> types_of(const std::vector<Action>& actions) {
  std::vector<std::uint8_t> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(static_cast<std::uint8_t>(index_of(a.type)));
  return out;
}

}  // namespace

template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> policy_distribution(const Mlp<S>& net, const CandidateRows<S>& x,
                                                        const std::vector<int>& rows,
                                                        const std::vector<std::uint8_t>& types) {
  if (x.rows() == 0 || types.empty()) throw std::invalid_argument("policy_distribution: empty candidate matrix");
  if (rows.empty() ? static_cast<std::size_t>(x.rows()) != types.size() : rows.size() != types.size()) {
    throw std::invalid_argument("policy_distribution: row/type mismatch");
  }
  return softmax<S>(gather_scores<S>(net.forward(x), rows, types, 0));
}

Eigen::VectorXd policy_distribution(const Mlp<float>& net, const CandidateMatrix& matrix) {
  if (matrix.empty()) throw std::invalid_argument("policy_distribution: empty candidate matrix");
  return policy_distribution<double>(net.cast<double>(), matrix.unique, matrix.row_of, types_of(matrix.actions));
}

template <typename S>
double reinforce_loss(const std::vector<PolicySample<S>>& samples, const Mlp<S>& net, Mlp<S>* grad) {
  using M = typename Mlp<S>::Matrix;
  if (samples.empty()) throw std::invalid_argument("reinforce_loss: no samples");
  Eigen::Index total = 0;
  for (const auto& s : samples) total += s.x.rows();
  M x(total, kFeatureDim);
  Eigen::Index off = 0;
  for (const auto& s : samples) {
    x.middleRows(off, s.x.rows()) = s.x;
    off += s.x.rows();
  }
  typename Mlp<S>::Tape tape;
  const M out = net.forward(x, tape);
  M d = M::Zero(total, out.cols());
  const double n = static_cast<double>(samples.size());
  double loss = 0.0;
  off = 0;
  for (const auto& s : samples) {
    const auto p = softmax<S>(gather_scores<S>(out, s.rows, s.types, off));
    loss -= s.weight * std::log(static_cast<double>(p(s.chosen)));
    // d(-w log p_c)/d score_i = w (p_i - [i == c])
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double g = s.weight * (static_cast<double>(p(i)) - (i == s.chosen ? 1.0 : 0.0)) / n;
      const auto k = static_cast<std::size_t>(i);
      d(off + row_index(s.rows, k), s.types[k]) += static_cast<S>(g);
    }
    off += s.x.rows();
  }
  if (grad != nullptr) *grad = net.backward(tape, d);
  return loss / n;
}

template Eigen::Matrix<float, Eigen::Dynamic, 1> policy_distribution<float>(const Mlp<float>&,
                                                                            const CandidateRows<float>&,
                                                                            const std::vector<int>&,
                                                                            const std::vector<std::uint8_t>&);
template Eigen::Matrix<double, Eigen::Dynamic, 1> policy_distribution<double>(const Mlp<double>&,
                                                                              const CandidateRows<double>&,
                                                                              const std::vector<int>&,
                                                                              const std::vector<std::uint8_t>&);
template double reinforce_loss<float>(const std::vector<PolicySample<float>>&, const Mlp<float>&, Mlp<float>*);
template double reinforce_loss<double>(const std::vector<PolicySample<double>>&, const Mlp<double>&, Mlp<double>*);

// ---------------------------------------------------------------------------

void PolicyAgent::episode_start(const Topology& topology, const Observation& /*obs*/) {
  host_count_ = host_count(topology);
  executed_.clear();
  steps_.clear();
}

Action PolicyAgent::select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) {
  const CandidateMatrix m = build_matrix(obs, valid, executed_, host_count_);
  Step step;
  step.sample.x = m.unique.cast<float>();
  step.sample.rows = m.row_of;
  step.sample.types = types_of(m.actions);
  const Eigen::VectorXf p = policy_distribution<float>(net_, step.sample.x, step.sample.rows, step.sample.types);
  std::size_t i = 0;
  if (greedy_) {
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    i = static_cast<std::size_t>(best);
  } else {
    const std::vector<double> w(p.data(), p.data() + p.size());
    i = rng.categorical(w);
  }
  step.sample.chosen = static_cast<int>(i);
  steps_.push_back(std::move(step));
  executed_.insert(m.actions[i]);
  return m.actions[i];
}

void PolicyAgent::observe(const Action& /*action*/, const StepResult& result) {
  if (!steps_.empty()) steps_.back().reward = result.reward;
}

// ---------------------------------------------------------------------------

void MetaConfig::validate() const {
  if (tasks_per_epoch <= 0 || support_episodes <= 0 || inner_steps <= 0 || query_episodes <= 0 || epochs < 0 ||
      test_support_per_step <= 0 || test_query <= 0 || hidden <= 0) {
    throw std::invalid_argument("meta config: counts must be positive");
  }
  if (support_episodes % inner_steps != 0) {
    throw std::invalid_argument("meta config: support_episodes must be a multiple of inner_steps");
  }
  if (inner_lr < 0 || outer_lr < 0 || reptile_step < 0) throw std::invalid_argument("meta config: negative rate");
}

json MetaConfig::to_json() const {
  return json{{"tasks_per_epoch", tasks_per_epoch}, {"support_episodes", support_episodes},
              {"inner_steps", inner_steps},         {"query_episodes", query_episodes},
              {"inner_lr", inner_lr},               {"outer_lr", outer_lr},
              {"reptile_step", reptile_step},       {"epochs", epochs},
              {"test_support_per_step", test_support_per_step},
              {"test_query", test_query},           {"gamma", gamma},
              {"reward_scale", reward_scale},       {"hidden", hidden},
              {"eval_every", eval_every},           {"eval_episodes", eval_episodes}};
}

MetaConfig MetaConfig::from_json(const json& doc) {
  MetaConfig c;
  c.tasks_per_epoch = doc.value("tasks_per_epoch", c.tasks_per_epoch);
  c.support_episodes = doc.value("support_episodes", c.support_episodes);
  c.inner_steps = doc.value("inner_steps", c.inner_steps);
  c.query_episodes = doc.value("query_episodes", c.query_episodes);
  c.inner_lr = doc.value("inner_lr", c.inner_lr);
  c.outer_lr = doc.value("outer_lr", c.outer_lr);
  c.reptile_step = doc.value("reptile_step", c.reptile_step);
  c.epochs = doc.value("epochs", c.epochs);
  c.test_support_per_step = doc.value("test_support_per_step", c.test_support_per_step);
  c.test_query = doc.value("test_query", c.test_query);
  c.gamma = doc.value("gamma", c.gamma);
  c.reward_scale = doc.value("reward_scale", c.reward_scale);
  c.hidden = doc.value("hidden", c.hidden);
  c.eval_every = doc.value("eval_every", c.eval_every);
  c.eval_episodes = doc.value("eval_episodes", c.eval_episodes);
  c.validate();
  return c;
}

double Rollouts::win_rate() const {
  if (traces.empty()) return 0.0;
  const auto wins = std::count_if(traces.begin(), traces.end(), [](const EpisodeTrace& t) { return t.won(); });
  return 100.0 * static_cast<double>(wins) / static_cast<double>(traces.size());
}

Rollouts collect_rollouts(const Mlp<float>& net, const TaskSpec& task, int episodes, const MetaConfig& cfg,
                          std::uint64_t stream) {
  Rollouts out;
  PolicyAgent agent(net);
  agent.set_frozen(true);
  const std::uint64_t seed = derive_seed(task.seed, stream);
  std::vector<double> returns;
  for (int e = 0; e < episodes; ++e) {
    out.traces.push_back(run_episode(task.topology, agent, derive_seed(seed, static_cast<std::uint64_t>(e)), e));
    const auto& steps = agent.steps();
    std::vector<double> g(steps.size());
    double acc = 0.0;
    for (std::size_t t = steps.size(); t-- > 0;) {
      acc = cfg.reward_scale * steps[t].reward + cfg.gamma * acc;
      g[t] = acc;
    }
    for (std::size_t t = 0; t < steps.size(); ++t) {
      out.samples.push_back(steps[t].sample);
      returns.push_back(g[t]);
    }
  }
  if (!returns.empty()) {
    double baseline = 0.0;
    for (double r : returns) baseline += r;
    baseline /= static_cast<double>(returns.size());
    for (std::size_t i = 0; i < returns.size(); ++i) out.samples[i].weight = returns[i] - baseline;
  }
  return out;
}

Mlp<float> inner_adapt(const Mlp<float>& net, const TaskSpec& task, const MetaConfig& cfg, int episodes_per_step,
                       int steps) {
  Mlp<float> adapted = net;
  for (int k = 0; k < steps; ++k) {
    const Rollouts r = collect_rollouts(adapted, task, episodes_per_step, cfg, static_cast<std::uint64_t>(k));
    if (r.samples.empty()) continue;
    Mlp<float> grad;
    reinforce_loss(r.samples, adapted, &grad);
    adapted.axpy(static_cast<float>(-cfg.inner_lr), grad);
  }
  return adapted;
}

namespace {

// Query rollouts use a stream disjoint from the support steps.
constexpr std::uint64_t kQueryStream = 1'000'000;

}  // namespace

MetaStepStats maml_outer_step(Mlp<float>& net, Adam<float>& optimizer, const std::vector<TaskSpec>& tasks,
                              const MetaConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("maml_outer_step: no tasks");
  Mlp<float> meta_grad = net.zeros_like();
  MetaStepStats stats;
  for (const auto& task : tasks) {
    const Mlp<float> adapted = inner_adapt(net, task, cfg);
    const Rollouts q = collect_rollouts(adapted, task, cfg.query_episodes, cfg, kQueryStream);
    Mlp<float> grad;
    stats.meta_loss += reinforce_loss(q.samples, adapted, &grad);
    stats.query_win_rate += q.win_rate();
    meta_grad.axpy(1.0f / static_cast<float>(tasks.size()), grad);
  }
  stats.meta_loss /= static_cast<double>(tasks.size());
  stats.query_win_rate /= static_cast<double>(tasks.size());
  optimizer.set_lr(cfg.outer_lr);
  optimizer.step(net, meta_grad);
  return stats;
}

MetaStepStats reptile_outer_step(Mlp<float>& net, const std::vector<TaskSpec>& tasks, const MetaConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("reptile_outer_step: no tasks");
  Mlp<float> delta = net.zeros_like();
  MetaStepStats stats;
  for (const auto& task : tasks) {
    const Mlp<float> adapted = inner_adapt(net, task, cfg);
    // Same episode budget as MAML; the query batch is only measured.
    const Rollouts q = collect_rollouts(adapted, task, cfg.query_episodes, cfg, kQueryStream);
    stats.meta_loss += reinforce_loss<float>(q.samples, adapted, nullptr);
    stats.query_win_rate += q.win_rate();
    delta.axpy(1.0f / static_cast<float>(tasks.size()), adapted).axpy(-1.0f / static_cast<float>(tasks.size()), net);
  }
  stats.meta_loss /= static_cast<double>(tasks.size());
  stats.query_win_rate /= static_cast<double>(tasks.size());
  net.axpy(static_cast<float>(cfg.reptile_step), delta);
  return stats;
}

std::vector<MetaCurveRow> meta_train(Mlp<float>& net, MetaMethod method,
                                     const std::vector<std::shared_ptr<const Topology>>& train,
                                     std::shared_ptr<const Topology> held_out, const MetaConfig& cfg,
                                     std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("meta_train: no training variants");
  Adam<float> optimizer(net, cfg.outer_lr);
  Rng sampler(derive_seed(seed, 0));
  std::vector<MetaCurveRow> rows;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(derive_seed(seed, 1), static_cast<std::uint64_t>(epoch));
    std::vector<TaskSpec> tasks;
    for (int k = 0; k < cfg.tasks_per_epoch; ++k) {
      // Cycle through the variants; sample when there are more tasks than variants.
      const std::size_t v = cfg.tasks_per_epoch == static_cast<int>(train.size())
                                ? static_cast<std::size_t>(k)
                                : sampler.uniform_index(train.size());
      tasks.push_back(TaskSpec{train[v], derive_seed(epoch_seed, static_cast<std::uint64_t>(k))});
    }
    const MetaStepStats s = method == MetaMethod::Maml ? maml_outer_step(net, optimizer, tasks, cfg)
                                                       : reptile_outer_step(net, tasks, cfg);
    MetaCurveRow row{epoch, s.meta_loss, s.query_win_rate, -1.0};
    if (held_out && cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)) {
      const Rollouts ev =
          collect_rollouts(net, TaskSpec{held_out, derive_seed(seed, 2)}, cfg.eval_episodes, cfg,
                           static_cast<std::uint64_t>(epoch));
      row.eval_win_rate = ev.win_rate();
    }
    rows.push_back(row);
  }
  return rows;
}

AdaptationResult test_time_adapt_and_eval(const Mlp<float>& net, const TaskSpec& task, const MetaConfig& cfg,
                                          bool adapt) {
  AdaptationResult out{adapt ? inner_adapt(net, task, cfg, cfg.test_support_per_step, cfg.inner_steps) : net, {}};
  PolicyAgent agent(out.adapted);
  agent.set_frozen(true);
  out.query = run_episodes(task.topology, agent, cfg.test_query, derive_seed(task.seed, kQueryStream));
  return out;
}

void write_meta_curve_csv(std::ostream& out, const std::vector<MetaCurveRow>& rows) {
  out << "epoch,meta_loss,query_win_rate,eval_win_rate\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.meta_loss << ',' << r.query_win_rate << ',';
    if (r.eval_win_rate >= 0.0) out << r.eval_win_rate;
    out << '\n';
  }
}

}  // namespace nsg
