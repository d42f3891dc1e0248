#include "nsg/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace nsg {

namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

namespace {

DqnConfig dqn_from_json(const json& j, DqnConfig c) {
  c.hidden = j.value("hidden", c.hidden);
  c.gamma = j.value("gamma", c.gamma);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.capacity = j.value("capacity", c.capacity);
  c.succ_capacity = j.value("succ_capacity", c.succ_capacity);
  c.min_replay = j.value("min_replay", c.min_replay);
  c.target_sync = j.value("target_sync", c.target_sync);
  c.train_every = j.value("train_every", c.train_every);
  c.succ_fraction = j.value("succ_fraction", c.succ_fraction);
  return c;
}

json dqn_to_json(const DqnConfig& c, const DqnTraining& t) {
  return json{{"hidden", c.hidden},
              {"gamma", c.gamma},
              {"lr", c.lr},
              {"batch", c.batch},
              {"capacity", c.capacity},
              {"succ_capacity", c.succ_capacity},
              {"min_replay", c.min_replay},
              {"target_sync", c.target_sync},
              {"train_every", c.train_every},
              {"succ_fraction", c.succ_fraction},
              {"episodes_per_variant", t.episodes_per_variant},
              {"epsilon_decay_fraction", t.epsilon_decay_fraction},
              {"epsilon_start", t.epsilon_start},
              {"epsilon_end", t.epsilon_end}};
}

DqnTraining schedule_from_json(const json& j, DqnTraining t) {
  t.episodes_per_variant = j.value("episodes_per_variant", t.episodes_per_variant);
  t.epsilon_decay_fraction = j.value("epsilon_decay_fraction", t.epsilon_decay_fraction);
  t.epsilon_start = j.value("epsilon_start", t.epsilon_start);
  t.epsilon_end = j.value("epsilon_end", t.epsilon_end);
  return t;
}

DdqnConfig ddqn_from_json(const json& j, DdqnConfig c) {
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.gamma = j.value("gamma", c.gamma);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.capacity = j.value("capacity", c.capacity);
  c.succ_capacity = j.value("succ_capacity", c.succ_capacity);
  c.min_replay = j.value("min_replay", c.min_replay);
  c.target_sync = j.value("target_sync", c.target_sync);
  c.train_every = j.value("train_every", c.train_every);
  c.succ_fraction = j.value("succ_fraction", c.succ_fraction);
  return c;
}

json ddqn_to_json(const DdqnConfig& c, const DqnTraining& t) {
  return json{{"embedding_dim", c.embedding_dim},
              {"hidden", c.hidden},
              {"gamma", c.gamma},
              {"lr", c.lr},
              {"batch", c.batch},
              {"capacity", c.capacity},
              {"succ_capacity", c.succ_capacity},
              {"min_replay", c.min_replay},
              {"target_sync", c.target_sync},
              {"train_every", c.train_every},
              {"succ_fraction", c.succ_fraction},
              {"episodes_per_variant", t.episodes_per_variant},
              {"epsilon_decay_fraction", t.epsilon_decay_fraction},
              {"epsilon_start", t.epsilon_start},
              {"epsilon_end", t.epsilon_end}};
}

void write_training_csv(const fs::path& path, const std::vector<TrainingRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "variant,episode,win,return,steps,loss\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.episode << ',' << (r.win ? 1 : 0) << ',' << r.ret << ',' << r.steps << ',' << r.loss
        << '\n';
  }
}

bool is_meta(const std::string& agent) { return agent == "maml" || agent == "reptile"; }

std::uint64_t agent_stream(const std::string& agent) {
  const auto& names = registered_agents();
  return static_cast<std::uint64_t>(std::find(names.begin(), names.end(), agent) - names.begin());
}

}  // namespace

void ExperimentConfig::validate() const {
  if (variant_seeds.size() != 6) throw UsageError("config: variant_seeds must list exactly 6 seeds");
  if (eval_episodes <= 0 || eval_groups <= 0) throw UsageError("config: eval budget must be positive");
  if (eval_episodes % eval_groups != 0) throw UsageError("config: eval_episodes must be a multiple of eval_groups");
  if (dqn_training.episodes_per_variant <= 0 || ddqn_training.episodes_per_variant <= 0 ||
      conceptual_training.max_episodes_per_variant <= 0) {
    throw UsageError("config: training budgets must be positive");
  }
  meta.validate();
}

json ExperimentConfig::to_json() const {
  return json{{"name", name},
              {"scenario", scenario.string()},
              {"master_seed", master_seed},
              {"variant_seeds", variant_seeds},
              {"eval", {{"episodes", eval_episodes}, {"groups", eval_groups}}},
              {"dqn", dqn_to_json(dqn, dqn_training)},
              {"ddqn", ddqn_to_json(ddqn, ddqn_training)},
              {"conceptual",
               {{"alpha", conceptual.alpha},
                {"gamma", conceptual.gamma},
                {"epsilon_start", conceptual.epsilon_start},
                {"epsilon_end", conceptual.epsilon_end},
                {"max_episodes_per_variant", conceptual_training.max_episodes_per_variant},
                {"stop_win_rate", conceptual_training.stop_win_rate},
                {"eval_every", conceptual_training.eval_every},
                {"eval_episodes", conceptual_training.eval_episodes},
                {"epsilon_decay_episodes", conceptual_training.epsilon_decay_episodes}}},
              {"meta", meta.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base) {
  ExperimentConfig c;
  c.name = doc.value("name", c.name);
  const fs::path scenario = doc.value("scenario", c.scenario.string());
  c.scenario = scenario.is_absolute() || base.empty() ? scenario : base / scenario;
  c.master_seed = doc.value("master_seed", c.master_seed);
  c.variant_seeds = doc.value("variant_seeds", c.variant_seeds);
  if (doc.contains("eval")) {
    c.eval_episodes = doc["eval"].value("episodes", c.eval_episodes);
    c.eval_groups = doc["eval"].value("groups", c.eval_groups);
  }
  if (doc.contains("dqn")) {
    c.dqn = dqn_from_json(doc["dqn"], c.dqn);
    c.dqn_training = schedule_from_json(doc["dqn"], c.dqn_training);
  }
  if (doc.contains("ddqn")) {
    c.ddqn = ddqn_from_json(doc["ddqn"], c.ddqn);
    c.ddqn_training = schedule_from_json(doc["ddqn"], c.ddqn_training);
  }
  if (doc.contains("conceptual")) {
    const auto& j = doc["conceptual"];
    c.conceptual.alpha = j.value("alpha", c.conceptual.alpha);
    c.conceptual.gamma = j.value("gamma", c.conceptual.gamma);
    c.conceptual.epsilon_start = j.value("epsilon_start", c.conceptual.epsilon_start);
    c.conceptual.epsilon_end = j.value("epsilon_end", c.conceptual.epsilon_end);
    auto& t = c.conceptual_training;
    t.max_episodes_per_variant = j.value("max_episodes_per_variant", t.max_episodes_per_variant);
    t.stop_win_rate = j.value("stop_win_rate", t.stop_win_rate);
    t.eval_every = j.value("eval_every", t.eval_every);
    t.eval_episodes = j.value("eval_episodes", t.eval_episodes);
    t.epsilon_decay_episodes = j.value("epsilon_decay_episodes", t.epsilon_decay_episodes);
  }
  if (doc.contains("meta")) c.meta = MetaConfig::from_json(doc["meta"]);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

const std::vector<std::string>& registered_agents() {
  static const std::vector<std::string> names{"random", "oracle",     "external", "dqn_single", "dqn_dual",
                                              "ddqn",   "conceptual", "maml",     "reptile"};
  return names;
}

bool is_trainable(const std::string& agent) {
  return agent != "random" && agent != "oracle" && agent != "external";
}

Experiment::Experiment(ExperimentConfig config, const fs::path& out_root)
    : config_(std::move(config)), scenario_(load_scenario(config_.scenario)), dir_(out_root / config_.name) {
  config_.validate();
  for (std::size_t i = 0; i < config_.variant_seeds.size(); ++i) {
    IpAssignment a = generate_variant(scenario_, config_.variant_seeds[i]);
    a.variant_id = static_cast<std::int64_t>(i);
    variants_.push_back(std::make_shared<const Topology>(scenario_, a));
  }
}

std::vector<std::shared_ptr<const Topology>> Experiment::train_variants() const {
  return {variants_.begin(), variants_.begin() + ExperimentConfig::kTestVariant};
}

fs::path Experiment::ensure(const std::string& sub) const {
  const fs::path p = dir_ / sub;
  fs::create_directories(p);
  return p;
}

std::uint64_t Experiment::train_seed(const std::string& agent, std::optional<int> train_variant) const {
  const std::uint64_t base = derive_seed(derive_seed(config_.master_seed, 1), agent_stream(agent));
  return train_variant ? derive_seed(base, 100 + static_cast<std::uint64_t>(*train_variant)) : base;
}

std::uint64_t Experiment::eval_seed(int variant) const {
  // Shared by every agent so evaluations are paired.
  return derive_seed(derive_seed(config_.master_seed, 2), static_cast<std::uint64_t>(variant));
}

std::string Experiment::checkpoint_stem(const std::string& agent, std::optional<int> train_variant) {
  return train_variant ? agent + "_t" + std::to_string(*train_variant) : agent;
}

std::vector<fs::path> Experiment::gen_variants() const {
  const fs::path dir = ensure("variants");
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < variants_.size(); ++i) {
    const fs::path p = dir / ("variant_" + std::to_string(i) + ".json");
    IpAssignment a = generate_variant(scenario_, config_.variant_seeds[i]);
    a.variant_id = static_cast<std::int64_t>(i);
    json doc = to_json(a);
    doc["seed"] = config_.variant_seeds[i];
    doc["role"] = static_cast<int>(i) == ExperimentConfig::kTestVariant ? "test" : "train";
    write_json_file(p, doc);
    out.push_back(p);
  }
  return out;
}

fs::path Experiment::train(const std::string& agent, std::optional<int> episodes,
                           std::optional<int> train_variant) const {
  const auto& names = registered_agents();
  if (std::find(names.begin(), names.end(), agent) == names.end()) throw UsageError("unknown agent: " + agent);
  if (!is_trainable(agent)) throw UsageError("agent is not trainable: " + agent);
  if (episodes && *episodes <= 0) throw UsageError("training budget must be positive");
  if (train_variant && (*train_variant < 0 || *train_variant >= static_cast<int>(variants_.size()))) {
    throw UsageError("train variant out of range");
  }
  const auto train_set =
      train_variant ? std::vector<std::shared_ptr<const Topology>>{variants_[static_cast<std::size_t>(*train_variant)]}
                    : train_variants();
  const std::uint64_t seed = train_seed(agent, train_variant);
  const std::string stem = checkpoint_stem(agent, train_variant);
  const fs::path ckpt = ensure("checkpoints") / (stem + ".json");
  const fs::path curve = ensure("metrics") / (stem + "_train.csv");

  json doc;
  if (agent == "dqn_single" || agent == "dqn_dual") {
    DqnConfig cfg = config_.dqn;
    cfg.dual = agent == "dqn_dual";
    DqnTraining schedule = config_.dqn_training;
    if (episodes) schedule.episodes_per_variant = *episodes;
    DqnAgent a(cfg, seed);
    write_training_csv(curve, train_dqn(a, train_set, schedule, seed));
    doc = a.to_json();
  } else if (agent == "ddqn") {
    DdqnConfig cfg = config_.ddqn;
    cfg.actions = static_cast<int>(enumerate_catalogue(*train_set.front()).size());
    DqnTraining schedule = config_.ddqn_training;
    if (episodes) schedule.episodes_per_variant = *episodes;
    DdqnAgent a(cfg, seed);
    write_training_csv(curve, train_ddqn(a, train_set, schedule, seed));
    doc = a.to_json();
  } else if (agent == "conceptual") {
    ConceptualTraining schedule = config_.conceptual_training;
    if (episodes) schedule.max_episodes_per_variant = *episodes;
    ConceptualAgent a(config_.conceptual);
    write_training_csv(curve, train_conceptual(a, train_set, schedule, seed));
    doc = a.to_json();
  } else {
    MetaConfig cfg = config_.meta;
    // --episodes counts meta-training episodes; one epoch uses tasks * (support + query).
    if (episodes) {
      cfg.epochs = std::max(1, *episodes / (cfg.tasks_per_epoch * (cfg.support_episodes + cfg.query_episodes)));
    }
    Mlp<float> net = make_policy_net(seed, cfg.hidden);
    const auto rows = meta_train(net, agent == "maml" ? MetaMethod::Maml : MetaMethod::Reptile, train_set,
                                 variants_[ExperimentConfig::kTestVariant], cfg, seed);
    std::ofstream out(curve, std::ios::binary);
    write_meta_curve_csv(out, rows);
    doc = json{{"agent", agent}, {"config", cfg.to_json()}, {"net", net.to_json()}};
  }
  doc["trained_on"] = json::array();
  for (const auto& t : train_set) doc["trained_on"].push_back(t->assignment().variant_id);
  doc["seed"] = seed;
  write_json_file(ckpt, doc);
  return ckpt;
}

RunMetrics Experiment::eval(const std::string& agent, const EvalOptions& options) const {
  const auto& names = registered_agents();
  if (std::find(names.begin(), names.end(), agent) == names.end()) throw UsageError("unknown agent: " + agent);
  if (options.variant < 0 || options.variant >= static_cast<int>(variants_.size())) {
    throw UsageError("eval variant out of range");
  }
  const auto topology = variants_[static_cast<std::size_t>(options.variant)];
  const int groups = config_.eval_groups;
  int episodes = options.episodes.value_or(is_meta(agent) ? config_.meta.test_query * groups : config_.eval_episodes);
  if (episodes <= 0) throw UsageError("episode budget must be positive");
  episodes = std::max(groups, episodes - episodes % groups);
  const int per_group = episodes / groups;

  json ckpt;
  if (is_trainable(agent)) {
    const fs::path path = options.checkpoint.value_or(dir_ / "checkpoints" /
                                                      (checkpoint_stem(agent, options.train_variant) + ".json"));
    if (!fs::exists(path)) throw UsageError("missing checkpoint " + path.string() + " (run train first)");
    ckpt = read_json_file(path);
  }

  std::vector<EpisodeTrace> traces;
  const std::uint64_t seed = eval_seed(options.variant);
  auto run_groups = [&](Agent& a) {
    a.set_frozen(true);
    for (int g = 0; g < groups; ++g) {
      auto batch = run_episodes(topology, a, per_group, derive_seed(seed, static_cast<std::uint64_t>(g)),
                                static_cast<std::uint64_t>(g));
      traces.insert(traces.end(), batch.begin(), batch.end());
    }
  };

  try {
    if (agent == "random") {
      RandomAgent a;
      run_groups(a);
    } else if (agent == "oracle") {
      OracleAgent a(scenario_.goal_host());
      run_groups(a);
    } else if (agent == "external") {
      if (options.external == nullptr) throw UsageError("external agent needs --agent-cmd");
      run_groups(*options.external);
    } else if (agent == "dqn_single" || agent == "dqn_dual") {
      DqnAgent a = DqnAgent::from_json(ckpt);
      if (a.config().dual != (agent == "dqn_dual")) throw UsageError("checkpoint/agent mismatch");
      run_groups(a);
    } else if (agent == "ddqn") {
      DdqnAgent a = DdqnAgent::from_json(ckpt);
      run_groups(a);
    } else if (agent == "conceptual") {
      ConceptualAgent a = ConceptualAgent::from_json(ckpt);
      run_groups(a);
    } else {
      if (ckpt.value("agent", std::string()) != agent) throw UsageError("checkpoint/agent mismatch");
      MetaConfig cfg = MetaConfig::from_json(ckpt.at("config"));
      cfg.test_query = per_group;
      const Mlp<float> net = Mlp<float>::from_json(ckpt.at("net"));
      for (int g = 0; g < groups; ++g) {
        auto res = test_time_adapt_and_eval(net, TaskSpec{topology, derive_seed(seed, static_cast<std::uint64_t>(g))},
                                            cfg, options.adapt);
        for (auto& t : res.query) t.group = static_cast<std::uint64_t>(g);
        traces.insert(traces.end(), res.query.begin(), res.query.end());
      }
    }
  } catch (const std::invalid_argument& e) {
    if (is_trainable(agent)) throw UsageError(std::string("checkpoint/agent mismatch: ") + e.what());
    throw;
  }

  std::string tag = checkpoint_stem(agent, options.train_variant) + "_v" + std::to_string(options.variant);
  if (is_meta(agent) && !options.adapt) tag += "_noadapt";
  {
    std::ofstream out(ensure("traces") / (tag + ".jsonl"), std::ios::binary);
    write_traces_jsonl(out, traces);
  }
  const RunMetrics m = compute_metrics(traces);
  json doc = to_json(m);
  doc["agent"] = agent;
  doc["variant"] = options.variant;
  if (options.train_variant) doc["train_variant"] = *options.train_variant;
  if (is_meta(agent)) doc["adapt"] = options.adapt;
  write_json_file(ensure("metrics") / (tag + ".json"), doc);
  return m;
}

std::vector<std::pair<std::string, RunMetrics>> Experiment::analyze(const std::vector<fs::path>& inputs) const {
  if (inputs.empty()) throw UsageError("analyze needs at least one trace file or directory");
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.path().extension() == ".jsonl") found.push_back(e.path());
      }
      if (found.empty()) throw UsageError("no traces in " + in.string());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw UsageError("missing traces: " + in.string());
    }
  }
  const fs::path figures = ensure("figures");
  std::vector<std::pair<std::string, RunMetrics>> rows;
  for (const auto& f : files) {
    std::ifstream in(f);
    const auto traces = read_traces_jsonl(in);
    if (traces.empty()) throw UsageError("no traces in " + f.string());
    const std::string stem = f.stem().string();
    write_signature_files(figures / stem, compute_signature(traces), stem);
    rows.emplace_back(stem, compute_metrics(traces));
  }
  std::ofstream out(ensure("metrics") / "comparison.csv", std::ios::binary);
  write_comparison_csv(out, rows);
  return rows;
}

void Experiment::oracle_check() const {
  OracleAgent oracle(scenario_.goal_host());
  for (const auto& t : variants_) {
    const auto trace = run_episode(t, oracle, derive_seed(config_.master_seed, 3));
    if (!trace.won() || trace.length() != 5 || trace.total_return() != 95.0) {
      std::ostringstream msg;
      msg << "oracle failed on variant " << t->assignment().variant_id << ": won=" << trace.won()
          << " steps=" << trace.length() << " return=" << trace.total_return();
      throw ProtocolError(msg.str());
    }
  }
}

}  // namespace nsg
