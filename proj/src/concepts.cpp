#include "nsg/concepts.hpp"

#include <algorithm>
#include <limits>

namespace nsg {

namespace {

std::string kind_of(const std::string& label) { return label.substr(0, label.find('_')); }

std::string service_key(const ServiceRef& s) { return s.name + ":" + s.tag(); }

std::string join_tags(const std::set<ServiceRef>& services) {
  std::vector<std::pair<int, std::string>> tags;
  for (const auto& s : services) tags.emplace_back(s.port, s.tag());
  std::sort(tags.begin(), tags.end());
  std::string out;
  for (const auto& [_, t] : tags) out += (out.empty() ? "" : "_") + t;
  return out;
}

bool is_external_net(const std::string& label) { return label == "external_net"; }

}  // namespace

bool is_private(Ipv4 ip) {
  static const Cidr pools[] = {Cidr::parse("10.0.0.0/8"), Cidr::parse("172.16.0.0/12"),
                               Cidr::parse("192.168.0.0/16")};
  return std::any_of(std::begin(pools), std::end(pools), [&](const Cidr& c) { return c.contains(ip); });
}

std::string ConceptState::digest() const {
  std::string out = "known=";
  for (const auto& [l, n] : known) out += l + "*" + std::to_string(n) + ",";
  out += "|ctrl=";
  for (const auto& [l, n] : controlled) out += l + "*" + std::to_string(n) + ",";
  out += "|data=";
  for (const auto& [l, items] : data) {
    out += l + "[";
    for (const auto& d : items) out += d.owner + "/" + d.id + ";";
    out += "],";
  }
  out += "|net=";
  for (const auto& [l, n] : networks) out += l + "*" + std::to_string(n) + ",";
  out += "|blk=";
  for (const auto& [a, b] : blocks) out += a + ">" + b + ",";
  return out;
}

ConceptView abstract_view(const Observation& obs) {
  ConceptView view;

  // Group hosts by kind and service surface; the ordinal k enumerates the
  // distinct surfaces of a kind in sorted order.
  std::map<Ipv4, std::pair<std::string, std::string>> signature;
  std::map<std::string, std::set<std::string>> surfaces;
  for (const auto& ip : obs.known_hosts) {
    const std::string kind = !is_private(ip) ? "external" : obs.controlled_hosts.contains(ip) ? "host" : "unknown";
    const auto it = obs.known_services.find(ip);
    const std::string tags = it == obs.known_services.end() ? "" : join_tags(it->second);
    signature[ip] = {kind, tags};
    surfaces[kind].insert(tags);
  }
  for (const auto& [ip, sig] : signature) {
    const auto& kinds = surfaces[sig.first];
    const auto k = std::distance(kinds.begin(), kinds.find(sig.second));
    std::string label = sig.first + "_" + std::to_string(k);
    if (!sig.second.empty()) label += "_" + sig.second;
    view.host_label[ip] = label;

    auto& st = view.state;
    ++st.known[label];
    if (obs.controlled_hosts.contains(ip)) ++st.controlled[label];
    if (const auto s = obs.known_services.find(ip); s != obs.known_services.end()) {
      for (const auto& svc : s->second) st.services[label].insert(svc.tag());
    }
    if (const auto d = obs.known_data.find(ip); d != obs.known_data.end() && !d->second.empty()) {
      st.data[label].insert(d->second.begin(), d->second.end());
    }
  }

  std::map<Cidr, int> counts;
  std::set<int> distinct;
  for (const auto& net : obs.known_networks) {
    if (!is_private(net.base)) continue;
    int n = 0;
    for (const auto& ip : obs.known_hosts) n += net.contains(ip) ? 1 : 0;
    counts[net] = n;
    distinct.insert(n);
  }
  for (const auto& net : obs.known_networks) {
    std::string label = "external_net";
    if (const auto it = counts.find(net); it != counts.end()) {
      const auto k = std::distance(distinct.begin(), distinct.find(it->second));
      label = "net_" + std::to_string(k) + "_" + std::to_string(it->second) + "hosts";
    }
    view.network_label[net] = label;
    ++view.state.networks[label];
  }

  for (const auto& [a, b] : obs.known_blocks) {
    view.state.blocks.emplace(view.host_label.at(a), view.host_label.at(b));
  }
  return view;
}

std::string ConceptAction::key() const {
  std::string out = to_string(type) + "|" + source + "|" + target;
  if (service) out += "|" + service_key(*service);
  if (data) out += "|" + data->owner + "/" + data->id;
  return out;
}

ConceptAction abstract_action(const ConceptView& view, const Action& action) {
  ConceptAction ca;
  ca.type = action.type;
  ca.source = view.host_label.at(action.source);
  ca.target = action.type == ActionType::ScanNetwork ? view.network_label.at(action.target_network)
                                                     : view.host_label.at(action.target_host);
  ca.service = action.service;
  ca.data = action.data;
  return ca;
}

std::vector<ConceptAction> concept_candidates(const ConceptView& view, const std::vector<Action>& valid) {
  std::set<ConceptAction> unique;
  for (const auto& a : valid) unique.insert(abstract_action(view, a));
  return {unique.begin(), unique.end()};
}

Action ground_action(const ConceptAction& ca, const ConceptView& view, const std::vector<Action>& valid, Rng& rng) {
  std::vector<const Action*> matches;
  for (const auto& a : valid) {
    if (abstract_action(view, a) == ca) matches.push_back(&a);
  }
  if (matches.empty()) throw GroundingError("no concrete action for " + ca.key());
  return *matches[rng.uniform_index(matches.size())];
}

Action ground_action(const ConceptAction& ca, const Observation& obs, Rng& rng) {
  return ground_action(ca, abstract_view(obs), valid_actions(obs), rng);
}

std::vector<ConceptAction> filter_concept_actions(const ConceptState& cs, const std::vector<ConceptAction>& candidates,
                                                  const ConceptHistory& history, const FilterOptions& options) {
  std::vector<ConceptAction> out;
  for (const auto& ca : candidates) {
    const std::string src_kind = kind_of(ca.source);
    const std::string tgt_kind = kind_of(ca.target);
    const bool tgt_controlled = cs.controlled.contains(ca.target);

    if (src_kind == "external") continue;
    if (ca.type == ActionType::ScanNetwork ? is_external_net(ca.target)
                                           : tgt_kind == "external" && ca.type != ActionType::ExfiltrateData) {
      continue;
    }
    if (cs.blocks.contains({ca.source, ca.target})) continue;
    if (history.contains({ca.type, ca.source, ca.target})) continue;

    switch (ca.type) {
      case ActionType::ScanNetwork:
        break;
      case ActionType::FindServices:
        if (cs.services.contains(ca.target)) continue;
        break;
      case ActionType::ExploitService:
        if (tgt_controlled || ca.target == ca.source) continue;
        break;
      case ActionType::FindData:
        if (!tgt_controlled || tgt_kind == "external" || cs.data.contains(ca.target)) continue;
        break;
      case ActionType::ExfiltrateData: {
        if (!ca.data || options.log_ids.contains(ca.data->id)) continue;
        if (!tgt_controlled || ca.target == ca.source) continue;
        const auto have = cs.data.find(ca.target);
        if (have != cs.data.end() && have->second.contains(*ca.data)) continue;
        break;
      }
    }
    out.push_back(ca);
  }
  return out;
}

double recompute_reward(double /*env_reward*/, EndReason end_reason, bool state_changed) {
  switch (end_reason) {
    case EndReason::Failure: return -1000.0;
    case EndReason::Success: return 1000.0;
    case EndReason::Timeout: return -100.0;
    case EndReason::None: break;
  }
  return state_changed ? -1.0 : -100.0;
}

// ---------------------------------------------------------------------------

double ConceptualAgent::q_value(const std::string& digest, const std::string& action_key) const {
  const auto s = q_.find(digest);
  if (s == q_.end()) return 0.0;
  const auto a = s->second.find(action_key);
  return a == s->second.end() ? 0.0 : a->second;
}

double ConceptualAgent::take_loss() {
  const double loss = td_count_ > 0 ? td_sq_sum_ / td_count_ : 0.0;
  td_sq_sum_ = 0.0;
  td_count_ = 0;
  return loss;
}

void ConceptualAgent::episode_start(const Topology&, const Observation&) {
  history_.clear();
  pending_.reset();
}

std::vector<ConceptAction> ConceptualAgent::options(const ConceptView& view, const std::vector<Action>& valid) const {
  auto all = concept_candidates(view, valid);
  auto kept = filter_concept_actions(view.state, all, history_, config_.filters);
  return kept.empty() ? all : kept;
}

void ConceptualAgent::td_update(double target) {
  double& q = q_[pending_->first][pending_->second];
  const double err = target - q;
  q += config_.alpha * err;
  td_sq_sum_ += err * err;
  ++td_count_;
}

Action ConceptualAgent::select(const Observation& obs, const std::vector<Action>& valid, Rng& rng) {
  if (valid.empty()) throw std::invalid_argument("conceptual agent: empty valid-action set");
  const ConceptView view = abstract_view(obs);
  const auto opts = options(view, valid);
  const std::string digest = view.state.digest();

  std::vector<double> values(opts.size());
  for (std::size_t i = 0; i < opts.size(); ++i) values[i] = q_value(digest, opts[i].key());

  if (pending_ && !frozen()) {
    td_update(pending_reward_ + config_.gamma * *std::max_element(values.begin(), values.end()));
  }

  std::size_t pick = 0;
  if (epsilon_ > 0.0 && rng.bernoulli(epsilon_)) {
    pick = rng.uniform_index(opts.size());
  } else {
    const double best = *std::max_element(values.begin(), values.end());
    std::vector<std::size_t> ties;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == best) ties.push_back(i);
    }
    pick = ties[rng.uniform_index(ties.size())];
  }

  const ConceptAction& ca = opts[pick];
  history_.emplace(ca.type, ca.source, ca.target);
  pending_ = std::make_pair(digest, ca.key());
  return ground_action(ca, view, valid, rng);
}

void ConceptualAgent::observe(const Action&, const StepResult& result) {
  const double r = recompute_reward(result.reward, result.end_reason, result.progressed);
  if (result.progressed) history_.clear();
  if (result.ended) {
    if (pending_ && !frozen()) td_update(r);
    pending_.reset();
  } else {
    pending_reward_ = r;
  }
}

json ConceptualAgent::to_json() const {
  json doc{{"agent", "conceptual"},
           {"alpha", config_.alpha},
           {"gamma", config_.gamma},
           {"epsilon_start", config_.epsilon_start},
           {"epsilon_end", config_.epsilon_end},
           {"log_ids", config_.filters.log_ids}};
  doc["q"] = json::object();
  for (const auto& [digest, row] : q_) {
    auto& r = doc["q"][digest] = json::object();
    for (const auto& [key, v] : row) r[key] = v;
  }
  return doc;
}

ConceptualAgent ConceptualAgent::from_json(const json& doc) {
  if (doc.value("agent", std::string()) != "conceptual") throw std::invalid_argument("not a conceptual checkpoint");
  ConceptualConfig cfg;
  cfg.alpha = doc.at("alpha").get<double>();
  cfg.gamma = doc.at("gamma").get<double>();
  cfg.epsilon_start = doc.at("epsilon_start").get<double>();
  cfg.epsilon_end = doc.at("epsilon_end").get<double>();
  cfg.filters.log_ids = doc.at("log_ids").get<std::set<std::string>>();
  ConceptualAgent agent(cfg);
  for (const auto& [digest, row] : doc.at("q").items()) {
    auto& r = agent.q_[digest];
    for (const auto& [key, v] : row.items()) r[key] = v.get<double>();
  }
  return agent;
}

std::vector<TrainingRow> train_conceptual(ConceptualAgent& agent,
                                          const std::vector<std::shared_ptr<const Topology>>& variants,
                                          const ConceptualTraining& schedule, std::uint64_t seed) {
  std::vector<TrainingRow> rows;
  const auto& cfg = agent.config();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::uint64_t vseed = derive_seed(seed, v);
    for (int e = 0; e < schedule.max_episodes_per_variant; ++e) {
      const double frac = schedule.epsilon_decay_episodes > 0
                              ? std::min(1.0, static_cast<double>(e) / schedule.epsilon_decay_episodes)
                              : 1.0;
      agent.set_frozen(false);
      agent.set_epsilon(cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start));
      const auto trace = run_episode(variants[v], agent, derive_seed(vseed, static_cast<std::uint64_t>(e)), e);
      rows.push_back(TrainingRow{static_cast<int>(v), e, trace.won(), trace.total_return(), trace.length(),
                                 agent.take_loss()});

      if (schedule.eval_every > 0 && (e + 1) % schedule.eval_every == 0) {
        agent.set_frozen(true);
        agent.set_epsilon(0.0);
        const auto evals = run_episodes(variants[v], agent, schedule.eval_episodes,
                                        derive_seed(vseed, 1'000'000'000ULL + static_cast<std::uint64_t>(e)));
        const auto wins = std::count_if(evals.begin(), evals.end(), [](const EpisodeTrace& t) { return t.won(); });
        agent.set_frozen(false);
        if (static_cast<double>(wins) >= schedule.stop_win_rate * schedule.eval_episodes) break;
      }
    }
  }
  agent.set_epsilon(0.0);
  return rows;
}

}  // namespace nsg
