#include "nsg/agents.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace nsg {

Action RandomAgent::select(const Observation&, const std::vector<Action>& valid, Rng& rng) {
  if (valid.empty()) throw std::invalid_argument("random agent: empty valid-action set");
  return valid[rng.uniform_index(valid.size())];
}

void OracleAgent::episode_start(const Topology& topology, const Observation& obs) {
  goal_host_ = topology.assignment().ip_of(goal_role_);
  cc_ = topology.goal_destination();
  server_net_ = topology.host(goal_host_).network;
  goal_data_ = topology.goal_data();
  // The foothold is the controlled host that is not the C&C.
  foothold_ = Ipv4{};
  for (const auto& ip : obs.controlled_hosts) {
    if (ip != cc_) foothold_ = ip;
  }
}

Action OracleAgent::select(const Observation& obs, const std::vector<Action>& valid, Rng&) {
  Action next;
  std::string stage;
  if (!obs.known_hosts.contains(goal_host_)) {
    next = Action::scan_network(foothold_, server_net_);
    stage = "ScanNetwork";
  } else if (!obs.known_services.contains(goal_host_)) {
    next = Action::find_services(foothold_, goal_host_);
    stage = "FindServices";
  } else if (!obs.controlled_hosts.contains(goal_host_)) {
    next = Action::exploit_service(foothold_, goal_host_, *obs.known_services.at(goal_host_).begin());
    stage = "ExploitService";
  } else if (!obs.known_data.contains(goal_host_) || !obs.known_data.at(goal_host_).contains(goal_data_)) {
    if (obs.known_data.contains(goal_host_)) {
      throw ProtocolError("oracle: goal data not found on " + goal_role_ + " at FindData step");
    }
    next = Action::find_data(foothold_, goal_host_);
    stage = "FindData";
  } else {
    next = Action::exfiltrate_data(goal_host_, cc_, goal_data_);
    stage = "ExfiltrateData";
  }
  if (!std::binary_search(valid.begin(), valid.end(), next)) {
    throw ProtocolError("oracle: plan step " + stage + " unavailable: " + next.str());
  }
  return next;
}

void ExternalAgent::episode_start(const Topology&, const Observation& obs) {
  out_ << json{{"event", "episode_start"}, {"observation", to_json(obs)}}.dump() << '\n';
  out_.flush();
}

Action ExternalAgent::select(const Observation& obs, const std::vector<Action>& valid, Rng&) {
  json request{{"observation", to_json(obs)}, {"valid_actions", json::array()}};
  for (const auto& a : valid) request["valid_actions"].push_back(to_json(a));
  out_ << request.dump() << '\n';
  out_.flush();

  std::string line;
  if (!std::getline(in_, line)) throw ProtocolError("external agent closed its output");
  const json reply = json::parse(line);
  if (reply.contains("action_index")) {
    const auto i = reply.at("action_index").get<long long>();
    if (i < 0 || static_cast<std::size_t>(i) >= valid.size()) {
      throw ProtocolError("external agent: action_index out of range");
    }
    return valid[static_cast<std::size_t>(i)];
  }
  return action_from_json(reply.at("action"));
}

void ExternalAgent::observe(const Action&, const StepResult& result) {
  out_ << json{{"event", "step"},
               {"reward", result.reward},
               {"ended", result.ended},
               {"end_reason", to_string(result.end_reason)}}
              .dump()
       << '\n';
  out_.flush();
}

void ExternalAgent::episode_end(const EpisodeTrace& trace) {
  out_ << json{{"event", "episode_end"}, {"won", trace.won()}, {"return", trace.total_return()}}.dump() << '\n';
  out_.flush();
}

EpisodeTrace run_episode(std::shared_ptr<const Topology> topology, Agent& agent, std::uint64_t episode_seed,
                         int episode_index, std::uint64_t group) {
  Game game(topology, derive_seed(episode_seed, 0));
  Rng rng(derive_seed(episode_seed, 1));
  agent.episode_start(game.topology(), game.observation());
  while (!game.ended()) {
    const auto valid = game.valid_actions();
    const Action action = agent.select(game.observation(), valid, rng);
    const StepResult result = game.step(action);
    agent.observe(action, result);
  }
  EpisodeTrace trace = std::move(game.trace());
  trace.episode = episode_index;
  trace.group = group;
  trace.variant_id = topology->assignment().variant_id;
  agent.episode_end(trace);
  return trace;
}

std::vector<EpisodeTrace> run_episodes(std::shared_ptr<const Topology> topology, Agent& agent, int episodes,
                                       std::uint64_t seed, std::uint64_t group) {
  std::vector<EpisodeTrace> out;
  out.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  for (int i = 0; i < episodes; ++i) {
    out.push_back(run_episode(topology, agent, derive_seed(seed, static_cast<std::uint64_t>(i)), i, group));
  }
  return out;
}

}  // namespace nsg
