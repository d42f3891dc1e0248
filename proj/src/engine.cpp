#include "nsg/engine.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>

namespace nsg {

namespace {

const std::array<const char*, kActionTypeCount> kTypeNames{
    "ScanNetwork", "FindServices", "FindData", "ExploitService", "ExfiltrateData"};

json service_json(const ServiceRef& svc) {
  return {{"name", svc.name}, {"port", svc.port}, {"protocol", svc.protocol}};
}

json data_json(const DataRef& data) { return {{"owner", data.owner}, {"id", data.id}}; }

ServiceRef service_from_json(const json& doc) {
  return ServiceRef{doc.at("name").get<std::string>(), doc.at("port").get<int>(),
                    doc.value("protocol", std::string("tcp"))};
}

DataRef data_from_json(const json& doc) {
  return DataRef{doc.at("owner").get<std::string>(), doc.at("id").get<std::string>()};
}

}  // namespace

std::string to_string(ActionType type) { return kTypeNames.at(index_of(type)); }

ActionType action_type_from_string(const std::string& text) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (text == kTypeNames[i]) return kActionTypes[i];
  }
  throw std::invalid_argument("unknown action type: " + text);
}

std::string ServiceRef::tag() const {
  std::string proto = protocol;
  for (auto& c : proto) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return "p" + std::to_string(port) + "/" + proto;
}

void Observation::check_invariants() const {
  for (const auto& ip : controlled_hosts) {
    if (!known_hosts.contains(ip)) throw ProtocolError("controlled host not known: " + ip.str());
  }
  for (const auto& [ip, _] : known_services) {
    if (!known_hosts.contains(ip)) throw ProtocolError("services of unknown host: " + ip.str());
  }
  for (const auto& [ip, _] : known_data) {
    if (!known_hosts.contains(ip)) throw ProtocolError("data of unknown host: " + ip.str());
  }
}

json to_json(const Observation& obs) {
  json doc;
  doc["known_networks"] = json::array();
  for (const auto& net : obs.known_networks) doc["known_networks"].push_back(net.str());
  doc["known_hosts"] = json::array();
  for (const auto& ip : obs.known_hosts) doc["known_hosts"].push_back(ip.str());
  doc["controlled_hosts"] = json::array();
  for (const auto& ip : obs.controlled_hosts) doc["controlled_hosts"].push_back(ip.str());
  doc["known_services"] = json::object();
  for (const auto& [ip, services] : obs.known_services) {
    auto& list = doc["known_services"][ip.str()] = json::array();
    for (const auto& svc : services) list.push_back(service_json(svc));
  }
  doc["known_data"] = json::object();
  for (const auto& [ip, items] : obs.known_data) {
    auto& list = doc["known_data"][ip.str()] = json::array();
    for (const auto& d : items) list.push_back(data_json(d));
  }
  doc["known_blocks"] = json::array();
  for (const auto& [a, b] : obs.known_blocks) doc["known_blocks"].push_back({a.str(), b.str()});
  return doc;
}

Observation observation_from_json(const json& doc) {
  Observation obs;
  for (const auto& n : doc.at("known_networks")) obs.known_networks.insert(Cidr::parse(n.get<std::string>()));
  for (const auto& h : doc.at("known_hosts")) obs.known_hosts.insert(Ipv4::parse(h.get<std::string>()));
  for (const auto& h : doc.at("controlled_hosts")) obs.controlled_hosts.insert(Ipv4::parse(h.get<std::string>()));
  for (const auto& [ip, list] : doc.at("known_services").items()) {
    auto& set = obs.known_services[Ipv4::parse(ip)];
    for (const auto& s : list) set.insert(service_from_json(s));
  }
  for (const auto& [ip, list] : doc.at("known_data").items()) {
    auto& set = obs.known_data[Ipv4::parse(ip)];
    for (const auto& d : list) set.insert(data_from_json(d));
  }
  for (const auto& pair : doc.value("known_blocks", json::array())) {
    obs.known_blocks.emplace(Ipv4::parse(pair.at(0).get<std::string>()),
                             Ipv4::parse(pair.at(1).get<std::string>()));
  }
  obs.check_invariants();
  return obs;
}

Action Action::scan_network(Ipv4 src, Cidr net) {
  Action a;
  a.type = ActionType::ScanNetwork;
  a.source = src;
  a.target_network = net;
  return a;
}

Action Action::find_services(Ipv4 src, Ipv4 dst) {
  Action a;
  a.type = ActionType::FindServices;
  a.source = src;
  a.target_host = dst;
  return a;
}

Action Action::find_data(Ipv4 src, Ipv4 dst) {
  Action a;
  a.type = ActionType::FindData;
  a.source = src;
  a.target_host = dst;
  return a;
}

Action Action::exploit_service(Ipv4 src, Ipv4 dst, ServiceRef svc) {
  Action a;
  a.type = ActionType::ExploitService;
  a.source = src;
  a.target_host = dst;
  a.service = std::move(svc);
  return a;
}

Action Action::exfiltrate_data(Ipv4 src, Ipv4 dst, DataRef data) {
  Action a;
  a.type = ActionType::ExfiltrateData;
  a.source = src;
  a.target_host = dst;
  a.data = std::move(data);
  return a;
}

std::string Action::str() const {
  std::string out = to_string(type) + "(" + source.str() + " -> ";
  out += type == ActionType::ScanNetwork ? target_network.str() : target_host.str();
  if (service) out += ", " + service->name + ":" + std::to_string(service->port);
  if (data) out += ", " + data->owner + "/" + data->id;
  return out + ")";
}

json action_params_json(const Action& action) {
  json params{{"source_host", action.source.str()}};
  if (action.type == ActionType::ScanNetwork) {
    params["target_network"] = action.target_network.str();
  } else {
    params["target_host"] = action.target_host.str();
  }
  if (action.service) params["target_service"] = service_json(*action.service);
  if (action.data) params["data"] = data_json(*action.data);
  return params;
}

json to_json(const Action& action) {
  return {{"action_type", to_string(action.type)}, {"action_params", action_params_json(action)}};
}

Action action_from_json(const json& doc) {
  const auto type = action_type_from_string(doc.at("action_type").get<std::string>());
  const auto& p = doc.at("action_params");
  const auto src = Ipv4::parse(p.at("source_host").get<std::string>());
  switch (type) {
    case ActionType::ScanNetwork:
      return Action::scan_network(src, Cidr::parse(p.at("target_network").get<std::string>()));
    case ActionType::FindServices:
      return Action::find_services(src, Ipv4::parse(p.at("target_host").get<std::string>()));
    case ActionType::FindData:
      return Action::find_data(src, Ipv4::parse(p.at("target_host").get<std::string>()));
    case ActionType::ExploitService:
      return Action::exploit_service(src, Ipv4::parse(p.at("target_host").get<std::string>()),
                                     service_from_json(p.at("target_service")));
    case ActionType::ExfiltrateData:
      return Action::exfiltrate_data(src, Ipv4::parse(p.at("target_host").get<std::string>()),
                                     data_from_json(p.at("data")));
  }
  throw std::invalid_argument("unreachable action type");
}

std::string to_string(EndReason reason) {
  switch (reason) {
    case EndReason::None: return "none";
    case EndReason::Success: return "success";
    case EndReason::Timeout: return "timeout";
    case EndReason::Failure: return "failure";
  }
  return "none";
}

EndReason end_reason_from_string(const std::string& text) {
  if (text == "none") return EndReason::None;
  if (text == "success") return EndReason::Success;
  if (text == "timeout") return EndReason::Timeout;
  if (text == "failure") return EndReason::Failure;
  throw std::invalid_argument("unknown end reason: " + text);
}

double EpisodeTrace::total_return() const {
  double total = 0.0;
  for (const auto& s : steps) total += s.reward;
  return total;
}

void write_traces_jsonl(std::ostream& out, const std::vector<EpisodeTrace>& traces) {
  for (const auto& trace : traces) {
    for (const auto& s : trace.steps) {
      json rec{{"episode", trace.episode},
               {"group", trace.group},
               {"variant_id", trace.variant_id},
               {"step", s.step},
               {"action_type", to_string(s.action.type)},
               {"action_params", action_params_json(s.action)},
               {"reward", s.reward},
               {"progressed", s.progressed},
               {"end_reason", to_string(s.end_reason)}};
      out << rec.dump() << '\n';
    }
  }
}

std::vector<EpisodeTrace> read_traces_jsonl(std::istream& in) {
  std::vector<EpisodeTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    const int episode = rec.at("episode").get<int>();
    const auto group = rec.value("group", std::uint64_t{0});
    if (traces.empty() || traces.back().episode != episode || traces.back().group != group ||
        traces.back().steps.empty() || traces.back().steps.back().end_reason != EndReason::None) {
      EpisodeTrace t;
      t.episode = episode;
      t.group = group;
      t.variant_id = rec.value("variant_id", std::int64_t{0});
      traces.push_back(std::move(t));
    }
    TraceStep s;
    s.step = rec.at("step").get<int>();
    s.action = action_from_json(rec);
    s.reward = rec.at("reward").get<double>();
    s.progressed = rec.at("progressed").get<bool>();
    s.end_reason = end_reason_from_string(rec.at("end_reason").get<std::string>());
    traces.back().steps.push_back(std::move(s));
  }
  return traces;
}

// ---------------------------------------------------------------------------

Topology::Topology(ScenarioConfig config, IpAssignment assignment)
    : config_(std::move(config)), assignment_(std::move(assignment)) {
  assignment_.validate(config_);
  hosts_.reserve(config_.hosts.size());
  for (const auto& spec : config_.hosts) {
    Host h;
    h.role_id = spec.role_id;
    h.ip = assignment_.ip_of(spec.role_id);
    h.network_role = spec.network_role;
    h.network = assignment_.network_prefixes.at(spec.network_role);
    h.router = spec.is_router();
    for (const auto& svc : spec.services) {
      if (svc.local) continue;
      h.services.push_back(ServiceRef{svc.name, svc.port, svc.protocol});
      h.exploitable.push_back(svc.exploitable);
    }
    for (const auto& d : spec.data) {
      h.data.push_back(DataRef{d.owner, d.id});
      h.is_log.push_back(d.is_log);
    }
    index_.emplace(h.ip, hosts_.size());
    hosts_.push_back(std::move(h));
  }

  // Compile the rule list into a dense verdict matrix. First matching rule
  // wins, anything unmatched is denied, the router accepts nothing.
  const std::size_t n = hosts_.size();
  std::vector<std::vector<std::uint8_t>> src_in(config_.firewall_rules.size(), std::vector<std::uint8_t>(n));
  auto dst_in = src_in;
  for (std::size_t r = 0; r < config_.firewall_rules.size(); ++r) {
    const auto& rule = config_.firewall_rules[r];
    for (const auto& e : rule.src) {
      for (const auto& role : config_.expand_entity(e)) src_in[r][*config_.find_host(role)] = 1;
    }
    for (const auto& e : rule.dst) {
      for (const auto& role : config_.expand_entity(e)) dst_in[r][*config_.find_host(role)] = 1;
    }
  }
  reach_.assign(n * n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t d = 0; d < n; ++d) {
      if (hosts_[d].router) continue;
      if (s == d) {
        reach_[s * n + d] = 1;
        continue;
      }
      for (std::size_t r = 0; r < config_.firewall_rules.size(); ++r) {
        if (src_in[r][s] && dst_in[r][d]) {
          reach_[s * n + d] = config_.firewall_rules[r].allow ? 1 : 0;
          break;
        }
      }
    }
  }

  goal_destination_ = assignment_.ip_of(config_.goal.destination_role);
  const auto& goal_owner = config_.host(config_.goal_host());
  for (const auto& d : goal_owner.data) {
    if (d.id == config_.goal.target_data) goal_data_ = DataRef{d.owner, d.id};
  }
  for (const auto& role : config_.start_pool) start_pool_.push_back(assignment_.ip_of(role));
}

const Topology::Host& Topology::host(const std::string& role_id) const {
  return host(assignment_.ip_of(role_id));
}

std::size_t Topology::index_of(Ipv4 ip) const {
  const auto it = index_.find(ip);
  if (it == index_.end()) throw ProtocolError("unknown address " + ip.str());
  return it->second;
}

bool Topology::reachable(Ipv4 src, Ipv4 dst) const {
  return reach_[index_of(src) * hosts_.size() + index_of(dst)] != 0;
}

bool Topology::reachable(Ipv4 src, const Cidr& dst) const {
  const std::size_t s = index_of(src);
  for (std::size_t d = 0; d < hosts_.size(); ++d) {
    if (dst.contains(hosts_[d].ip) && reach_[s * hosts_.size() + d]) return true;
  }
  return false;
}

std::vector<Cidr> Topology::network_prefixes() const {
  std::vector<Cidr> out;
  for (const auto& [_, prefix] : assignment_.network_prefixes) out.push_back(prefix);
  std::sort(out.begin(), out.end());
  return out;
}

bool reachable(const ScenarioConfig& config, const IpAssignment& assignment, Ipv4 src, Ipv4 dst) {
  return Topology(config, assignment).reachable(src, dst);
}

std::vector<Action> valid_actions(const Observation& obs) {
  std::vector<Action> out;
  for (const auto& src : obs.controlled_hosts) {
    for (const auto& net : obs.known_networks) out.push_back(Action::scan_network(src, net));
    for (const auto& dst : obs.known_hosts) {
      out.push_back(Action::find_services(src, dst));
      out.push_back(Action::find_data(src, dst));
      if (const auto it = obs.known_services.find(dst); it != obs.known_services.end()) {
        for (const auto& svc : it->second) out.push_back(Action::exploit_service(src, dst, svc));
      }
    }
    if (const auto it = obs.known_data.find(src); it != obs.known_data.end()) {
      for (const auto& dst : obs.controlled_hosts) {
        for (const auto& d : it->second) out.push_back(Action::exfiltrate_data(src, dst, d));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_valid(const Observation& obs, const Action& a) {
  if (!obs.controlled_hosts.contains(a.source)) return false;
  switch (a.type) {
    case ActionType::ScanNetwork:
      return obs.known_networks.contains(a.target_network);
    case ActionType::FindServices:
    case ActionType::FindData:
      return obs.known_hosts.contains(a.target_host);
    case ActionType::ExploitService: {
      if (!a.service) return false;
      const auto it = obs.known_services.find(a.target_host);
      return it != obs.known_services.end() && it->second.contains(*a.service);
    }
    case ActionType::ExfiltrateData: {
      if (!a.data || !obs.controlled_hosts.contains(a.target_host)) return false;
      const auto it = obs.known_data.find(a.source);
      return it != obs.known_data.end() && it->second.contains(*a.data);
    }
  }
  return false;
}

std::vector<Action> enumerate_catalogue(const Topology& topology) {
  std::vector<Ipv4> hosts;
  std::vector<std::pair<Ipv4, ServiceRef>> services;
  std::vector<DataRef> data;
  for (const auto& h : topology.hosts()) {
    if (h.router) continue;
    hosts.push_back(h.ip);
    for (const auto& svc : h.services) services.emplace_back(h.ip, svc);
    for (std::size_t k = 0; k < h.data.size(); ++k) {
      if (!h.is_log[k]) data.push_back(h.data[k]);
    }
  }
  const auto nets = topology.network_prefixes();
  std::vector<Action> out;
  for (const auto& src : hosts) {
    for (const auto& net : nets) out.push_back(Action::scan_network(src, net));
    for (const auto& dst : hosts) {
      out.push_back(Action::find_services(src, dst));
      out.push_back(Action::find_data(src, dst));
      for (const auto& d : data) out.push_back(Action::exfiltrate_data(src, dst, d));
    }
    for (const auto& [owner, svc] : services) out.push_back(Action::exploit_service(src, owner, svc));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

Game::Game(std::shared_ptr<const Topology> topology, std::uint64_t seed) : topology_(std::move(topology)) {
  if (!topology_) throw std::invalid_argument("null topology");
  reset(seed);
}

void Game::reset(std::uint64_t seed) {
  const auto& topo = *topology_;
  if (topo.start_pool().empty()) throw ScenarioError("empty start pool");
  Rng rng(seed);
  start_host_ = topo.start_pool()[rng.uniform_index(topo.start_pool().size())];

  obs_ = Observation{};
  obs_.controlled_hosts = {start_host_, topo.goal_destination()};
  obs_.known_hosts = obs_.controlled_hosts;
  for (const auto& [role, prefix] : topo.assignment().network_prefixes) {
    if (role != NetworkRole::Router) obs_.known_networks.insert(prefix);
  }

  data_at_.assign(topo.hosts().size(), {});
  for (std::size_t i = 0; i < topo.hosts().size(); ++i) {
    data_at_[i].insert(topo.hosts()[i].data.begin(), topo.hosts()[i].data.end());
  }
  step_index_ = 0;
  end_reason_ = EndReason::None;
  trace_.steps.clear();
}

Game::Outcome Game::apply(const Action& a) {
  const auto& topo = *topology_;
  if (!is_valid(obs_, a)) return Outcome::Invalid;

  if (a.type == ActionType::ScanNetwork) {
    if (!topo.reachable(a.source, a.target_network)) return Outcome::Blocked;
    for (const auto& h : topo.hosts()) {
      if (a.target_network.contains(h.ip) && topo.reachable(a.source, h.ip)) {
        obs_.known_hosts.insert(h.ip);
      }
    }
    return Outcome::Applied;
  }

  if (!topo.reachable(a.source, a.target_host)) return Outcome::Blocked;
  const auto& target = topo.host(a.target_host);
  const std::size_t ti = topo.index_of(a.target_host);

  switch (a.type) {
    case ActionType::FindServices:
      if (!target.services.empty()) {
        obs_.known_services[a.target_host].insert(target.services.begin(), target.services.end());
      }
      break;
    case ActionType::FindData:
      if (obs_.controlled_hosts.contains(a.target_host) && !data_at_[ti].empty()) {
        obs_.known_data[a.target_host].insert(data_at_[ti].begin(), data_at_[ti].end());
      }
      break;
    case ActionType::ExploitService:
      for (std::size_t k = 0; k < target.services.size(); ++k) {
        if (target.services[k] == *a.service && target.exploitable[k]) {
          obs_.controlled_hosts.insert(a.target_host);
        }
      }
      break;
    case ActionType::ExfiltrateData:
      data_at_[ti].insert(*a.data);
      obs_.known_data[a.target_host].insert(*a.data);
      break;
    case ActionType::ScanNetwork:
      break;
  }
  return Outcome::Applied;
}

StepResult Game::step(const Action& action) {
  if (ended()) throw ProtocolError("step on an ended episode");
  const auto& topo = *topology_;
  const auto& rewards = topo.config().rewards;

  Observation before = obs_;
  const Outcome outcome = apply(action);
  ++step_index_;

  StepResult result;
  result.failed = outcome == Outcome::Invalid;
  result.blocked = outcome == Outcome::Blocked;
  result.progressed = outcome == Outcome::Applied && !(obs_ == before);
  result.reward = rewards.step + (result.failed ? rewards.fail : 0.0);
  if (data_at_[topo.index_of(topo.goal_destination())].contains(topo.goal_data())) {
    result.reward += rewards.success;
    end_reason_ = EndReason::Success;
  } else if (step_index_ >= topo.config().max_steps) {
    end_reason_ = EndReason::Timeout;
  }
  result.ended = ended();
  result.end_reason = end_reason_;
  result.observation = obs_;

  trace_.steps.push_back(TraceStep{step_index_ - 1, action, result.reward, result.progressed, end_reason_});
  return result;
}

}  // namespace nsg
