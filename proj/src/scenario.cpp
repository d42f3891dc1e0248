#include "nsg/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "nsg/rng.hpp"

namespace nsg {

std::string to_string(NetworkRole role) {
  switch (role) {
    case NetworkRole::Client: return "client";
    case NetworkRole::Server: return "server";
    case NetworkRole::Internet: return "internet";
    case NetworkRole::Router: return "router";
  }
  return "unknown";
}

NetworkRole network_role_from_string(const std::string& text) {
  if (text == "client") return NetworkRole::Client;
  if (text == "server") return NetworkRole::Server;
  if (text == "internet") return NetworkRole::Internet;
  if (text == "router") return NetworkRole::Router;
  throw ScenarioError("unknown network role \"" + text + "\"");
}

std::optional<std::size_t> ScenarioConfig::find_host(const std::string& role_id) const {
  for (std::size_t i = 0; i < hosts.size(); ++i) {
    if (hosts[i].role_id == role_id) return i;
  }
  return std::nullopt;
}

const HostSpec& ScenarioConfig::host(const std::string& role_id) const {
  const auto index = find_host(role_id);
  if (!index) throw ScenarioError("unknown host \"" + role_id + "\"");
  return hosts[*index];
}

const NetworkSpec& ScenarioConfig::network(NetworkRole role) const {
  for (const auto& net : networks) {
    if (net.role == role) return net;
  }
  throw ScenarioError("scenario has no " + to_string(role) + " network");
}

std::vector<std::string> ScenarioConfig::expand_entity(const std::string& entity) const {
  std::vector<std::string> out;
  if (entity.starts_with("net:")) {
    const NetworkRole role = network_role_from_string(entity.substr(4));
    for (const auto& h : hosts) {
      if (h.network_role == role) out.push_back(h.role_id);
    }
    return out;
  }
  if (!find_host(entity)) throw ScenarioError("firewall rule names unknown host \"" + entity + "\"");
  out.push_back(entity);
  return out;
}

std::vector<std::pair<std::string, std::string>> ScenarioConfig::blockable_pairs() const {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& rule : firewall_rules) {
    if (!rule.blockable || !rule.allow) continue;
    for (const auto& s : rule.src) {
      for (const auto& src : expand_entity(s)) {
        for (const auto& d : rule.dst) {
          for (const auto& dst : expand_entity(d)) {
            if (src != dst) pairs.emplace(src, dst);
          }
        }
      }
    }
  }
  return {pairs.begin(), pairs.end()};
}

ScenarioCounts ScenarioConfig::counts() const {
  ScenarioCounts c;
  for (const auto& h : hosts) {
    if (h.is_router()) continue;
    ++c.hosts;
    for (const auto& s : h.services) c.services += s.local ? 0 : 1;
    for (const auto& d : h.data) c.data += d.is_log ? 0 : 1;
  }
  c.networks = static_cast<int>(networks.size());
  c.blockable_pairs = static_cast<int>(blockable_pairs().size());
  return c;
}

std::string ScenarioConfig::goal_host() const {
  for (const auto& h : hosts) {
    for (const auto& d : h.data) {
      if (d.id == goal.target_data) return h.role_id;
    }
  }
  throw ScenarioError("goal data \"" + goal.target_data + "\" not placed on any host");
}

namespace {

void validate(const ScenarioConfig& config, std::optional<ScenarioCounts> expected) {
  std::set<std::string> roles;
  for (const auto& h : config.hosts) {
    if (!roles.insert(h.role_id).second) throw ScenarioError("duplicate role_id \"" + h.role_id + "\"");
  }
  std::set<NetworkRole> nets;
  for (const auto& n : config.networks) {
    if (!nets.insert(n.role).second) throw ScenarioError("duplicate network role " + to_string(n.role));
  }
  for (const auto& h : config.hosts) {
    if (!nets.contains(h.network_role)) {
      throw ScenarioError("host \"" + h.role_id + "\" belongs to undeclared network " +
                          to_string(h.network_role));
    }
    if (h.network_role == NetworkRole::Internet) {
      for (const auto& s : h.services) {
        if (s.exploitable) throw ScenarioError("internet host \"" + h.role_id + "\" exposes an exploitable service");
      }
    }
  }
  for (const auto& rule : config.firewall_rules) {
    for (const auto& e : rule.src) config.expand_entity(e);
    for (const auto& e : rule.dst) config.expand_entity(e);
  }

  int goal_holders = 0;
  std::string holder;
  for (const auto& h : config.hosts) {
    for (const auto& d : h.data) {
      if (d.id == config.goal.target_data) {
        ++goal_holders;
        holder = h.role_id;
      }
    }
  }
  if (goal_holders != 1 || config.host(holder).network_role != NetworkRole::Server) {
    throw ScenarioError("goal data must reside on exactly one server host");
  }
  if (!config.find_host(config.goal.destination_role)) {
    throw ScenarioError("unknown goal destination \"" + config.goal.destination_role + "\"");
  }
  if (config.start_pool.empty()) throw ScenarioError("start_pool is empty");
  for (const auto& r : config.start_pool) {
    const auto idx = config.find_host(r);
    if (!idx) throw ScenarioError("start_pool names unknown host \"" + r + "\"");
    if (config.hosts[*idx].network_role != NetworkRole::Client) {
      throw ScenarioError("start_pool host \"" + r + "\" is not a client");
    }
  }
  if (!(config.rewards.success > 0.0 && config.rewards.step < 0.0)) {
    throw ScenarioError("reward table requires success > 0 > step");
  }
  if (config.max_steps <= 0) throw ScenarioError("max_steps must be positive");

  if (expected) {
    const ScenarioCounts got = config.counts();
    if (got.hosts != expected->hosts) throw ScenarioError("host count mismatch");
    if (got.networks != expected->networks) throw ScenarioError("network count mismatch");
    if (got.services != expected->services) throw ScenarioError("service count mismatch");
    if (got.data != expected->data) throw ScenarioError("data count mismatch");
    if (got.blockable_pairs != expected->blockable_pairs) {
      throw ScenarioError("blockable pair count mismatch");
    }
  }
}

template <typename T>
T field(const json& obj, const char* key) {
  if (!obj.contains(key)) throw ScenarioError(std::string("missing field \"") + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("bad field \"") + key + "\": " + e.what());
  }
}

template <typename T>
T field_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? field<T>(obj, key) : fallback;
}

}  // namespace

ScenarioConfig parse_scenario(const json& doc, std::optional<ScenarioCounts> expected) {
  if (!doc.is_object()) throw ScenarioError("scenario document must be a JSON object");
  ScenarioConfig config;
  try {
    for (const auto& n : field<json>(doc, "networks")) {
      config.networks.push_back({network_role_from_string(field<std::string>(n, "role")),
                                 Cidr::parse(field<std::string>(n, "prefix"))});
    }
    for (const auto& h : field<json>(doc, "hosts")) {
      HostSpec host;
      host.role_id = field<std::string>(h, "role_id");
      host.network_role = network_role_from_string(field<std::string>(h, "network_role"));
      for (const auto& s : field_or<json>(h, "services", json::array())) {
        host.services.push_back({field<std::string>(s, "name"), field<int>(s, "port"),
                                 field_or<std::string>(s, "protocol", "tcp"),
                                 field_or<bool>(s, "exploitable", true),
                                 field_or<bool>(s, "local", false)});
      }
      for (const auto& d : field_or<json>(h, "data", json::array())) {
        host.data.push_back({field<std::string>(d, "owner"), field<std::string>(d, "id"),
                             field_or<bool>(d, "is_goal", false), field_or<bool>(d, "is_log", false)});
      }
      config.hosts.push_back(std::move(host));
    }
    for (const auto& r : field<json>(doc, "firewall_rules")) {
      config.firewall_rules.push_back({field<std::vector<std::string>>(r, "src"),
                                       field<std::vector<std::string>>(r, "dst"),
                                       field_or<bool>(r, "allow", true),
                                       field_or<bool>(r, "blockable", false)});
    }
    const json rewards = field<json>(doc, "rewards");
    config.rewards = {field<double>(rewards, "success"), field<double>(rewards, "step"),
                      field<double>(rewards, "fail"), field<double>(rewards, "false_positive")};
    const json goal = field<json>(doc, "goal");
    config.goal = {field<std::string>(goal, "target_data"), field<std::string>(goal, "destination_role")};
    config.start_pool = field<std::vector<std::string>>(doc, "start_pool");
    config.max_steps = field_or<int>(doc, "max_steps", 100);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  validate(config, expected);
  return config;
}

ScenarioConfig load_scenario(const std::filesystem::path& path, std::optional<ScenarioCounts> expected) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("parse error: ") + e.what());
  }
  return parse_scenario(doc, expected);
}

json to_json(const ScenarioConfig& config) {
  json doc;
  doc["networks"] = json::array();
  for (const auto& n : config.networks) {
    doc["networks"].push_back({{"role", to_string(n.role)}, {"prefix", n.prefix.str()}});
  }
  doc["hosts"] = json::array();
  for (const auto& h : config.hosts) {
    json host{{"role_id", h.role_id}, {"network_role", to_string(h.network_role)},
              {"services", json::array()}, {"data", json::array()}};
    for (const auto& s : h.services) {
      host["services"].push_back({{"name", s.name}, {"port", s.port}, {"protocol", s.protocol},
                                  {"exploitable", s.exploitable}, {"local", s.local}});
    }
    for (const auto& d : h.data) {
      host["data"].push_back({{"owner", d.owner}, {"id", d.id}, {"is_goal", d.is_goal}, {"is_log", d.is_log}});
    }
    doc["hosts"].push_back(host);
  }
  doc["firewall_rules"] = json::array();
  for (const auto& r : config.firewall_rules) {
    doc["firewall_rules"].push_back(
        {{"src", r.src}, {"dst", r.dst}, {"allow", r.allow}, {"blockable", r.blockable}});
  }
  doc["rewards"] = {{"success", config.rewards.success}, {"step", config.rewards.step},
                    {"fail", config.rewards.fail}, {"false_positive", config.rewards.false_positive}};
  doc["goal"] = {{"target_data", config.goal.target_data}, {"destination_role", config.goal.destination_role}};
  doc["start_pool"] = config.start_pool;
  doc["max_steps"] = config.max_steps;
  return doc;
}

Ipv4 IpAssignment::ip_of(const std::string& role_id) const {
  const auto it = host_ips.find(role_id);
  if (it == host_ips.end()) throw ScenarioError("no address for host \"" + role_id + "\"");
  return it->second;
}

std::optional<std::string> IpAssignment::role_of(Ipv4 ip) const {
  for (const auto& [role, addr] : host_ips) {
    if (addr == ip) return role;
  }
  return std::nullopt;
}

void IpAssignment::validate(const ScenarioConfig& config) const {
  std::set<Ipv4> seen;
  for (const auto& h : config.hosts) {
    const Ipv4 ip = ip_of(h.role_id);
    if (!seen.insert(ip).second) throw ScenarioError("address " + ip.str() + " assigned twice");
    const auto net = network_prefixes.find(h.network_role);
    if (net == network_prefixes.end()) throw ScenarioError("no prefix for " + to_string(h.network_role));
    if (!net->second.contains(ip)) {
      throw ScenarioError("host \"" + h.role_id + "\" address outside its network prefix");
    }
  }
  if (host_ips.size() != config.hosts.size()) throw ScenarioError("assignment has unknown hosts");
}

json to_json(const IpAssignment& assignment) {
  json prefixes = json::object();
  for (const auto& [role, cidr] : assignment.network_prefixes) prefixes[to_string(role)] = cidr.str();
  json hosts = json::object();
  for (const auto& [role, ip] : assignment.host_ips) hosts[role] = ip.str();
  return {{"variant_id", assignment.variant_id}, {"prefixes", prefixes}, {"host_ips", hosts}};
}

IpAssignment assignment_from_json(const json& doc) {
  IpAssignment a;
  try {
    a.variant_id = doc.at("variant_id").get<std::int64_t>();
    for (const auto& [role, cidr] : doc.at("prefixes").items()) {
      a.network_prefixes[network_role_from_string(role)] = Cidr::parse(cidr.get<std::string>());
    }
    for (const auto& [role, ip] : doc.at("host_ips").items()) {
      a.host_ips[role] = Ipv4::parse(ip.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("bad variant document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("bad variant document: ") + e.what());
  }
  return a;
}

IpAssignment default_assignment(const ScenarioConfig& config) {
  IpAssignment a;
  for (const auto& n : config.networks) a.network_prefixes[n.role] = n.prefix;
  std::map<NetworkRole, std::uint32_t> next_offset;
  for (const auto& h : config.hosts) {
    auto& offset = next_offset.try_emplace(h.network_role, h.is_router() ? 1u : 2u).first->second;
    a.host_ips[h.role_id] = a.network_prefixes.at(h.network_role).at(offset++);
  }
  return a;
}

IpAssignment generate_variant(const ScenarioConfig& config, std::uint64_t seed) {
  struct Pool {
    Cidr block;
    std::uint32_t slash24_count;
  };
  static const Pool pools[] = {
      {Cidr::parse("10.0.0.0/8"), 1u << 16},
      {Cidr::parse("172.16.0.0/12"), 1u << 12},
      {Cidr::parse("192.168.0.0/16"), 1u << 8},
  };

  Rng rng(derive_seed(seed, 0x5ca1ab1e));
  IpAssignment a = default_assignment(config);
  std::set<Cidr> used;
  for (const auto& n : config.networks) {
    if (n.role == NetworkRole::Internet) used.insert(n.prefix);
  }
  for (const auto& n : config.networks) {
    if (n.role == NetworkRole::Internet) continue;
    Cidr prefix;
    do {
      const Pool& pool = pools[rng.uniform_index(std::size(pools))];
      const auto index = static_cast<std::uint32_t>(rng.uniform_index(pool.slash24_count));
      prefix = Cidr(Ipv4{pool.block.base.value + (index << 8)}, 24);
    } while (!used.insert(prefix).second);
    a.network_prefixes[n.role] = prefix;

    std::vector<std::uint32_t> offsets;
    for (std::uint32_t o = 2; o < 255; ++o) offsets.push_back(o);
    rng.shuffle(offsets);
    std::size_t next = 0;
    for (const auto& h : config.hosts) {
      if (h.network_role != n.role) continue;
      // The router keeps the gateway address of its segment.
      a.host_ips[h.role_id] = prefix.at(h.is_router() ? 1u : offsets[next++]);
    }
  }
  return a;
}

std::uint64_t catalogue_size(std::uint64_t hosts, std::uint64_t networks, std::uint64_t services,
                             std::uint64_t data) {
  return hosts * networks + 2 * hosts * hosts + hosts * services + hosts * hosts * data;
}

boost::multiprecision::cpp_int state_space_size(unsigned hosts, unsigned services, unsigned data,
                                                unsigned networks, unsigned blocks) {
  using boost::multiprecision::cpp_int;
  cpp_int result = boost::multiprecision::pow(cpp_int(3), hosts);
  result <<= (services + data + networks + blocks);
  return result;
}

}  // namespace nsg
