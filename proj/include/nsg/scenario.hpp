#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "nsg/ip.hpp"

namespace nsg {

using json = nlohmann::json;

/// Raised for malformed scenario documents and violated scenario invariants.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NetworkRole { Client, Server, Internet, Router };

std::string to_string(NetworkRole role);
NetworkRole network_role_from_string(const std::string& text);

struct ServiceSpec {
  std::string name;
  int port = 0;
  std::string protocol = "tcp";
  bool exploitable = true;
  bool local = false;
};

struct DataSpec {
  std::string owner;
  std::string id;
  bool is_goal = false;
  bool is_log = false;
};

struct HostSpec {
  std::string role_id;
  NetworkRole network_role = NetworkRole::Client;
  std::vector<ServiceSpec> services;
  std::vector<DataSpec> data;

  bool is_router() const { return network_role == NetworkRole::Router; }
};

struct NetworkSpec {
  NetworkRole role = NetworkRole::Client;
  /// Default prefix; variants replace it unless the network is the internet.
  Cidr prefix;
};

/// Ordered allow/deny rule over host sets. Entities are either a host
/// role_id or "net:<role>" for every host of that network.
struct FirewallRule {
  std::vector<std::string> src;
  std::vector<std::string> dst;
  bool allow = true;
  /// Host pairs expanded from this rule count toward the blockable-pair total.
  bool blockable = false;
};

struct RewardTable {
  double success = 100.0;
  double step = -1.0;
  double fail = -10.0;
  double false_positive = -5.0;
};

struct GoalSpec {
  std::string target_data;
  std::string destination_role;
};

/// Scenario-level combinatorial quantities. Routers, local services and
/// log data are excluded.
struct ScenarioCounts {
  int hosts = 0;
  int networks = 0;
  int services = 0;
  int data = 0;
  int blockable_pairs = 0;

  bool operator==(const ScenarioCounts&) const = default;
};

/// Counts of the canonical exfiltration scenario.
inline constexpr ScenarioCounts kCanonicalCounts{11, 4, 13, 5, 20};

struct ScenarioConfig {
  std::vector<HostSpec> hosts;
  std::vector<NetworkSpec> networks;
  std::vector<FirewallRule> firewall_rules;
  RewardTable rewards;
  GoalSpec goal;
  std::vector<std::string> start_pool;
  int max_steps = 100;

  /// Index into `hosts`, or nullopt when the role is unknown.
  std::optional<std::size_t> find_host(const std::string& role_id) const;
  const HostSpec& host(const std::string& role_id) const;
  const NetworkSpec& network(NetworkRole role) const;
  /// role_ids of the hosts an entity ("net:<role>" or a role_id) denotes.
  std::vector<std::string> expand_entity(const std::string& entity) const;

  ScenarioCounts counts() const;
  /// Ordered (src, dst) role pairs that a defender could block.
  std::vector<std::pair<std::string, std::string>> blockable_pairs() const;
  /// role_id of the host holding the goal data.
  std::string goal_host() const;
};

ScenarioConfig parse_scenario(const json& doc,
                              std::optional<ScenarioCounts> expected = kCanonicalCounts);
ScenarioConfig load_scenario(const std::filesystem::path& path,
                             std::optional<ScenarioCounts> expected = kCanonicalCounts);
json to_json(const ScenarioConfig& config);

/// Concrete addresses of one task variant.
struct IpAssignment {
  std::int64_t variant_id = 0;
  std::map<NetworkRole, Cidr> network_prefixes;
  std::map<std::string, Ipv4> host_ips;

  Ipv4 ip_of(const std::string& role_id) const;
  /// Inverse lookup; nullopt for addresses not assigned to any host.
  std::optional<std::string> role_of(Ipv4 ip) const;
  /// Checks bijectivity and prefix containment; throws ScenarioError.
  void validate(const ScenarioConfig& config) const;

  bool operator==(const IpAssignment&) const = default;
};

json to_json(const IpAssignment& assignment);
IpAssignment assignment_from_json(const json& doc);

/// Addresses taken from the scenario's own prefixes, hosts numbered from .2.
IpAssignment default_assignment(const ScenarioConfig& config);

/// Fresh assignment: every non-internet network gets a distinct /24 drawn
/// from the RFC1918 pools and hosts get distinct random offsets inside it.
/// The internet network and its hosts keep their default addresses.
IpAssignment generate_variant(const ScenarioConfig& config, std::uint64_t seed);

/// Number of distinct parameterized attacker actions:
/// ScanNetwork N*M, FindServices N^2, FindData N^2, ExploitService N*S,
/// ExfiltrateData N^2*D.
std::uint64_t catalogue_size(std::uint64_t hosts, std::uint64_t networks,
                             std::uint64_t services, std::uint64_t data);

/// 3^H * 2^(services + data + networks + blocks), exact.
boost::multiprecision::cpp_int state_space_size(unsigned hosts, unsigned services,
                                                unsigned data, unsigned networks,
                                                unsigned blocks);

}  // namespace nsg
