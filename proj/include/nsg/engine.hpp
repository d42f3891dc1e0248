#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nsg/ip.hpp"
#include "nsg/rng.hpp"
#include "nsg/scenario.hpp"

namespace nsg {

/// Raised when the caller breaks the game protocol (e.g. steps an ended episode).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class ActionType : std::uint8_t {
  ScanNetwork = 0,
  FindServices = 1,
  FindData = 2,
  ExploitService = 3,
  ExfiltrateData = 4,
};

inline constexpr std::size_t kActionTypeCount = 5;
inline constexpr std::array<ActionType, kActionTypeCount> kActionTypes{
    ActionType::ScanNetwork, ActionType::FindServices, ActionType::FindData,
    ActionType::ExploitService, ActionType::ExfiltrateData};

std::string to_string(ActionType type);
ActionType action_type_from_string(const std::string& text);
inline std::size_t index_of(ActionType type) { return static_cast<std::size_t>(type); }

struct ServiceRef {
  std::string name;
  int port = 0;
  std::string protocol = "tcp";

  /// Address-free tag such as "p22/TCP".
  std::string tag() const;
  auto operator<=>(const ServiceRef&) const = default;
};

struct DataRef {
  std::string owner;
  std::string id;
  auto operator<=>(const DataRef&) const = default;
};

/// The attacker's discovered view of the network.
struct Observation {
  std::set<Cidr> known_networks;
  std::set<Ipv4> known_hosts;
  std::set<Ipv4> controlled_hosts;
  std::map<Ipv4, std::set<ServiceRef>> known_services;
  std::map<Ipv4, std::set<DataRef>> known_data;
  std::set<std::pair<Ipv4, Ipv4>> known_blocks;

  /// Throws ProtocolError when a subset invariant is violated.
  void check_invariants() const;
  bool operator==(const Observation&) const = default;
};

json to_json(const Observation& obs);
Observation observation_from_json(const json& doc);

struct Action {
  ActionType type = ActionType::ScanNetwork;
  Ipv4 source;
  Ipv4 target_host;        // unused by ScanNetwork
  Cidr target_network;     // ScanNetwork only
  std::optional<ServiceRef> service;
  std::optional<DataRef> data;

  static Action scan_network(Ipv4 src, Cidr net);
  static Action find_services(Ipv4 src, Ipv4 dst);
  static Action find_data(Ipv4 src, Ipv4 dst);
  static Action exploit_service(Ipv4 src, Ipv4 dst, ServiceRef svc);
  static Action exfiltrate_data(Ipv4 src, Ipv4 dst, DataRef data);

  /// Human readable, e.g. "FindServices(10.0.0.3 -> 10.0.1.5)".
  std::string str() const;
  auto operator<=>(const Action&) const = default;
};

json to_json(const Action& action);
/// Parameters only (no "action_type" key).
json action_params_json(const Action& action);
Action action_from_json(const json& doc);

enum class EndReason { None, Success, Timeout, Failure };
std::string to_string(EndReason reason);
EndReason end_reason_from_string(const std::string& text);

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool ended = false;
  EndReason end_reason = EndReason::None;
  /// The observation changed.
  bool progressed = false;
  /// The action's arguments were not drawn from the observation.
  bool failed = false;
  /// Valid for the observation but denied by the firewall; costs a step only.
  bool blocked = false;
};

struct TraceStep {
  int step = 0;
  Action action;
  double reward = 0.0;
  bool progressed = false;
  EndReason end_reason = EndReason::None;
};

struct EpisodeTrace {
  int episode = 0;
  std::uint64_t group = 0;
  std::int64_t variant_id = 0;
  std::vector<TraceStep> steps;

  int length() const { return static_cast<int>(steps.size()); }
  bool won() const { return !steps.empty() && steps.back().end_reason == EndReason::Success; }
  double total_return() const;
};

/// One JSON object per step: episode, group, variant_id, step, action_type,
/// action_params, reward, progressed, end_reason.
void write_traces_jsonl(std::ostream& out, const std::vector<EpisodeTrace>& traces);
std::vector<EpisodeTrace> read_traces_jsonl(std::istream& in);

/// Ground truth of one (scenario, variant) pair: addresses, services, data
/// placement and the compiled firewall. Immutable and shareable.
class Topology {
 public:
  struct Host {
    std::string role_id;
    Ipv4 ip;
    NetworkRole network_role;
    Cidr network;
    std::vector<ServiceRef> services;  // non-local only
    std::vector<bool> exploitable;     // parallel to services
    std::vector<DataRef> data;
    std::vector<bool> is_log;          // parallel to data
    bool router = false;
  };

  Topology(ScenarioConfig config, IpAssignment assignment);

  const ScenarioConfig& config() const { return config_; }
  const IpAssignment& assignment() const { return assignment_; }
  const std::vector<Host>& hosts() const { return hosts_; }
  const Host& host(Ipv4 ip) const { return hosts_[index_of(ip)]; }
  const Host& host(const std::string& role_id) const;
  std::size_t index_of(Ipv4 ip) const;
  bool has_host(Ipv4 ip) const { return index_.contains(ip); }

  /// Firewall verdict for a connection; throws ProtocolError for unknown addresses.
  bool reachable(Ipv4 src, Ipv4 dst) const;
  /// True when src may reach at least one host of the network.
  bool reachable(Ipv4 src, const Cidr& dst) const;

  std::vector<Cidr> network_prefixes() const;
  Ipv4 goal_destination() const { return goal_destination_; }
  const DataRef& goal_data() const { return goal_data_; }
  /// Hosts eligible as the random starting foothold.
  const std::vector<Ipv4>& start_pool() const { return start_pool_; }

 private:
  ScenarioConfig config_;
  IpAssignment assignment_;
  std::vector<Host> hosts_;
  std::unordered_map<Ipv4, std::size_t> index_;
  std::vector<std::uint8_t> reach_;  // row-major host x host
  Ipv4 goal_destination_;
  DataRef goal_data_;
  std::vector<Ipv4> start_pool_;
};

/// Convenience: compile the firewall for the pair and query it.
bool reachable(const ScenarioConfig& config, const IpAssignment& assignment, Ipv4 src, Ipv4 dst);

/// Every parameterization whose arguments are drawn from the observation, in
/// canonical (Action::operator<) order. The firewall is not consulted: the
/// attacker cannot see it, and blocked attempts are harmless no-ops.
std::vector<Action> valid_actions(const Observation& obs);
bool is_valid(const Observation& obs, const Action& action);

/// Full parameterized catalogue over non-router hosts, canonical order.
std::vector<Action> enumerate_catalogue(const Topology& topology);

/// Single-threaded episode state. Construction performs the reset.
class Game {
 public:
  Game(std::shared_ptr<const Topology> topology, std::uint64_t seed);

  void reset(std::uint64_t seed);
  StepResult step(const Action& action);

  const Observation& observation() const { return obs_; }
  std::vector<Action> valid_actions() const { return nsg::valid_actions(obs_); }
  const Topology& topology() const { return *topology_; }
  std::shared_ptr<const Topology> topology_ptr() const { return topology_; }
  bool ended() const { return end_reason_ != EndReason::None; }
  EndReason end_reason() const { return end_reason_; }
  int step_index() const { return step_index_; }
  const EpisodeTrace& trace() const { return trace_; }
  EpisodeTrace& trace() { return trace_; }
  Ipv4 start_host() const { return start_host_; }

 private:
  enum class Outcome { Applied, Blocked, Invalid };
  /// Mutates obs_/data_at_ only for Applied.
  Outcome apply(const Action& action);

  std::shared_ptr<const Topology> topology_;
  Observation obs_;
  std::vector<std::set<DataRef>> data_at_;  // ground-truth data per host index
  int step_index_ = 0;
  EndReason end_reason_ = EndReason::None;
  EpisodeTrace trace_;
  Ipv4 start_host_;
};

}  // namespace nsg
