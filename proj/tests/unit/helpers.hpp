#pragma once

#include <map>
#include <memory>

#include "nsg/engine.hpp"
#include "nsg/scenario.hpp"

namespace testing {

inline const nsg::ScenarioConfig& canonical() {
  static const nsg::ScenarioConfig cfg = nsg::load_scenario(NSG_SCENARIO);
  return cfg;
}

inline std::shared_ptr<const nsg::Topology> canonical_topology() {
  static const auto t = std::make_shared<const nsg::Topology>(canonical(), nsg::default_assignment(canonical()));
  return t;
}

inline std::shared_ptr<const nsg::Topology> variant_topology(std::uint64_t seed) {
  return std::make_shared<const nsg::Topology>(canonical(), nsg::generate_variant(canonical(), seed));
}

inline nsg::Ipv4 ip(const nsg::Topology& t, const std::string& role) { return t.assignment().ip_of(role); }

/// Re-addresses every host and network in an observation.
struct Readdressing {
  std::map<nsg::Ipv4, nsg::Ipv4> hosts;
  std::map<nsg::Cidr, nsg::Cidr> networks;

  nsg::Ipv4 operator()(nsg::Ipv4 a) const { return hosts.at(a); }
  nsg::Cidr operator()(const nsg::Cidr& c) const { return networks.at(c); }

  nsg::Observation apply(const nsg::Observation& o) const {
    nsg::Observation out;
    for (const auto& n : o.known_networks) out.known_networks.insert((*this)(n));
    for (auto h : o.known_hosts) out.known_hosts.insert((*this)(h));
    for (auto h : o.controlled_hosts) out.controlled_hosts.insert((*this)(h));
    for (const auto& [h, s] : o.known_services) out.known_services[(*this)(h)] = s;
    for (const auto& [h, d] : o.known_data) out.known_data[(*this)(h)] = d;
    for (const auto& [a, b] : o.known_blocks) out.known_blocks.insert({(*this)(a), (*this)(b)});
    return out;
  }

  nsg::Action apply(const nsg::Action& a) const {
    nsg::Action out = a;
    out.source = (*this)(a.source);
    if (a.type == nsg::ActionType::ScanNetwork) {
      out.target_network = (*this)(a.target_network);
    } else {
      out.target_host = (*this)(a.target_host);
    }
    return out;
  }
};

/// Maps the addresses of one variant onto another, role by role.
inline Readdressing between(const nsg::Topology& from, const nsg::Topology& to) {
  Readdressing r;
  for (const auto& [role, ip] : from.assignment().host_ips) r.hosts[ip] = to.assignment().ip_of(role);
  for (const auto& [role, net] : from.assignment().network_prefixes) {
    r.networks[net] = to.assignment().network_prefixes.at(role);
  }
  return r;
}

}  // namespace testing
