#include "nsg/features.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace nsg {

namespace {

bool in_known_network(const Observation& obs, Ipv4 ip) {
  return std::any_of(obs.known_networks.begin(), obs.known_networks.end(),
                     [&](const Cidr& n) { return n.contains(ip); });
}

std::size_t services_of(const Observation& obs, Ipv4 ip) {
  const auto it = obs.known_services.find(ip);
  return it == obs.known_services.end() ? 0 : it->second.size();
}

bool has_data(const Observation& obs, Ipv4 ip) {
  const auto it = obs.known_data.find(ip);
  return it != obs.known_data.end() && !it->second.empty();
}

double ratio(double num, double den) { return den > 0 ? std::min(1.0, num / den) : 0.0; }

}  // namespace

DiscoveredGraph DiscoveredGraph::build(const Observation& obs) {
  DiscoveredGraph g;
  const std::vector<Ipv4> nodes(obs.known_hosts.begin(), obs.known_hosts.end());
  for (const auto& ip : nodes) g.degree[ip] = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const Ipv4 a = nodes[i];
      const Ipv4 b = nodes[j];
      bool linked = std::any_of(obs.known_networks.begin(), obs.known_networks.end(),
                                [&](const Cidr& n) { return n.contains(a) && n.contains(b); });
      linked = linked || (obs.controlled_hosts.contains(a) && services_of(obs, b) > 0) ||
               (obs.controlled_hosts.contains(b) && services_of(obs, a) > 0);
      if (linked) {
        ++g.degree[a];
        ++g.degree[b];
        ++g.edges;
      }
    }
  }
  return g;
}

int DiscoveredGraph::degree_of(Ipv4 ip) const {
  const auto it = degree.find(ip);
  return it == degree.end() ? 0 : it->second;
}

double progress_stage(const Observation& obs, Ipv4 host) {
  if (!obs.known_hosts.contains(host)) return 0.0;
  if (has_data(obs, host)) return 1.0;
  if (obs.controlled_hosts.contains(host)) return 0.75;
  if (services_of(obs, host) > 0) return 0.5;
  return 0.25;
}

FeatureVector featurize(const Observation& obs, const Action& a, const DiscoveredGraph& graph,
                        int host_count) {
  if (!obs.controlled_hosts.contains(a.source)) {
    throw std::invalid_argument("candidate source is not controlled: " + a.str());
  }
  if (a.type == ActionType::ScanNetwork ? !obs.known_networks.contains(a.target_network)
                                        : !obs.known_hosts.contains(a.target_host)) {
    throw std::invalid_argument("candidate target is not known: " + a.str());
  }

  const double h = host_count;
  const double n = graph.node_count();
  FeatureVector f = FeatureVector::Zero();

  f[kSrcServices] = ratio(services_of(obs, a.source), h);
  f[kSrcInKnownNet] = in_known_network(obs, a.source) ? 1.0 : 0.0;
  f[kSrcCentrality] = ratio(graph.degree_of(a.source), n - 1);

  if (a.type == ActionType::ScanNetwork) {
    // A network target is summarized by the known hosts inside it.
    double stage = 0.0;
    std::size_t svc = 0;
    int members = 0;
    bool controlled = false;
    bool data = false;
    for (const auto& ip : obs.known_hosts) {
      if (!a.target_network.contains(ip)) continue;
      ++members;
      stage = std::max(stage, progress_stage(obs, ip));
      controlled = controlled || obs.controlled_hosts.contains(ip);
      svc += services_of(obs, ip);
      data = data || has_data(obs, ip);
    }
    f[kTgtStage] = stage;
    f[kTgtControlled] = controlled ? 1.0 : 0.0;
    f[kTgtServices] = ratio(svc, h);
    f[kTgtHasData] = data ? 1.0 : 0.0;
    f[kTgtBlocked] = 0.0;
    f[kTgtDegree] = ratio(members, h);
  } else {
    const Ipv4 t = a.target_host;
    f[kTgtStage] = progress_stage(obs, t);
    f[kTgtControlled] = obs.controlled_hosts.contains(t) ? 1.0 : 0.0;
    f[kTgtServices] = ratio(services_of(obs, t), h);
    f[kTgtHasData] = has_data(obs, t) ? 1.0 : 0.0;
    f[kTgtBlocked] = obs.known_blocks.contains({a.source, t}) ? 1.0 : 0.0;
    f[kTgtDegree] = ratio(graph.degree_of(t), h - 1);
  }

  f[kOwnedRatio] = ratio(obs.controlled_hosts.size(), obs.known_hosts.size());
  f[kAvgDegree] = n > 0 ? ratio(2.0 * graph.edges / n, h - 1) : 0.0;
  f[kDensity] = ratio(graph.edges, n * (n - 1) / 2.0);
  return f;
}

CandidateMatrix build_matrix(const Observation& obs, const std::vector<Action>& valid,
                             const std::set<Action>& executed, int host_count) {
  CandidateMatrix m;
  for (const auto& a : valid) {
    if (!executed.contains(a)) m.actions.push_back(a);
  }
  if (m.actions.empty() && !valid.empty()) {
    m.actions = valid;
    m.fallback = true;
  }
  const auto graph = DiscoveredGraph::build(obs);
  m.features.resize(static_cast<Eigen::Index>(m.actions.size()), kFeatureDim);
  for (std::size_t i = 0; i < m.actions.size(); ++i) {
    m.features.row(static_cast<Eigen::Index>(i)) = featurize(obs, m.actions[i], graph, host_count).transpose();
  }
  std::map<std::array<double, kFeatureDim>, int> seen;
  std::vector<Eigen::Index> firsts;
  m.row_of.reserve(m.actions.size());
  for (Eigen::Index i = 0; i < m.features.rows(); ++i) {
    std::array<double, kFeatureDim> key;
    std::copy_n(m.features.row(i).data(), kFeatureDim, key.begin());
    const auto [it, inserted] = seen.emplace(key, static_cast<int>(firsts.size()));
    if (inserted) firsts.push_back(i);
    m.row_of.push_back(it->second);
  }
  m.unique.resize(static_cast<Eigen::Index>(firsts.size()), kFeatureDim);
  for (std::size_t k = 0; k < firsts.size(); ++k) m.unique.row(static_cast<Eigen::Index>(k)) = m.features.row(firsts[k]);
  return m;
}

int host_count(const Topology& topology) {
  return static_cast<int>(std::count_if(topology.hosts().begin(), topology.hosts().end(),
                                        [](const Topology::Host& h) { return !h.router; }));
}

}  // namespace nsg
