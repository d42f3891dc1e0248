#pragma once

#include <map>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "nsg/engine.hpp"

namespace nsg {

inline constexpr int kFeatureDim = 12;

using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor>;

/// Column layout of a candidate row.
enum Feature : int {
  kSrcServices = 0,
  kSrcInKnownNet,
  kSrcCentrality,
  kTgtStage,
  kTgtControlled,
  kTgtServices,
  kTgtHasData,
  kTgtBlocked,
  kTgtDegree,
  kOwnedRatio,
  kAvgDegree,
  kDensity,
};

/// Undirected graph over known hosts. Two hosts are adjacent when a known
/// network contains both, or when one is controlled and the other has
/// known services.
struct DiscoveredGraph {
  std::map<Ipv4, int> degree;
  int edges = 0;

  static DiscoveredGraph build(const Observation& obs);
  int degree_of(Ipv4 ip) const;
  int node_count() const { return static_cast<int>(degree.size()); }
};

/// 0 unknown, .25 known, .5 services known, .75 controlled, 1 data known.
double progress_stage(const Observation& obs, Ipv4 host);

/// `host_count` is the scenario's non-router host count, used to normalize
/// counts into [0,1]. Throws std::invalid_argument when the candidate's
/// arguments are not drawn from the observation.
FeatureVector featurize(const Observation& obs, const Action& candidate, const DiscoveredGraph& graph,
                        int host_count);

struct CandidateMatrix {
  std::vector<Action> actions;
  FeatureMatrix features;
  /// Distinct rows of `features` in first-occurrence order, and the index
  /// into them of every candidate. Networks only need to see `unique`.
  FeatureMatrix unique;
  std::vector<int> row_of;
  /// Every candidate had been executed already, so the full list was re-admitted.
  bool fallback = false;

  std::size_t rows() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
};

/// Drops candidates already executed this episode (`executed`), then stacks
/// the feature rows in the order of `valid`.
CandidateMatrix build_matrix(const Observation& obs, const std::vector<Action>& valid,
                             const std::set<Action>& executed, int host_count);

/// Non-router host count of a topology.
int host_count(const Topology& topology);

}  // namespace nsg
