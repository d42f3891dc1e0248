#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nsg/engine.hpp"

namespace nsg {

/// Aggregates of a set of evaluation episodes. The win-rate spread is taken
/// across seed groups (EpisodeTrace::group); the other spreads across episodes.
struct RunMetrics {
  int episodes = 0;
  int groups = 0;
  double win_rate = 0.0;  // percent
  double win_rate_std = 0.0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_steps = 0.0;
  double std_steps = 0.0;
  /// Over winning episodes only; zero when there are none.
  double mean_win_steps = 0.0;
  double std_win_steps = 0.0;
};

RunMetrics compute_metrics(const std::vector<EpisodeTrace>& traces);
json to_json(const RunMetrics& m);

/// Per step t: share of each action type among episodes still running at t,
/// and how many are running. The terminating action counts as running.
struct BehavioralSignature {
  std::vector<std::array<double, kActionTypeCount>> probability;
  std::vector<int> active;
  int episodes = 0;

  std::size_t steps() const { return active.size(); }
};

BehavioralSignature compute_signature(const std::vector<EpisodeTrace>& traces);

/// Mean over steps active in both of the total-variation distance between
/// the per-step distributions.
double mean_tv_distance(const BehavioralSignature& a, const BehavioralSignature& b);

/// step,action_type,probability,active_count,active_fraction
void write_signature_csv(std::ostream& out, const BehavioralSignature& sig);
/// Stacked bars of the action mix per step, dashed line for the share of
/// episodes still running.
void write_signature_svg(std::ostream& out, const BehavioralSignature& sig, const std::string& title);

void write_signature_files(const std::filesystem::path& stem, const BehavioralSignature& sig,
                           const std::string& title);

/// agent,win_rate,win_rate_std,return,return_std,steps,steps_std,win_steps,win_steps_std
void write_comparison_csv(std::ostream& out, const std::vector<std::pair<std::string, RunMetrics>>& rows);

}  // namespace nsg
