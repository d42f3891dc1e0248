#include "nsg/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace nsg {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

// Population standard deviation.
Moments moments(const std::vector<double>& xs) {
  Moments m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return m;
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

constexpr std::array<const char*, kActionTypeCount> kColours{"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1"};

}  // namespace

RunMetrics compute_metrics(const std::vector<EpisodeTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("compute_metrics: no traces");
  RunMetrics m;
  m.episodes = static_cast<int>(traces.size());
  std::vector<double> returns, steps, win_steps;
  std::map<std::uint64_t, std::pair<int, int>> by_group;  // wins, episodes
  int wins = 0;
  for (const auto& t : traces) {
    returns.push_back(t.total_return());
    steps.push_back(t.length());
    auto& g = by_group[t.group];
    ++g.second;
    if (t.won()) {
      ++wins;
      ++g.first;
      win_steps.push_back(t.length());
    }
  }
  m.groups = static_cast<int>(by_group.size());
  m.win_rate = 100.0 * wins / static_cast<double>(traces.size());
  std::vector<double> group_rates;
  for (const auto& [_, g] : by_group) group_rates.push_back(100.0 * g.first / static_cast<double>(g.second));
  m.win_rate_std = moments(group_rates).std;
  const auto r = moments(returns);
  const auto s = moments(steps);
  const auto w = moments(win_steps);
  m.mean_return = r.mean;
  m.std_return = r.std;
  m.mean_steps = s.mean;
  m.std_steps = s.std;
  m.mean_win_steps = w.mean;
  m.std_win_steps = w.std;
  return m;
}

json to_json(const RunMetrics& m) {
  return json{{"episodes", m.episodes},         {"groups", m.groups},
              {"win_rate", m.win_rate},         {"win_rate_std", m.win_rate_std},
              {"mean_return", m.mean_return},   {"std_return", m.std_return},
              {"mean_steps", m.mean_steps},     {"std_steps", m.std_steps},
              {"mean_win_steps", m.mean_win_steps}, {"std_win_steps", m.std_win_steps}};
}

BehavioralSignature compute_signature(const std::vector<EpisodeTrace>& traces) {
  BehavioralSignature sig;
  sig.episodes = static_cast<int>(traces.size());
  int horizon = 0;
  for (const auto& t : traces) horizon = std::max(horizon, t.length());
  sig.probability.assign(static_cast<std::size_t>(horizon), {});
  sig.active.assign(static_cast<std::size_t>(horizon), 0);
  for (const auto& t : traces) {
    for (std::size_t k = 0; k < t.steps.size(); ++k) {
      ++sig.active[k];
      sig.probability[k][index_of(t.steps[k].action.type)] += 1.0;
    }
  }
  for (std::size_t k = 0; k < sig.active.size(); ++k) {
    for (auto& p : sig.probability[k]) p /= sig.active[k];
  }
  return sig;
}

double mean_tv_distance(const BehavioralSignature& a, const BehavioralSignature& b) {
  const std::size_t n = std::min(a.steps(), b.steps());
  double sum = 0.0;
  int counted = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (a.active[k] == 0 || b.active[k] == 0) continue;
    double tv = 0.0;
    for (std::size_t j = 0; j < kActionTypeCount; ++j) tv += std::abs(a.probability[k][j] - b.probability[k][j]);
    sum += 0.5 * tv;
    ++counted;
  }
  return counted > 0 ? sum / counted : 0.0;
}

void write_signature_csv(std::ostream& out, const BehavioralSignature& sig) {
  out << "step,action_type,probability,active_count,active_fraction\n";
  for (std::size_t k = 0; k < sig.steps(); ++k) {
    const double frac = sig.episodes > 0 ? static_cast<double>(sig.active[k]) / sig.episodes : 0.0;
    for (std::size_t j = 0; j < kActionTypeCount; ++j) {
      out << k << ',' << to_string(kActionTypes[j]) << ',' << fmt(sig.probability[k][j], 6) << ',' << sig.active[k]
          << ',' << fmt(frac, 6) << '\n';
    }
  }
}

void write_signature_svg(std::ostream& out, const BehavioralSignature& sig, const std::string& title) {
  const double left = 60, right = 60, top = 40, bottom = 60, plot_w = 800, plot_h = 300;
  const double width = left + plot_w + right, height = top + plot_h + bottom;
  const std::size_t n = std::max<std::size_t>(sig.steps(), 1);
  const double bar = plot_w / static_cast<double>(n);

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 0) << "\" height=\"" << fmt(height, 0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fmt(width / 2, 1) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";

  for (std::size_t k = 0; k < sig.steps(); ++k) {
    double y = top + plot_h;
    for (std::size_t j = 0; j < kActionTypeCount; ++j) {
      const double h = sig.probability[k][j] * plot_h;
      if (h <= 0.0) continue;
      y -= h;
      out << "<rect x=\"" << fmt(left + k * bar, 2) << "\" y=\"" << fmt(y, 2) << "\" width=\"" << fmt(bar, 2)
          << "\" height=\"" << fmt(h, 2) << "\" fill=\"" << kColours[j] << "\"/>\n";
    }
  }

  if (sig.steps() > 0 && sig.episodes > 0) {
    out << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\" points=\"";
    for (std::size_t k = 0; k < sig.steps(); ++k) {
      const double frac = static_cast<double>(sig.active[k]) / sig.episodes;
      out << (k ? " " : "") << fmt(left + (k + 0.5) * bar, 2) << ',' << fmt(top + plot_h * (1.0 - frac), 2);
    }
    out << "\"/>\n";
  }

  // Axes: action share on the left, running episodes on the right.
  out << "<line x1=\"" << fmt(left, 0) << "\" y1=\"" << fmt(top, 0) << "\" x2=\"" << fmt(left, 0) << "\" y2=\""
      << fmt(top + plot_h, 0) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fmt(left + plot_w, 0) << "\" y1=\"" << fmt(top, 0) << "\" x2=\"" << fmt(left + plot_w, 0)
      << "\" y2=\"" << fmt(top + plot_h, 0) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fmt(left, 0) << "\" y1=\"" << fmt(top + plot_h, 0) << "\" x2=\"" << fmt(left + plot_w, 0)
      << "\" y2=\"" << fmt(top + plot_h, 0) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = top + plot_h * (1.0 - i / 4.0);
    out << "<text x=\"" << fmt(left - 5, 0) << "\" y=\"" << fmt(y + 4, 1) << "\" text-anchor=\"end\">"
        << fmt(i / 4.0, 2) << "</text>\n";
    out << "<text x=\"" << fmt(left + plot_w + 5, 0) << "\" y=\"" << fmt(y + 4, 1) << "\">"
        << fmt(sig.episodes * i / 4.0, 0) << "</text>\n";
  }
  for (std::size_t k = 0; k < sig.steps(); k += 10) {
    out << "<text x=\"" << fmt(left + (k + 0.5) * bar, 2) << "\" y=\"" << fmt(top + plot_h + 15, 0)
        << "\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  out << "<text x=\"" << fmt(left + plot_w / 2, 1) << "\" y=\"" << fmt(top + plot_h + 30, 0)
      << "\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t j = 0; j < kActionTypeCount; ++j) {
    const double x = left + j * 160.0;
    const double y = top + plot_h + 42;
    out << "<rect x=\"" << fmt(x, 0) << "\" y=\"" << fmt(y, 0) << "\" width=\"10\" height=\"10\" fill=\""
        << kColours[j] << "\"/>\n";
    out << "<text x=\"" << fmt(x + 14, 0) << "\" y=\"" << fmt(y + 9, 0) << "\">" << to_string(kActionTypes[j])
        << "</text>\n";
  }
  out << "</svg>\n";
}

void write_signature_files(const std::filesystem::path& stem, const BehavioralSignature& sig,
                           const std::string& title) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  auto csv = open(std::filesystem::path(stem.string() + ".csv"));
  write_signature_csv(csv, sig);
  auto svg = open(std::filesystem::path(stem.string() + ".svg"));
  write_signature_svg(svg, sig, title);
}

void write_comparison_csv(std::ostream& out, const std::vector<std::pair<std::string, RunMetrics>>& rows) {
  out << "agent,win_rate,win_rate_std,return,return_std,steps,steps_std,win_steps,win_steps_std\n";
  for (const auto& [name, m] : rows) {
    out << name << ',' << fmt(m.win_rate, 2) << ',' << fmt(m.win_rate_std, 2) << ',' << fmt(m.mean_return, 2) << ','
        << fmt(m.std_return, 2) << ',' << fmt(m.mean_steps, 2) << ',' << fmt(m.std_steps, 2) << ','
        << fmt(m.mean_win_steps, 2) << ',' << fmt(m.std_win_steps, 2) << '\n';
  }
}

}  // namespace nsg
