#include <doctest.h>

#include <sstream>

#include "nsg/analysis.hpp"

using namespace nsg;

namespace {

EpisodeTrace trace(std::vector<ActionType> types, EndReason end, std::uint64_t group = 0) {
  EpisodeTrace t;
  t.group = group;
  for (std::size_t i = 0; i < types.size(); ++i) {
    TraceStep s;
    s.step = static_cast<int>(i);
    s.action.type = types[i];
    s.reward = -1;
    if (i + 1 == types.size()) {
      s.end_reason = end;
      if (end == EndReason::Success) s.reward = 99;
    }
    t.steps.push_back(s);
  }
  return t;
}

}  // namespace

TEST_CASE("metrics") {
  using A = ActionType;
  const std::vector<EpisodeTrace> ts{trace({A::ScanNetwork, A::FindData}, EndReason::Success, 0),
                                     trace({A::ScanNetwork, A::ScanNetwork, A::FindData}, EndReason::Timeout, 0),
                                     trace({A::FindData, A::FindData}, EndReason::Success, 1),
                                     trace({A::FindData, A::FindData}, EndReason::Success, 1)};
  const auto m = compute_metrics(ts);
  CHECK(m.episodes == 4);
  CHECK(m.groups == 2);
  CHECK(m.win_rate == doctest::Approx(75.0));
  CHECK(m.win_rate_std == doctest::Approx(25.0));  // groups at 50 and 100
  CHECK(m.mean_return == doctest::Approx((98 + 98 + 98 - 3) / 4.0));
  CHECK(m.mean_steps == doctest::Approx(9 / 4.0));
  CHECK(m.mean_win_steps == doctest::Approx(2.0));
  CHECK(m.std_win_steps == 0.0);
  CHECK_THROWS(compute_metrics({}));
  CHECK(to_json(m).at("win_rate") == 75.0);
}

TEST_CASE("signature") {
  using A = ActionType;
  const std::vector<EpisodeTrace> ts{trace({A::ScanNetwork, A::FindData}, EndReason::Success),
                                     trace({A::FindServices, A::FindData, A::ExfiltrateData}, EndReason::Success)};
  const auto sig = compute_signature(ts);
  REQUIRE(sig.steps() == 3);
  CHECK(sig.active == std::vector<int>{2, 2, 1});
  CHECK(sig.probability[0][0] == 0.5);
  CHECK(sig.probability[0][1] == 0.5);
  CHECK(sig.probability[1][2] == 1.0);
  CHECK(sig.probability[2][4] == 1.0);
  for (const auto& row : sig.probability) {
    double s = 0;
    for (double p : row) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(mean_tv_distance(sig, sig) == 0.0);

  const auto other = compute_signature({trace({A::ScanNetwork}, EndReason::Success)});
  // only step 0 overlaps: |.5-1| + |.5-0| halved
  CHECK(mean_tv_distance(sig, other) == doctest::Approx(0.5));
}

TEST_CASE("signature writers are deterministic") {
  using A = ActionType;
  const auto sig = compute_signature({trace({A::ScanNetwork, A::FindData}, EndReason::Success),
                                      trace({A::FindData}, EndReason::Timeout)});
  std::ostringstream csv, svg, svg2;
  write_signature_csv(csv, sig);
  CHECK(csv.str().rfind("step,action_type,probability,active_count,active_fraction\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  CHECK(lines == 1 + 2 * kActionTypeCount);
  write_signature_svg(svg, sig, "t");
  write_signature_svg(svg2, sig, "t");
  CHECK(svg.str() == svg2.str());
  CHECK(svg.str().find("<svg") == 0);
  CHECK(svg.str().find("stroke-dasharray") != std::string::npos);

  std::ostringstream cmp;
  RunMetrics m;
  m.win_rate = 12.5;
  write_comparison_csv(cmp, {{"random", m}});
  CHECK(cmp.str() ==
        "agent,win_rate,win_rate_std,return,return_std,steps,steps_std,win_steps,win_steps_std\n"
        "random,12.50,0.00,0.00,0.00,0.00,0.00,0.00,0.00\n");
}
