#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "nsg/agents.hpp"

using namespace nsg;

TEST_CASE("oracle wins every variant in five steps") {
  for (std::uint64_t seed : {101, 102, 103, 104, 105, 106}) {
    const auto topo = testing::variant_topology(seed);
    OracleAgent oracle;
    for (std::uint64_t e = 0; e < 5; ++e) {
      const auto t = run_episode(topo, oracle, e);
      CHECK(t.won());
      CHECK(t.length() == 5);
      CHECK(t.total_return() == doctest::Approx(95.0));
    }
  }
}

TEST_CASE("random agent") {
  RandomAgent agent;
  Rng rng(1);
  CHECK_THROWS_AS(agent.select(Observation{}, {}, rng), std::invalid_argument);

  const auto topo = testing::canonical_topology();
  const auto a = run_episodes(topo, agent, 20, 5);
  const auto b = run_episodes(topo, agent, 20, 5);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].episode == static_cast<int>(i));
    CHECK(a[i].length() == b[i].length());
    CHECK(a[i].total_return() == b[i].total_return());
    CHECK(a[i].length() <= 100);
  }
}

TEST_CASE("run_episode stamps group and variant") {
  const auto topo = testing::variant_topology(42);
  RandomAgent agent;
  const auto t = run_episode(topo, agent, 1, 3, 9);
  CHECK(t.episode == 3);
  CHECK(t.group == 9);
  CHECK(t.variant_id == topo->assignment().variant_id);
}

TEST_CASE("external agent protocol") {
  const auto topo = testing::canonical_topology();
  std::stringstream replies;
  for (int i = 0; i < 100; ++i) replies << R"({"action_index": 0})" << '\n';
  std::stringstream requests;
  ExternalAgent agent(replies, requests);
  const auto t = run_episode(topo, agent, 4);

  std::vector<json> lines;
  for (std::string line; std::getline(requests, line);) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 2 + 2 * static_cast<std::size_t>(t.length()));
  CHECK(lines.front().at("event") == "episode_start");
  CHECK(lines[1].contains("valid_actions"));
  CHECK(lines[2].at("event") == "step");
  CHECK(lines.back().at("event") == "episode_end");
  CHECK(lines.back().at("won").get<bool>() == t.won());

  std::stringstream bad(R"({"action_index": 999})" "\n");
  std::stringstream sink;
  ExternalAgent broken(bad, sink);
  CHECK_THROWS_AS(run_episode(topo, broken, 4), ProtocolError);

  std::stringstream closed;
  ExternalAgent silent(closed, sink);
  CHECK_THROWS_AS(run_episode(topo, silent, 4), ProtocolError);
}

TEST_CASE("external agent may name the action") {
  const auto topo = testing::canonical_topology();
  Game g(topo, derive_seed(4, 0));
  const Action first = g.valid_actions().back();
  std::stringstream replies;
  replies << json{{"action", to_json(first)}}.dump() << '\n';
  std::stringstream sink;
  ExternalAgent agent(replies, sink);
  Rng rng(0);
  CHECK(agent.select(g.observation(), g.valid_actions(), rng) == first);
}
