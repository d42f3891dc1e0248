#include <doctest.h>

#include "helpers.hpp"
#include "nsg/concepts.hpp"

using namespace nsg;

namespace {

Game played(std::shared_ptr<const Topology> topo, std::uint64_t seed, int steps) {
  Game g(std::move(topo), seed);
  Rng rng(seed + 7);
  for (int i = 0; i < steps && !g.ended(); ++i) {
    const auto valid = g.valid_actions();
    g.step(valid[rng.uniform_index(valid.size())]);
  }
  return g;
}

}  // namespace

TEST_CASE("private ranges") {
  CHECK(is_private(Ipv4::parse("10.1.2.3")));
  CHECK(is_private(Ipv4::parse("172.31.0.1")));
  CHECK_FALSE(is_private(Ipv4::parse("172.32.0.1")));
  CHECK(is_private(Ipv4::parse("192.168.7.7")));
  CHECK_FALSE(is_private(Ipv4::parse("213.47.23.195")));
}

TEST_CASE("initial concept state") {
  Game g(testing::canonical_topology(), 3);
  const auto view = abstract_view(g.observation());
  const std::string self = view.host_label.at(g.start_host());
  CHECK(self.rfind("host_", 0) == 0);
  CHECK(view.state.controlled.at(self) == 1);
  // the C&C host sits outside the private ranges
  const Ipv4 cc = testing::ip(g.topology(), "cc_server");
  CHECK(view.host_label.at(cc).rfind("external_", 0) == 0);
  for (const auto& [net, label] : view.network_label) {
    CHECK((label == "external_net" || label.rfind("net_", 0) == 0));
  }
}

TEST_CASE("concept state ignores addresses") {
  const auto a = testing::variant_topology(3);
  const auto b = testing::variant_topology(4);
  const auto map = testing::between(*a, *b);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Game g = played(a, s, static_cast<int>(s * 3));
    const Observation oa = g.observation();
    const Observation ob = map.apply(oa);
    CHECK(abstract_state(oa).digest() == abstract_state(ob).digest());
    const auto va = abstract_view(oa);
    const auto vb = abstract_view(ob);
    for (const auto& act : valid_actions(oa)) {
      CHECK(abstract_action(va, act) == abstract_action(vb, map.apply(act)));
    }
  }
}

TEST_CASE("grounding returns a matching valid action") {
  Game g = played(testing::canonical_topology(), 5, 10);
  const auto view = abstract_view(g.observation());
  const auto valid = g.valid_actions();
  Rng rng(1);
  for (const auto& ca : concept_candidates(view, valid)) {
    const Action a = ground_action(ca, view, valid, rng);
    CHECK(is_valid(g.observation(), a));
    CHECK(abstract_action(view, a) == ca);
  }
  ConceptAction bogus;
  bogus.source = "nobody";
  CHECK_THROWS_AS(ground_action(bogus, view, valid, rng), GroundingError);
}

TEST_CASE("filters") {
  ConceptState cs;
  cs.known = {{"host_0", 1}, {"unknown_0", 2}, {"external_0", 1}};
  cs.controlled = {{"host_0", 1}};
  cs.networks = {{"net_0_3hosts", 1}, {"external_net", 1}};

  auto ca = [](ActionType t, std::string s, std::string d) {
    ConceptAction c;
    c.type = t;
    c.source = std::move(s);
    c.target = std::move(d);
    return c;
  };
  const std::vector<ConceptAction> all{
      ca(ActionType::ScanNetwork, "host_0", "net_0_3hosts"),
      ca(ActionType::ScanNetwork, "host_0", "external_net"),
      ca(ActionType::FindServices, "host_0", "unknown_0"),
      ca(ActionType::FindServices, "host_0", "external_0"),
      ca(ActionType::FindServices, "external_0", "unknown_0"),
      ca(ActionType::FindData, "host_0", "host_0"),
      ca(ActionType::FindData, "host_0", "unknown_0"),
      ca(ActionType::ExploitService, "host_0", "host_0"),
  };
  const auto kept = filter_concept_actions(cs, all, {});
  REQUIRE(kept.size() == 3);
  CHECK(kept[0] == all[0]);
  CHECK(kept[1] == all[2]);
  CHECK(kept[2] == all[5]);

  const ConceptHistory tried{{ActionType::ScanNetwork, "host_0", "net_0_3hosts"}};
  CHECK(filter_concept_actions(cs, all, tried).size() == 2);

  cs.blocks.insert({"host_0", "unknown_0"});
  CHECK(filter_concept_actions(cs, all, {}).size() == 2);
}

TEST_CASE("exfiltration filter") {
  ConceptState cs;
  cs.known = {{"host_0", 1}, {"host_1", 1}, {"external_0", 1}};
  cs.controlled = {{"host_0", 1}, {"host_1", 1}, {"external_0", 1}};
  cs.data["host_1"] = {DataRef{"admin", "secrets"}};

  auto exf = [](std::string dst, std::string id) {
    ConceptAction c;
    c.type = ActionType::ExfiltrateData;
    c.source = "host_1";
    c.target = std::move(dst);
    c.data = DataRef{"admin", std::move(id)};
    return c;
  };
  const std::vector<ConceptAction> all{exf("external_0", "secrets"), exf("external_0", "logfile"),
                                       exf("host_1", "secrets"), exf("host_0", "secrets")};
  const auto kept = filter_concept_actions(cs, all, {});
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == all[0]);
  CHECK(kept[1] == all[3]);
}

TEST_CASE("shaped reward") {
  CHECK(recompute_reward(-1, EndReason::None, true) == -1.0);
  CHECK(recompute_reward(-1, EndReason::None, false) == -100.0);
  CHECK(recompute_reward(99, EndReason::Success, true) == 1000.0);
  CHECK(recompute_reward(-1, EndReason::Timeout, false) == -100.0);
  CHECK(recompute_reward(-10, EndReason::Failure, false) == -1000.0);
}

TEST_CASE("conceptual agent learns the canonical task and round-trips") {
  const auto topo = testing::canonical_topology();
  ConceptualAgent agent;
  ConceptualTraining schedule;
  schedule.max_episodes_per_variant = 600;
  schedule.epsilon_decay_episodes = 300;
  train_conceptual(agent, {topo}, schedule, 9);
  CHECK_FALSE(agent.q_table().empty());

  agent.set_frozen(true);
  const auto before = agent.q_table();
  const auto traces = run_episodes(topo, agent, 50, 77);
  CHECK(agent.q_table() == before);
  int wins = 0;
  for (const auto& t : traces) wins += t.won() ? 1 : 0;
  CHECK(wins >= 25);

  const auto copy = ConceptualAgent::from_json(agent.to_json());
  CHECK(copy.q_table() == agent.q_table());
  CHECK_THROWS(ConceptualAgent::from_json(json{{"agent", "dqn"}}));
}
