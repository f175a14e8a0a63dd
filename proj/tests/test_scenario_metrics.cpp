#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "cogform/metrics.hpp"
#include "cogform/scenario_sim.hpp"
#include "support/oracles.hpp"

using namespace cogform;
using namespace cogform::sim;
using namespace cogform::metrics;
using namespace cogform::testing;

namespace {

ProductionRule make_rule(std::vector<Condition> conds, std::optional<std::string> lon, std::optional<std::string> lat,
                         double u = 0.0) {
  ProductionRule r;
  r.conditions = normalize_conditions(std::move(conds));
  r.effects.longitudinal = std::move(lon);
  r.effects.lateral = std::move(lat);
  r.name = name_rule(r.conditions, r.effects);
  r.utility = u;
  return r;
}

}  // namespace

TEST(ScenarioKb, Vocabularies) {
  const auto hw = scenario_kb(Archetype::HighwayCutIn);
  EXPECT_TRUE(hw.feature("front_gap_closing"));
  EXPECT_TRUE(hw.feature("right_vehicle_signaling"));
  EXPECT_EQ(hw.longitudinal_actions, (std::vector<std::string>{"accelerate", "keep", "decelerate", "brake"}));
  EXPECT_EQ(hw.lateral_actions, (std::vector<std::string>{"keep_lane", "change_left", "change_right"}));
  std::vector<std::set<std::string>> sets;
  for (const auto a : kAllArchetypes) {
    const auto kb = scenario_kb(a);
    std::set<std::string> names;
    for (const auto& f : kb.features) names.insert(f.name);
    sets.push_back(names);
    EXPECT_EQ(kb.longitudinal_actions, hw.longitudinal_actions);
    EXPECT_EQ(kb.lateral_actions, hw.lateral_actions);
  }
  EXPECT_NE(sets[0], sets[1]);
  EXPECT_NE(sets[1], sets[2]);
  EXPECT_NE(sets[0], sets[2]);
  EXPECT_TRUE(scenario_kb(Archetype::SignalizedIntersection).feature("signal_state"));
  EXPECT_TRUE(scenario_kb(Archetype::LaneChangeInterference).feature("adjacent_vehicle_signaling"));
}

TEST(Generate, NoiselessFollowsTableAndValidates) {
  for (const auto a : kAllArchetypes) {
    ScenarioSpec spec;
    spec.archetype = a;
    spec.seed = 17;
    const auto table = default_table(a);
    const auto eps = generate(spec, ReferencePolicy::single(table), 70);
    ASSERT_EQ(eps.size(), 70u);
    EXPECT_NO_THROW(validate_episodes(eps, scenario_kb(a)));
    for (const auto& e : eps) {
      for (const auto& s : e.steps) {
        const auto& entry = table.lookup(s.state.features);
        EXPECT_EQ(s.longitudinal, entry.longitudinal);
        EXPECT_EQ(s.lateral, entry.lateral);
      }
    }
  }
}

TEST(Generate, DeterministicPerSeed) {
  ScenarioSpec spec;
  spec.noise = 0.2;
  spec.seed = 5;
  const auto policy = ReferencePolicy::single(default_table(spec.archetype));
  std::stringstream a, b, c;
  write_episodes(a, generate(spec, policy, 30));
  write_episodes(b, generate(spec, policy, 30));
  spec.seed = 6;
  write_episodes(c, generate(spec, policy, 30));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Generate, MixtureFrequencies) {
  ScenarioSpec spec;
  spec.archetype = Archetype::SignalizedIntersection;
  spec.episode_length = 1;
  spec.seed = 99;
  ReferencePolicy p;
  p.tables = {default_table(spec.archetype), assertive_table(spec.archetype)};
  p.weights = {0.7, 0.3};
  const auto eps = generate(spec, p, 10000);
  int first = 0;
  for (const auto& e : eps) first += e.subject.rfind("cautious", 0) == 0;
  EXPECT_NEAR(first / 10000.0, 0.7, 0.02);
}

TEST(Generate, PolicyIdentifiability) {
  for (const auto a : kAllArchetypes) {
    for (const auto& table : {default_table(a), assertive_table(a)}) {
      ScenarioSpec spec;
      spec.archetype = a;
      spec.seed = 3;
      const auto eps = generate(spec, ReferencePolicy::single(table), 200);
      // Oracle learner: memorize state -> action; it must never see a conflict
      // and must agree with the table everywhere it has data.
      std::map<std::string, std::string> learned;
      for (const auto& e : eps) {
        for (const auto& s : e.steps) {
          const auto key = state_key(s.state.features);
          const auto act = action_key(s.longitudinal, s.lateral);
          const auto [it, fresh] = learned.emplace(key, act);
          EXPECT_EQ(it->second, act);
        }
      }
      for (const auto& e : eps) {
        for (const auto& s : e.steps) {
          const auto& entry = table.lookup(s.state.features);
          EXPECT_EQ(learned.at(state_key(s.state.features)), entry.longitudinal + "|" + entry.lateral);
        }
      }
    }
  }
}

TEST(Generate, RejectsBadSpecsAndPolicies) {
  ScenarioSpec spec;
  spec.noise = 1.0;
  EXPECT_THROW(generate(spec, ReferencePolicy::single(default_table(spec.archetype)), 1), SchemaError);
  spec.noise = 0;
  auto t = default_table(spec.archetype);
  t.entries.pop_back();
  EXPECT_THROW(generate(spec, ReferencePolicy::single(t), 1), SchemaError);
  ReferencePolicy p{{default_table(spec.archetype)}, {0.5}};
  EXPECT_THROW(generate(spec, p, 1), SchemaError);
}

TEST(MatchAccuracy, Examples) {
  EXPECT_EQ(ltl_match_accuracy({"G (a -> b)", "F c"}, {"G (a -> b)", "F c"}), 1.0);
  EXPECT_EQ(ltl_match_accuracy({"G(b & a -> c)"}, {"G(a & b -> c)"}), 1.0);
  EXPECT_LE(ltl_match_accuracy({"G (a ->", "a", "b", "c"}, {"a", "a", "b", "c"}), 0.75);
  EXPECT_THROW(ltl_match_accuracy({"a"}, {}), std::invalid_argument);
}

TEST(Bleu, Examples) {
  const std::vector<std::string> x = {"G", "(", "a", "->", "b", ")"};
  EXPECT_DOUBLE_EQ(ltl_bleu(x, x), 1.0);
  EXPECT_EQ(ltl_bleu(std::vector<std::string>{"p", "q"}, std::vector<std::string>{"r", "s"}), 0.0);
  EXPECT_EQ(ltl_bleu(std::vector<std::string>{}, x), 0.0);
  std::vector<std::string> ref, pred;
  for (int i = 0; i < 10; ++i) ref.push_back("t" + std::to_string(i));
  pred = ref;
  for (int i = 7; i < 10; ++i) pred[static_cast<std::size_t>(i)] = "z" + std::to_string(i);
  EXPECT_NEAR(ltl_bleu(pred, ref), oracle_bleu(pred, ref), 1e-9);
  EXPECT_DOUBLE_EQ(ltl_bleu("G (a -> b)", "G(a->b)"), 1.0);
}

TEST(Bleu, MatchesOracleOnRandomPairs) {
  std::mt19937_64 g(12);
  const std::vector<std::string> vocab = {"G", "F", "X", "U", "(", ")", "&", "|", "->", "!", "a", "b", "c"};
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> p(g() % 15), r(1 + g() % 15);
    for (auto& t : p) t = vocab[g() % vocab.size()];
    for (auto& t : r) t = vocab[g() % vocab.size()];
    const double s = ltl_bleu(p, r);
    EXPECT_NEAR(s, oracle_bleu(p, r), 1e-9);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Bleu, CorpusPoolsCounts) {
  const std::vector<std::string> a = {"G", "(", "a", ")"};
  EXPECT_DOUBLE_EQ(corpus_bleu({a, a}, {a, a}), 1.0);
  EXPECT_EQ(corpus_bleu({{}}, {a}), 0.0);
}

TEST(Js, Examples) {
  EXPECT_EQ(js_divergence(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}), 0.0);
  EXPECT_DOUBLE_EQ(js_divergence(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0);
  EXPECT_NEAR(js_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), oracle_js({0.5, 0.5}, {1, 0}), 1e-12);
  EXPECT_DOUBLE_EQ(js_divergence(Distribution{{"x", 1.0}}, Distribution{{"y", 1.0}}), 1.0);
}

TEST(Js, OracleSymmetryAndRange) {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + g() % 8;
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = g() % 5 == 0 ? 0 : u(g);
      q[k] = u(g);
      sp += p[k];
      sq += q[k];
    }
    if (sp == 0) p[0] = sp = 1;
    for (auto& x : p) x /= sp;
    for (auto& x : q) x /= sq;
    const double d = js_divergence(p, q);
    EXPECT_NEAR(d, oracle_js(p, q), 1e-12);
    EXPECT_NEAR(d, js_divergence(q, p), 1e-12);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(Distributions, DegenerateAndPointMass) {
  Episode e;
  for (int t = 0; t < 50; ++t) e.steps.push_back({{{{"a", "true"}}, t}, "brake", "keep_lane"});
  const std::vector<ProductionRule> rules = {make_rule({{"a", Cmp::Eq, "true"}}, "brake", "keep_lane")};
  set_warnings_enabled(false);
  const auto top = decision_distributions(rules, {e}, {}, 1);
  set_warnings_enabled(true);
  ASSERT_EQ(top.states.size(), 1u);
  EXPECT_TRUE(top.truncated);
  EXPECT_EQ(top.states[0].runs, 50u);
  EXPECT_EQ(top.states[0].model.size(), 1u);
  EXPECT_EQ(top.states[0].js, 0.0);
}

TEST(Distributions, TopTenByCountThenKey) {
  Episode e;
  int t = 0;
  // state v=k appears k+1 times, plus two ties at count 1
  for (int k = 0; k < 12; ++k) {
    for (int r = 0; r <= k; ++r) e.steps.push_back({{{{"v", std::to_string(k)}}, t++}, "keep", "keep_lane"});
  }
  const auto top = decision_distributions({}, {e}, {}, 1);
  ASSERT_EQ(top.states.size(), 10u);
  EXPECT_EQ(top.states[0].state, "v=11");
  EXPECT_EQ(top.states[9].state, "v=2");
  EXPECT_FALSE(top.truncated);
  // No rules: the model always says none|none.
  EXPECT_EQ(top.states[0].model.begin()->first, "none|none");
  EXPECT_DOUBLE_EQ(top.states[0].js, 1.0);
}

TEST(Distributions, ImitatingAgentWithinBinomialBound) {
  // Reference splits 50/50 between two actions; the agent has two equal rules.
  Episode e;
  const int n = 400;
  for (int t = 0; t < n; ++t) e.steps.push_back({{{{"a", "true"}}, t}, t % 2 ? "brake" : "keep", std::nullopt});
  const std::vector<ProductionRule> rules = {make_rule({{"a", Cmp::Eq, "true"}}, "brake", std::nullopt),
                                             make_rule({{"a", Cmp::Eq, "true"}}, "keep", std::nullopt)};
  set_warnings_enabled(false);
  const auto top = decision_distributions(rules, {e}, {}, 77);
  set_warnings_enabled(true);
  const double delta = 3 * std::sqrt(0.25 / n);
  const double bound = oracle_js({0.5, 0.5}, {0.5 + delta, 0.5 - delta});
  EXPECT_LE(top.states[0].js, bound);
}

TEST(Rsr, Counting) {
  std::vector<ReasoningTrace> t(4);
  EXPECT_EQ(rsr(t), 0.0);
  for (int i = 0; i < 3; ++i) t[static_cast<std::size_t>(i)].matched = true;
  EXPECT_DOUBLE_EQ(rsr(t), 0.75);
  for (auto& x : t) x.matched = true;
  EXPECT_EQ(rsr(t), 1.0);
}
