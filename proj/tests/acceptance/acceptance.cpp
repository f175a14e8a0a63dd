// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <cstdlib>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "cogform/critic_tree.hpp"
#include "cogform/crl_trainer.hpp"
#include "cogform/embedding.hpp"
#include "cogform/errors.hpp"
#include "cogform/ltl.hpp"
#include "cogform/metrics.hpp"
#include "cogform/production_engine.hpp"
#include "cogform/rule_compiler.hpp"
#include "support/oracles.hpp"
#include "support/random_formula.hpp"

using namespace cogform;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kFixtures = COGFORM_FIXTURE_DIR;
const std::string kCli = COGFORM_CLI;

struct Result {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1. Round-trip and canonical idempotence on random ASTs.
void round_trip(Result& r) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  int failures = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto f = testing::random_formula(rng, 8);
    const auto c = ltl::canonicalize(f);
    if (ltl::parse(ltl::to_string(f)) != f || ltl::canonicalize(c) != c) {
      if (failures++ == 0) r.require(false, ltl::to_string(f));
    }
  }
  const double s = seconds_since(t0);
  r.require(s < 5.0, "took " + std::to_string(s) + " s");
  r.detail << "100000 formulas, " << failures << " failures, " << s << " s";
}

// 2. The classification fixture.
void taxonomy(Result& r) {
  std::ifstream in(kFixtures + "/ltl/taxonomy.jsonl");
  std::string line;
  int cases = 0, ok = 0;
  auto literals = [](const std::vector<ltl::Literal>& ls) {
    std::vector<std::string> out;
    for (const auto& l : ls) out.push_back(ltl::to_string(l));
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = nlohmann::json::parse(line);
    ++cases;
    const auto v = ltl::classify(ltl::parse(c["formula"].get<std::string>()));
    bool match = false;
    if (c["verdict"] == "Convertible") {
      if (const auto* conv = std::get_if<ltl::Convertible>(&v)) {
        auto want_a = c["antecedent"].get<std::vector<std::string>>();
        auto want_c = c["consequent"].get<std::vector<std::string>>();
        auto got_a = literals(conv->antecedent), got_c = literals(conv->consequent);
        for (auto* xs : {&want_a, &want_c, &got_a, &got_c}) std::sort(xs->begin(), xs->end());
        match = want_a == got_a && want_c == got_c;
      }
    } else if (const auto* err = std::get_if<ltl::InferenceError>(&v)) {
      match = err->reason == c["reason"];
    }
    if (match) ++ok;
    r.require(match, c["formula"].get<std::string>());
  }
  r.require(cases == 40, "expected 40 cases, found " + std::to_string(cases));
  r.detail << ok << "/" << cases << " cases";
}

llm::BackendSpec scripted(std::string name, llm::ScriptFn fn) {
  llm::BackendSpec s;
  s.kind = llm::BackendKind::Scripted;
  s.name = std::move(name);
  s.script = std::move(fn);
  return s;
}

critic::CriticTreeConfig tree_config(int delta, int depth, llm::ScriptFn revisor, std::vector<llm::ScriptFn> critics) {
  critic::CriticTreeConfig cfg;
  cfg.num_critics = delta;
  cfg.max_depth = depth;
  cfg.revisor = scripted("revisor", std::move(revisor));
  for (std::size_t i = 0; i < critics.size(); ++i) {
    cfg.critics.members.push_back(
        {scripted("critic" + std::to_string(i), std::move(critics[i])), 1.0 / static_cast<double>(critics.size())});
  }
  cfg.critics.seed = 7;
  cfg.vocabulary = {"a", "b", "p", "q"};
  return cfg;
}

int feedback_count(const llm::Conversation& c) {
  return static_cast<int>(std::count_if(c.begin(), c.end(), [](const llm::ChatMessage& m) {
    return m.role == llm::Role::User && m.content.find("rejected") != std::string::npos;
  }));
}

// 3. Critic tree traces and the single-critic contrast.
void critic_tree(Result& r) {
  {
    critic::CriticTree tree(tree_config(2, 2, [](auto&) { return "G (a -> b)"; },
                                        {[](auto&) { return "APPROVED"; }, [](auto&) { return "APPROVED"; }}));
    const auto t = tree.run("whenever a, do b", "G(a->b)");
    r.require(t.formula == "G (a -> b)" && t.nodes.size() == 1 && t.revisor_calls == 1 && t.critic_calls == 2,
              "all-approve trace");
  }
  {
    auto revisor = [](const llm::Conversation& c) {
      return c.back().content.find("wrong operator") != std::string::npos ? "G (a -> b)" : "F (a -> b)";
    };
    auto critic = [](const llm::Conversation& c) {
      return c.back().content.find("F (a -> b)") != std::string::npos ? "REVISE: wrong operator" : "APPROVED";
    };
    critic::CriticTree tree(tree_config(1, 1, revisor, {critic}));
    const auto t = tree.run("always when a then b", "F(a->b)");
    r.require(t.formula == "G (a -> b)" && t.nodes.size() == 2 && t.returned_node == 1 && t.revisor_calls == 2 &&
                  t.critic_calls == 2,
              "reject-then-approve trace");
  }
  {
    int n = 0;
    auto revisor = [&n](const llm::Conversation&) { return "G (a -> b" + std::to_string(n++) + ")"; };
    critic::CriticTree tree(tree_config(2, 0, revisor, {[](auto&) { return "REVISE: no"; }}));
    const auto t = tree.run("text", "init");
    r.require(t.formula == "G (a -> b0)" && t.outcome == "fallback_root" && t.nodes.size() == 3 &&
                  t.revisor_calls == 3 && t.critic_calls == 2,
              "always-reject trace");
  }
  // Critics that never agree, each with its own complaint.
  auto revisor = [](const llm::Conversation& c) {
    const auto& last = c.back().content;
    const std::string tag = last.find("critic A") != std::string::npos   ? "a"
                            : last.find("critic B") != std::string::npos ? "b"
                                                                         : "r";
    return "G (p -> q_" + tag + std::to_string(feedback_count(c)) + ")";
  };
  auto critic_a = [](auto&) { return "REVISE: critic A wants a stronger consequent"; };
  auto critic_b = [](auto&) { return "REVISE: critic B wants a narrower antecedent"; };
  critic::CriticTree single(tree_config(1, 0, revisor, {critic_a}));
  critic::CriticTree hetero(tree_config(2, 2, revisor, {critic_a, critic_b}));
  const auto s = single.run("text", "init").distinct_revisions();
  const auto h = hetero.run("text", "init").distinct_revisions();
  r.require(s < h, "single-critic run is not smaller");
  r.detail << "3/3 traces; distinct revisions single=" << s << " tree=" << h;
}

// 4. Selection, update and decay numerics.
void numerics(Result& r) {
  std::mt19937_64 g(42);
  std::uniform_real_distribution<double> util(-50, 50);
  double worst_sum = 0;
  for (std::size_t n : {1, 2, 3, 10, 100, 500, 1000}) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> u(n);
      for (auto& x : u) x = util(g);
      const auto p = softmax(u, std::sqrt(2.0));
      double sum = 0;
      for (double x : p) {
        sum += x;
        r.require(x >= 0, "negative probability");
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1));
    }
  }
  r.require(worst_sum <= 1e-9, "softmax sum off by " + std::to_string(worst_sum));

  // The contraction factor (u_n - r) / (u_0 - r) against (1 - alpha)^n. In
  // absolute terms a rounded update stalls about ulp(r) / (2 alpha) from r.
  const double alpha = 2e-4, reward = 10.0, u0 = 0.0;
  double u = u0, worst_factor = 0, worst_abs = 0;
  for (int n = 1; n <= 1000000; ++n) {
    u = utility_update(u, reward, alpha);
    if (n % 1000 == 0) {
      const double factor = std::pow(1 - alpha, n);
      worst_factor = std::max(worst_factor, std::abs((u - reward) / (u0 - reward) - factor));
      worst_abs = std::max(worst_abs, std::abs(u - (reward + factor * (u0 - reward))));
    }
  }
  r.require(worst_factor <= 1e-12, "contraction factor off by " + std::to_string(worst_factor));

  std::uniform_int_distribution<std::int64_t> step(0, 5000);
  int decay_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::int64_t a = step(g), b = step(g);
    const std::int64_t fire = std::min(a, b), at = std::max(a, b);
    const double rew = (i % 2) ? 10.0 : 0.0;
    if (decayed_reward(rew, fire, at, 0.01) != rew - 0.01 * static_cast<double>(at - fire)) ++decay_mismatch;
  }
  const auto window = reward_decompose(10, {{"x", 2}, {"y", 5}, {"x", 9}}, 9, 0.01);
  r.require(window == std::vector<double>{10 - 0.01 * 7, 10 - 0.01 * 4, 10.0}, "decomposed window");
  r.require(decay_mismatch == 0, std::to_string(decay_mismatch) + " decay mismatches");
  r.detail << "softmax |sum-1| <= " << worst_sum << ", contraction factor error " << worst_factor
           << " (absolute " << worst_abs << ")" << ", decay mismatches "
           << decay_mismatch;
}

ProductionRule dual_slot(std::string lon, std::string lat) {
  ProductionRule p;
  p.conditions = normalize_conditions({{"a", Cmp::Eq, "true"}});
  p.effects.longitudinal = std::move(lon);
  p.effects.lateral = std::move(lat);
  p.name = name_rule(p.conditions, p.effects);
  return p;
}

// 5. Convergence on two always-matching rules, one agreeing with the reference.
void convergence(Result& r) {
  const auto t0 = Clock::now();
  const std::vector<ProductionRule> rules = {dual_slot("brake", "keep_lane"), dual_slot("accelerate", "change_left")};
  std::vector<Episode> episodes;
  for (int e = 0; e < 10; ++e) {
    Episode ep;
    ep.id = "e" + std::to_string(e);
    for (int t = 0; t < 10; ++t) ep.steps.push_back({{{{"a", "true"}}, t}, "brake", "keep_lane"});
    episodes.push_back(std::move(ep));
  }
  TrainConfig cfg;  // alpha 2e-4, beta 0.01, sigma sqrt(2), u0 0, rewards 10 and 0
  cfg.epochs = 20;
  cfg.seed = 5;
  const EngineConfig engine{cfg.sigma};
  auto js_at = [&](const std::vector<ProductionRule>& rs, std::uint64_t seed) {
    return metrics::decision_distributions(rs, episodes, engine, seed, 10, 10000).mean_js();
  };
  std::vector<double> js = {js_at(rules, 100)};
  const auto res = train(rules, episodes, cfg, [&](int epoch, const std::vector<ProductionRule>& rs) {
    js.push_back(js_at(rs, 101 + static_cast<std::uint64_t>(epoch)));
    return js.back();
  });
  const auto& good = res.rules[0].effects.longitudinal == "brake" ? res.rules[0] : res.rules[1];
  const auto& bad = &good == &res.rules[0] ? res.rules[1] : res.rules[0];
  const double p = softmax({good.utility, bad.utility}, cfg.sigma)[0];
  r.require(res.steps == 2000, "expected 2000 decision steps");
  r.require(p > 0.9, "selection probability " + std::to_string(p));
  double worst_rise = -1;
  for (std::size_t i = 1; i < js.size(); ++i) worst_rise = std::max(worst_rise, js[i] - js[i - 1]);
  r.require(worst_rise <= 0.02, "JS rose by " + std::to_string(worst_rise));
  r.require(js.back() < js.front(), "JS did not decrease overall");
  const double s = seconds_since(t0);
  r.require(s < 60, "took " + std::to_string(s) + " s");
  r.detail << "p(agree)=" << p << " after " << res.steps << " steps (" << res.updates << " slot updates), JS "
           << js.front() << " -> " << js.back() << ", worst rise " << worst_rise << ", " << s << " s";
}

// 6. Metric oracles.
void metric_oracles(Result& r) {
  std::mt19937_64 g(6);
  double worst_js = 0, worst_bleu = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + g() % 12;
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = (g() % 4 == 0) ? 0.0 : std::uniform_real_distribution<double>(0, 1)(g);
      q[k] = (g() % 4 == 0) ? 0.0 : std::uniform_real_distribution<double>(0, 1)(g);
      sp += p[k];
      sq += q[k];
    }
    if (sp == 0) p[0] = sp = 1;
    if (sq == 0) q[0] = sq = 1;
    for (auto& x : p) x /= sp;
    for (auto& x : q) x /= sq;
    worst_js = std::max(worst_js, std::abs(metrics::js_divergence(p, q) - testing::oracle_js(p, q)));
  }
  static const char* vocab[] = {"G", "(", ")", "->", "&", "!", "a", "b", "c", "d"};
  for (int i = 0; i < 1000; ++i) {
    auto tokens = [&] {
      std::vector<std::string> t(1 + g() % 15);
      for (auto& x : t) x = vocab[g() % 10];
      return t;
    };
    const auto c = tokens(), ref = tokens();
    worst_bleu = std::max(worst_bleu, std::abs(metrics::ltl_bleu(c, ref) - testing::oracle_bleu(c, ref)));
  }
  r.require(worst_js <= 1e-12, "JS error " + std::to_string(worst_js));
  r.require(worst_bleu <= 1e-9, "BLEU error " + std::to_string(worst_bleu));
  r.detail << "max JS error " << worst_js << ", max BLEU error " << worst_bleu;
}

// 7. Deduplication against brute-force cosine.
void dedup(Result& r) {
  std::mt19937_64 g(7);
  HashedTrigramEmbedding embedding;
  int agree = 0, duplicates = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ProductionRule> store;
    std::vector<std::string> names;
    const int n = static_cast<int>(g() % 25);
    for (int i = 0; i < n; ++i) {
      names.push_back(testing::random_name(g) + "_" + std::to_string(i));
      store.push_back(testing::rule_named(names.back()));
    }
    const auto cand = testing::random_name(g);
    const bool got = dedup_check(testing::rule_named(cand), store, embedding, 0.9).duplicate;
    const bool want = testing::oracle_duplicate(cand, names, 0.9);
    duplicates += want;
    if (got == want) ++agree;
  }
  r.require(agree == 1000, std::to_string(1000 - agree) + " disagreements");
  r.detail << agree << "/1000 configurations agree (" << duplicates << " duplicates)";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" + kCli + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 8. End-to-end reproducibility through the command-line tool.
void end_to_end(Result& r) {
  const auto dir = fs::temp_directory_path() / "cogform_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg = "--config '" + kFixtures + "/highway/replay.json' --seed 7 -q";
  r.require(run_cli("run-all " + cfg + " --out first", dir) == 0, "first run-all failed");
  r.require(run_cli("run-all " + cfg + " --out second", dir) == 0, "second run-all failed");
  r.require(run_cli("run-all " + cfg + " --mode supply --out supply", dir) == 0, "supply run-all failed");
  if (!r.pass) return;
  const auto m1 = slurp(dir / "first" / "manifest.json"), m2 = slurp(dir / "second" / "manifest.json");
  r.require(!m1.empty() && m1 == m2, "manifests differ");

  // Pair rules by source segment; only precondition extensions may differ.
  const auto lit = rules_from_json(nlohmann::json::parse(slurp(dir / "first" / "rules.json")));
  const auto sup = rules_from_json(nlohmann::json::parse(slurp(dir / "supply" / "rules.json")));
  std::map<std::string, const ProductionRule*> by_source;
  for (const auto& p : lit) by_source[p.provenance.source_id] = &p;
  r.require(lit.size() == sup.size(), "store sizes differ");
  int extended = 0;
  for (const auto& p : sup) {
    const auto it = by_source.find(p.provenance.source_id);
    if (it == by_source.end()) {
      r.require(false, "supply rule without literal counterpart: " + p.name);
      continue;
    }
    const auto& base = *it->second;
    if (p.name == base.name) continue;
    ++extended;
    bool superset = p.conditions.size() > base.conditions.size();
    for (const auto& c : base.conditions) {
      superset = superset && std::any_of(p.conditions.begin(), p.conditions.end(), [&](const Condition& x) {
                   return x.feature == c.feature && x.cmp == c.cmp && x.value == c.value;
                 });
    }
    r.require(superset && p.effects.longitudinal == base.effects.longitudinal &&
                  p.effects.lateral == base.effects.lateral,
              "rule differs beyond preconditions: " + p.name);
  }
  const auto js_lit = nlohmann::json::parse(slurp(dir / "first" / "metrics.json"))["js"]["final"].get<double>();
  const auto js_sup = nlohmann::json::parse(slurp(dir / "supply" / "metrics.json"))["js"]["final"].get<double>();
  r.require(js_sup >= js_lit, "supply JS below literal JS");
  r.detail << "manifests identical, " << extended << " extended rules, final JS literal=" << js_lit
           << " supply=" << js_sup;
}

}  // namespace

int main() {
  set_warnings_enabled(false);
  const std::vector<std::pair<std::string, std::function<void(Result&)>>> criteria = {
      {"LTL round-trip and canonical idempotence", round_trip},
      {"convertibility taxonomy", taxonomy},
      {"critic tree conformance", critic_tree},
      {"selection, update and decay numerics", numerics},
      {"CRL convergence", convergence},
      {"JS and BLEU oracles", metric_oracles},
      {"deduplication equivalence", dedup},
      {"end-to-end reproducibility", end_to_end},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Result r;
    try {
      criteria[i].second(r);
    } catch (const std::exception& e) {
      r.require(false, std::string("exception: ") + e.what());
    }
    failed += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << r.detail.str()
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
