#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "cogform/critic_tree.hpp"

using namespace cogform;
using namespace cogform::critic;
using cogform::llm::Conversation;
using cogform::llm::Role;

namespace {

llm::BackendSpec scripted(std::string name, llm::ScriptFn fn) {
  llm::BackendSpec s;
  s.kind = llm::BackendKind::Scripted;
  s.name = std::move(name);
  s.script = std::move(fn);
  return s;
}

int count_feedback(const Conversation& c) {
  return static_cast<int>(std::count_if(c.begin(), c.end(), [](const llm::ChatMessage& m) {
    return m.role == Role::User && m.content.find("rejected") != std::string::npos;
  }));
}

CriticTreeConfig make_config(int delta, int depth, llm::ScriptFn revisor, std::vector<llm::ScriptFn> critics) {
  CriticTreeConfig cfg;
  cfg.num_critics = delta;
  cfg.max_depth = depth;
  cfg.revisor = scripted("revisor", std::move(revisor));
  const double p = 1.0 / static_cast<double>(critics.size());
  for (std::size_t i = 0; i < critics.size(); ++i) {
    cfg.critics.members.push_back({scripted("critic" + std::to_string(i), std::move(critics[i])), p});
  }
  cfg.critics.seed = 7;
  cfg.vocabulary = {"a", "b", "c"};
  return cfg;
}

}  // namespace

TEST(Verdict, Protocol) {
  const auto ok = parse_verdict("APPROVED");
  EXPECT_TRUE(ok.approved);
  const auto rev = parse_verdict("REVISE: missing negation on c");
  EXPECT_FALSE(rev.approved);
  EXPECT_EQ(rev.feedback, "missing negation on c");
  set_warnings_enabled(false);
  const auto junk = parse_verdict("¯\\_(ツ)_/¯");
  EXPECT_FALSE(junk.approved);
  EXPECT_EQ(junk.feedback, "¯\\_(ツ)_/¯");
  EXPECT_FALSE(parse_verdict("").feedback.empty());
  EXPECT_FALSE(parse_verdict("APPROVED? not really").approved);
  set_warnings_enabled(true);
}

TEST(Extract, StripsFencesAndLabels) {
  EXPECT_EQ(extract_formula("  G (a -> b)\n"), "G (a -> b)");
  EXPECT_EQ(extract_formula("Here you go:\n```ltl\nG (a -> b)\n```"), "G (a -> b)");
  EXPECT_EQ(extract_formula("Reasoning first.\nLTL: G (a -> ! c)"), "G (a -> ! c)");
  EXPECT_EQ(extract_formula("`G (a)`"), "G (a)");
}

TEST(Render, ReplacesKnownPlaceholdersOnly) {
  EXPECT_EQ(render("{x} and {y} {z}", {{"x", "1"}, {"y", "2"}}), "1 and 2 {z}");
}

TEST(CriticTree, AllApproveReturnsRoot) {
  auto cfg = make_config(2, 2, [](auto&) { return "G (a -> b)"; },
                         {[](auto&) { return "APPROVED"; }, [](auto&) { return "APPROVED"; }});
  CriticTree tree(cfg);
  const auto r = tree.run("whenever a, do b", "G(a->b)");
  EXPECT_EQ(r.formula, "G (a -> b)");
  EXPECT_EQ(r.outcome, "approved");
  EXPECT_EQ(r.revisor_calls, 1);
  EXPECT_EQ(r.critic_calls, 2);
  EXPECT_EQ(r.nodes.size(), 1u);
}

TEST(CriticTree, RejectThenApproveChild) {
  auto revisor = [](const Conversation& c) {
    return c.back().content.find("wrong operator") != std::string::npos ? "G (a -> b)" : "F (a -> b)";
  };
  auto critic = [](const Conversation& c) {
    return c.back().content.find("F (a -> b)") != std::string::npos ? "REVISE: wrong operator" : "APPROVED";
  };
  CriticTree tree(make_config(1, 1, revisor, {critic}));
  const auto r = tree.run("always when a then b", "F(a->b)");
  EXPECT_EQ(r.formula, "G (a -> b)");
  EXPECT_EQ(r.nodes.size(), 2u);
  EXPECT_EQ(r.returned_node, 1);
  EXPECT_EQ(r.revisor_calls, 2);
  EXPECT_EQ(r.critic_calls, 2);
}

TEST(CriticTree, AlwaysRejectFallsBackToRoot) {
  int n = 0;
  auto revisor = [&](const Conversation&) { return "G (a -> b" + std::to_string(n++) + ")"; };
  auto reject = [](auto&) { return "REVISE: no"; };
  CriticTree tree(make_config(2, 0, revisor, {reject}));
  const auto r = tree.run("text", "init");
  EXPECT_EQ(r.formula, "G (a -> b0)");
  EXPECT_EQ(r.outcome, "fallback_root");
  EXPECT_EQ(r.nodes.size(), 3u);
  EXPECT_EQ(r.revisor_calls, 3);
  EXPECT_EQ(r.critic_calls, 2);
  EXPECT_TRUE(r.nodes[1].verdicts.empty());
  EXPECT_TRUE(r.nodes[2].verdicts.empty());
}

TEST(CriticTree, BestNodeFallbackIsOptIn) {
  int n = 0;
  auto revisor = [&](const Conversation&) { return "G (a -> b" + std::to_string(n++) + ")"; };
  // Only the first critic reply for node formula b1 approves.
  auto critic = [](const Conversation& c) {
    static int calls = 0;
    const bool b1 = c.back().content.find("b1)") != std::string::npos;
    return (b1 && calls++ == 0) ? "APPROVED" : "REVISE: no";
  };
  auto cfg = make_config(2, 1, revisor, {critic});
  cfg.fallback_to_best = true;
  CriticTree tree(cfg);
  const auto r = tree.run("text", "init");
  EXPECT_EQ(r.outcome, "fallback_best");
  EXPECT_EQ(r.formula, "G (a -> b1)");
}

TEST(CriticTree, UnparseableRevisionIsKept) {
  set_warnings_enabled(false);
  int n = 0;
  auto revisor = [&](const Conversation&) { return n++ == 0 ? std::string("G (a ->") : std::string("G (a -> b)"); };
  auto critic = [](const Conversation& c) {
    return c.back().content.find("does not parse") != std::string::npos ? "REVISE: syntax error" : "APPROVED";
  };
  CriticTree tree(make_config(1, 1, revisor, {critic}));
  const auto r = tree.run("text", "init");
  set_warnings_enabled(true);
  ASSERT_EQ(r.nodes.size(), 2u);
  EXPECT_FALSE(r.nodes[0].parseable);
  EXPECT_EQ(r.nodes[0].formula, "G (a ->");
  EXPECT_EQ(r.formula, "G (a -> b)");
  const auto j = r.to_json();
  EXPECT_FALSE(j["events"][0]["parseable"].get<bool>());
}

TEST(CriticTree, PrefixPropertyAndTermination) {
  int n = 0;
  auto revisor = [&](const Conversation&) { return "G (a -> x" + std::to_string(n++) + ")"; };
  auto reject = [](auto&) { return "REVISE: try again"; };
  for (int delta = 1; delta <= 3; ++delta) {
    for (int depth = 0; depth <= 3; ++depth) {
      CriticTree tree(make_config(delta, depth, revisor, {reject, reject}));
      const auto r = tree.run("text", "init", 3);
      // Level sizes delta^0 .. delta^(depth+1).
      std::size_t expected = 0, level = 1;
      for (int d = 0; d <= depth + 1; ++d, level *= static_cast<std::size_t>(delta)) expected += level;
      EXPECT_EQ(r.nodes.size(), expected);
      EXPECT_EQ(r.revisor_calls, static_cast<int>(expected));
      EXPECT_EQ(r.formula, r.nodes[0].formula);
      for (const auto& node : r.nodes) {
        if (!node.parent) continue;
        const auto& parent = r.nodes[*node.parent].context;
        ASSERT_GT(node.context.size(), parent.size());
        EXPECT_TRUE(std::equal(parent.begin(), parent.end(), node.context.begin()));
        EXPECT_EQ(node.depth, r.nodes[*node.parent].depth + 1);
      }
    }
  }
}

TEST(CriticTree, EarlyReturnStopsExpansion) {
  int n = 0;
  auto revisor = [&](const Conversation& c) { return "G (a -> y" + std::to_string(count_feedback(c)) + "_" + std::to_string(n++) + ")"; };
  // Approve anything that has been revised once.
  auto critic = [](const Conversation& c) {
    return c.back().content.find("y1_") != std::string::npos ? "APPROVED" : "REVISE: more";
  };
  CriticTree tree(make_config(1, 3, revisor, {critic}));
  const auto r = tree.run("text", "init");
  EXPECT_EQ(r.outcome, "approved");
  EXPECT_EQ(r.nodes[r.returned_node].depth, 1);
  for (const auto& node : r.nodes) EXPECT_LE(node.depth, 1);
}

TEST(CriticTree, TraceIsDeterministicAndTimingFree) {
  auto make = [] {
    auto revisor = [](const Conversation& c) { return "G (a -> z" + std::to_string(count_feedback(c)) + ")"; };
    auto a = [](auto&) { return "REVISE: critic a"; };
    auto b = [](const Conversation& c) {
      return c.back().content.find("z2") != std::string::npos ? "APPROVED" : "REVISE: critic b";
    };
    auto cfg = make_config(2, 2, revisor, {a, b});
    return CriticTree(cfg);
  };
  auto t1 = make();
  auto t2 = make();
  const auto j1 = t1.run("text", "init", 11).to_json().dump();
  const auto j2 = t2.run("text", "init", 11).to_json().dump();
  EXPECT_EQ(j1, j2);
  EXPECT_EQ(j1.find("elapsed_ms"), std::string::npos);
}

TEST(CriticTree, SelfRefineProducesFewerRevisions) {
  // Adversarial fixture: critics keep objecting, each with its own complaint,
  // and the revisor responds to the latest complaint.
  auto revisor = [](const Conversation& c) {
    const auto fb = count_feedback(c);
    const auto& last = c.back().content;
    std::string tag = last.find("critic A") != std::string::npos ? "a" : last.find("critic B") != std::string::npos ? "b" : "r";
    return "G (p -> q_" + tag + std::to_string(fb) + ")";
  };
  auto critic_a = [](auto&) { return "REVISE: critic A wants a stronger consequent"; };
  auto critic_b = [](auto&) { return "REVISE: critic B wants a narrower antecedent"; };

  CriticTreeConfig self_refine = make_config(1, 0, revisor, {critic_a});
  CriticTree baseline(self_refine);
  const auto r0 = baseline.run("text", "init");

  auto hetero = make_config(2, 2, revisor, {critic_a, critic_b});
  CriticTree tree(hetero);
  const auto r1 = tree.run("text", "init");
  EXPECT_LT(r0.distinct_revisions(), r1.distinct_revisions());
  EXPECT_EQ(r0.revisor_calls, 2);
}

TEST(CriticTree, ConfigFromJson) {
  const auto dir = std::filesystem::temp_directory_path() / "cogform_critic_prompts";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "critic_user.txt") << "JUDGE {formula}\n";
  nlohmann::json j = {
      {"num_critics", 1},
      {"max_depth", 0},
      {"revisor", {{"kind", "scripted"}, {"name", "rev"}, {"default", "G (a -> b)"}}},
      {"critics", {{{"probability", 1.0}, {"backend", {{"kind", "scripted"}, {"name", "c"}, {"rules", {{{"contains", "JUDGE G (a -> b)"}, {"reply", "APPROVED"}}}}, {"default", "REVISE: x"}}}}}},
      {"prompts", dir.string()},
  };
  CriticTree tree(config_from_json(j));
  const auto r = tree.run("text", "init");
  EXPECT_EQ(r.outcome, "approved");

  j["num_critics"] = 0;
  EXPECT_THROW(config_from_json(j), SchemaError);
  j["num_critics"] = 1;
  j["critics"][0]["probability"] = 0.4;
  EXPECT_THROW(config_from_json(j), SchemaError);
}
