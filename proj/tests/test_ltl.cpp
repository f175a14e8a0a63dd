#include <gtest/gtest.h>

#include <random>

#include "cogform/ltl.hpp"
#include "support/random_formula.hpp"

using namespace cogform::ltl;

namespace {

Formula A(const char* n) { return Formula::atom(n); }

Convertible convertible(const std::string& text) {
  const auto v = classify(parse(text));
  EXPECT_TRUE(is_convertible(v)) << text << " -> " << to_json(v).dump();
  return is_convertible(v) ? std::get<Convertible>(v) : Convertible{};
}

std::string error_reason(const std::string& text) {
  const auto v = classify(parse(text));
  EXPECT_FALSE(is_convertible(v)) << text;
  return is_convertible(v) ? "" : std::get<InferenceError>(v).reason;
}

}  // namespace

TEST(LtlParse, GloballyImplication) {
  EXPECT_EQ(parse("G (a -> b)"), Formula::globally(Formula::implication(A("a"), A("b"))));
}

TEST(LtlParse, UntilWithNegatedConjunction) {
  EXPECT_EQ(parse("a U (b & ! c)"),
            Formula::until(A("a"), Formula::conjunction(A("b"), Formula::negation(A("c")))));
}

TEST(LtlParse, ConjunctiveAntecedent) {
  EXPECT_EQ(parse("G ((a & b) -> c)"),
            Formula::globally(Formula::implication(Formula::conjunction(A("a"), A("b")), A("c"))));
}

TEST(LtlParse, PrecedenceAndAssociativity) {
  EXPECT_EQ(parse("a -> b -> c"), Formula::implication(A("a"), Formula::implication(A("b"), A("c"))));
  EXPECT_EQ(parse("a & b & c"), Formula::conjunction(Formula::conjunction(A("a"), A("b")), A("c")));
  EXPECT_EQ(parse("a | b & c"), Formula::disjunction(A("a"), Formula::conjunction(A("b"), A("c"))));
  EXPECT_EQ(parse("a U b & c"), Formula::conjunction(Formula::until(A("a"), A("b")), A("c")));
  EXPECT_EQ(parse("!a U b"), Formula::until(Formula::negation(A("a")), A("b")));
  EXPECT_EQ(parse("G F a"), Formula::globally(Formula::finally(A("a"))));
  EXPECT_EQ(parse("a && b || c"), Formula::disjunction(Formula::conjunction(A("a"), A("b")), A("c")));
}

TEST(LtlParse, FalseIsNegatedTrue) {
  EXPECT_EQ(parse("false"), Formula::negation(Formula::truth()));
  EXPECT_EQ(parse("X true"), Formula::next(Formula::truth()));
}

TEST(LtlParse, KeywordPrefixedIdentifiersAreAtoms) {
  EXPECT_EQ(parse("Ga"), A("Ga"));
  EXPECT_EQ(parse("trueish"), A("trueish"));
  EXPECT_EQ(parse("G a"), Formula::globally(A("a")));
}

TEST(LtlParse, ErrorsCarryOffsetAndExpectedSet) {
  try {
    parse("G (a -> )");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 8u);
    EXPECT_EQ(e.found(), ")");
    const auto& exp = e.expected();
    EXPECT_NE(std::find(exp.begin(), exp.end(), "identifier"), exp.end());
  }
  try {
    parse("(a & b");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 6u);
    EXPECT_EQ(e.expected().front(), ")");
  }
  try {
    parse("a b");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
  EXPECT_THROW(parse("a $ b"), ParseError);
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("   "), ParseError);
  EXPECT_FALSE(try_parse("G (").has_value());
}

TEST(LtlAtom, RejectsInvalidAndReservedNames) {
  EXPECT_THROW(Formula::atom(""), std::invalid_argument);
  EXPECT_THROW(Formula::atom("1a"), std::invalid_argument);
  EXPECT_THROW(Formula::atom("a-b"), std::invalid_argument);
  EXPECT_THROW(Formula::atom("G"), std::invalid_argument);
  EXPECT_THROW(Formula::atom("true"), std::invalid_argument);
  EXPECT_NO_THROW(Formula::atom("_x9"));
}

TEST(LtlPrint, Examples) {
  EXPECT_EQ(to_string(Formula::globally(A("a"))), "G (a)");
  EXPECT_EQ(to_string(Formula::conjunction(A("a"), Formula::conjunction(A("b"), A("c")))), "(a & (b & c))");
  EXPECT_EQ(to_string(Formula::until(Formula::truth(), A("a"))), "(true U a)");
  EXPECT_EQ(to_string(parse("G (a -> b)")), "G (a -> b)");
  EXPECT_EQ(to_string(parse("!!a")), "! (! (a))");
}

TEST(LtlProperty, RoundTripOnRandomFormulas) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 3000; ++i) {
    const Formula f = cogform::testing::random_formula(rng, 8);
    const std::string text = to_string(f);
    ASSERT_EQ(parse(text), f) << text;
    ASSERT_EQ(from_json(to_json(f)), f) << text;
  }
}

TEST(LtlCanonical, Examples) {
  EXPECT_EQ(canonicalize(parse("a -> b")), Formula::negation(Formula::conjunction(A("a"), Formula::negation(A("b")))));
  EXPECT_EQ(canonicalize(parse("!!a")), A("a"));
  EXPECT_EQ(canonicalize(parse("b & a")), canonicalize(parse("a & b")));
  EXPECT_EQ(canonicalize(parse("a & true")), A("a"));
  EXPECT_EQ(canonicalize(parse("F a")), Formula::until(Formula::truth(), A("a")));
  EXPECT_EQ(canonicalize(parse("(c & a) & (b & a)")), canonicalize(parse("a & (b & c)")));
  EXPECT_EQ(canonicalize(parse("true & true")), Formula::truth());
}

TEST(LtlCanonical, RuleShapeKeepsGloballyImplication) {
  EXPECT_EQ(canonicalize(parse("G (b & a -> c)")), parse("G (a & b -> c)"));
  EXPECT_EQ(canonicalize(parse("G ((a & !!c & true) -> (d & b))")), parse("G ((a & c) -> (b & d))"));
  // Only the root keeps G; a nested rule is rewritten.
  const Formula nested = canonicalize(parse("x & G (a -> b)"));
  EXPECT_EQ(nested.op(), Op::And);
  EXPECT_EQ(to_string(nested).find("G"), std::string::npos);
}

TEST(LtlProperty, CanonicalIdempotenceAndVerdictConsistency) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 3000; ++i) {
    const Formula f = (i % 4 == 0) ? cogform::testing::random_rule_formula(rng) : cogform::testing::random_formula(rng, 8);
    const Formula c = canonicalize(f);
    ASSERT_EQ(canonicalize(c), c) << to_string(f);
    ASSERT_EQ(classify(c), classify(f)) << to_string(f);
  }
}

TEST(LtlClassify, PaperShapes) {
  const auto c = convertible("G (a -> b)");
  EXPECT_EQ(c.antecedent, (std::vector<Literal>{{"a", true}}));
  EXPECT_EQ(c.consequent, (std::vector<Literal>{{"b", true}}));
  EXPECT_EQ(error_reason("F a"), "Finally");
  EXPECT_EQ(error_reason("a U b"), "Until");
  EXPECT_EQ(error_reason("X a"), "Next");
}

TEST(LtlClassify, ConjunctionFlattening) {
  const auto c = convertible("G ((a & !c) -> (b & d))");
  EXPECT_EQ(c.antecedent, (std::vector<Literal>{{"a", true}, {"c", false}}));
  EXPECT_EQ(c.consequent, (std::vector<Literal>{{"b", true}, {"d", true}}));
}

TEST(LtlClassify, RejectedShapes) {
  EXPECT_EQ(error_reason("G (a | b -> c)"), "non-conjunctive body");
  EXPECT_EQ(error_reason("G (a -> (b -> c))"), "non-conjunctive body");
  EXPECT_EQ(error_reason("G (!a | b)"), "non-conjunctive body");
  EXPECT_EQ(error_reason("G (a)"), "non-implication body");
  EXPECT_EQ(error_reason("G (a -> F b)"), "Finally");
  EXPECT_EQ(error_reason("G (a -> G b)"), "nested Globally");
  EXPECT_EQ(error_reason("G (a -> X b)"), "Next");
  EXPECT_EQ(error_reason("a -> b"), "missing Globally");
  EXPECT_EQ(error_reason("x & G (a -> b)"), "Globally not at root");
  EXPECT_EQ(error_reason("G (a & !a -> b)"), "contradictory antecedent: a");
  EXPECT_EQ(error_reason("G (a -> b & !b)"), "contradictory consequent: b");
}

TEST(LtlProperty, ConvertibleFormulasHaveNoTemporalOperatorsBelowRoot) {
  std::mt19937_64 rng(5);
  std::function<bool(const Formula&)> temporal = [&](const Formula& f) {
    if (f.op() == Op::Next || f.op() == Op::Until || f.op() == Op::Finally || f.op() == Op::Globally) return true;
    for (std::size_t i = 0; i < f.arity(); ++i)
      if (temporal(f.child(i))) return true;
    return false;
  };
  int seen = 0;
  for (int i = 0; i < 4000; ++i) {
    const Formula f = (i % 2) ? cogform::testing::random_rule_formula(rng) : cogform::testing::random_formula(rng, 5);
    if (!is_convertible(classify(f))) continue;
    ++seen;
    ASSERT_EQ(f.op(), Op::Globally);
    ASSERT_FALSE(temporal(f.child(0))) << to_string(f);
  }
  EXPECT_GT(seen, 100);
}

TEST(LtlJson, Shape) {
  const auto j = to_json(parse("G (a -> b)"));
  EXPECT_EQ(j["op"], "globally");
  EXPECT_EQ(j["args"][0]["op"], "implies");
  EXPECT_EQ(j["args"][0]["args"][0]["name"], "a");
  EXPECT_THROW(from_json(nlohmann::json{{"op", "until"}, {"args", nlohmann::json::array()}}), cogform::SchemaError);
  EXPECT_THROW(from_json(nlohmann::json{{"op", "atom"}, {"name", "G"}}), cogform::SchemaError);
}

TEST(LtlTokens, Strings) {
  EXPECT_EQ(token_strings("G(a->b)"), (std::vector<std::string>{"G", "(", "a", "->", "b", ")"}));
}
