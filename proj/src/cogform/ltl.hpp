#pragma once

// LTL formulas: immutable AST, text syntax, canonical form and the
// rule-convertibility check.
//
// Concrete syntax (case-sensitive, whitespace-insensitive):
//
//   formula := implies
//   implies := or ( "->" implies )?          right associative
//   or      := and ( ("|" | "||") and )*
//   and     := until ( ("&" | "&&") until )*
//   until   := unary ( "U" until )?          right associative
//   unary   := ("!" | "X" | "F" | "G") unary | primary
//   primary := "true" | "false" | identifier | "(" formula ")"
//
// `false` is read as !true. G, F, X, U, true and false are reserved words.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cogform/errors.hpp"

namespace cogform::ltl {

enum class Op { True, Atom, Not, And, Or, Implies, Next, Until, Finally, Globally };

std::string_view op_name(Op op);
bool is_binary(Op op);

class Formula;

namespace detail {
struct Node;
}

/// Value-semantic handle to an immutable formula tree. Copies share nodes.
class Formula {
 public:
  /// Default-constructed formula is `true`.
  Formula();

  static Formula truth();
  /// Throws std::invalid_argument for names outside [A-Za-z_][A-Za-z0-9_]*
  /// or reserved words.
  static Formula atom(std::string name);
  static Formula negation(Formula f);
  static Formula conjunction(Formula lhs, Formula rhs);
  static Formula disjunction(Formula lhs, Formula rhs);
  static Formula implication(Formula lhs, Formula rhs);
  static Formula next(Formula f);
  static Formula until(Formula lhs, Formula rhs);
  static Formula finally(Formula f);
  static Formula globally(Formula f);

  Op op() const;
  /// Atom name; empty for every other node kind.
  const std::string& name() const;
  std::size_t arity() const;
  /// i-th operand (0 for unary operators, 0/1 for binary ones).
  const Formula& child(std::size_t i) const;
  const Formula& lhs() const { return child(0); }
  const Formula& rhs() const { return child(1); }

  std::size_t depth() const;
  std::size_t size() const;

  friend bool operator==(const Formula& a, const Formula& b);
  friend bool operator!=(const Formula& a, const Formula& b) { return !(a == b); }

 private:
  explicit Formula(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}
  static Formula make(Op op, std::vector<Formula> children, std::string name = {});

  std::shared_ptr<const detail::Node> node_;
};

bool is_valid_atom_name(std::string_view name);

// ---------------------------------------------------------------------------
// Lexing and parsing

enum class TokenKind { Ident, True, False, Not, And, Or, Implies, Next, Until, Finally, Globally, LParen, RParen, End };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t offset;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::vector<std::string> expected, std::string found);

  /// Byte offset into the input where parsing failed.
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }
  const std::string& found() const { return found_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
  std::string found_;
};

/// Splits text into tokens; the last token is always End.
std::vector<Token> tokenize(std::string_view text);
/// Token spellings only (End dropped); the unit BLEU is computed over.
std::vector<std::string> token_strings(std::string_view text);

Formula parse(std::string_view text);
std::optional<Formula> try_parse(std::string_view text);

/// Deterministic printing; binary nodes are parenthesized, unary operators
/// print as `OP (operand)`. parse(to_string(f)) == f.
std::string to_string(const Formula& f);

nlohmann::json to_json(const Formula& f);
/// Throws SchemaError on malformed input.
Formula from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Canonical form and convertibility

/// Normal form used for exact-match comparison.
///
/// Formulas of the shape G(A -> B), with A and B conjunctions of literals,
/// keep that shape with sorted duplicate-free conjunctions. Everything else
/// is rewritten over {true, atom, !, &, X, U}: a -> b = !(a & !b),
/// a | b = !(!a & !b), F a = true U a, G a = !(true U !a). Double negations
/// and `true` conjuncts are removed, conjunctions are flattened, sorted and
/// deduplicated. Idempotent.
Formula canonicalize(const Formula& f);

struct Literal {
  std::string atom;
  bool positive = true;
  friend bool operator==(const Literal&, const Literal&) = default;
};

struct Convertible {
  std::vector<Literal> antecedent;
  std::vector<Literal> consequent;
  friend bool operator==(const Convertible&, const Convertible&) = default;
};

struct InferenceError {
  std::string reason;
  friend bool operator==(const InferenceError&, const InferenceError&) = default;
};

using Verdict = std::variant<Convertible, InferenceError>;

/// Whether the formula can become an IF-THEN production rule. Computed on
/// the canonical form, so formulas with equal canonical forms get equal
/// verdicts. Literal lists are sorted by atom name.
Verdict classify(const Formula& f);

inline bool is_convertible(const Verdict& v) { return std::holds_alternative<Convertible>(v); }

nlohmann::json to_json(const Verdict& v);
std::string to_string(const Literal& l);

}  // namespace cogform::ltl
