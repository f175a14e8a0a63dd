#include "cogform/ltl.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <tuple>
#include <utility>

namespace cogform::ltl {

namespace detail {
struct Node {
  Op op;
  std::string name;
  std::vector<Formula> children;
  std::size_t depth = 1;
  std::size_t size = 1;
};
}  // namespace detail

namespace {

constexpr std::string_view kReserved[] = {"G", "F", "X", "U", "true", "false"};

std::string_view symbol(Op op) {
  switch (op) {
    case Op::True: return "true";
    case Op::Atom: return "";
    case Op::Not: return "!";
    case Op::And: return "&";
    case Op::Or: return "|";
    case Op::Implies: return "->";
    case Op::Next: return "X";
    case Op::Until: return "U";
    case Op::Finally: return "F";
    case Op::Globally: return "G";
  }
  return "";
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::True: return "true";
    case Op::Atom: return "atom";
    case Op::Not: return "not";
    case Op::And: return "and";
    case Op::Or: return "or";
    case Op::Implies: return "implies";
    case Op::Next: return "next";
    case Op::Until: return "until";
    case Op::Finally: return "finally";
    case Op::Globally: return "globally";
  }
  return "";
}

bool is_binary(Op op) {
  return op == Op::And || op == Op::Or || op == Op::Implies || op == Op::Until;
}

bool is_valid_atom_name(std::string_view name) {
  if (name.empty()) return false;
  const auto head = static_cast<unsigned char>(name.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  for (unsigned char c : name) {
    if (!(std::isalnum(c) || c == '_')) return false;
  }
  return std::find(std::begin(kReserved), std::end(kReserved), name) == std::end(kReserved);
}

// ---------------------------------------------------------------------------
// Formula

Formula::Formula() : node_(truth().node_) {}

Formula Formula::make(Op op, std::vector<Formula> children, std::string name) {
  auto node = std::make_shared<detail::Node>();
  node->op = op;
  node->name = std::move(name);
  std::size_t depth = 0;
  std::size_t size = 1;
  for (const auto& c : children) {
    depth = std::max(depth, c.node_->depth);
    size += c.node_->size;
  }
  node->depth = depth + 1;
  node->size = size;
  node->children = std::move(children);
  return Formula(std::move(node));
}

Formula Formula::truth() {
  static const Formula t = [] {
    auto node = std::make_shared<detail::Node>();
    node->op = Op::True;
    return Formula(std::move(node));
  }();
  return t;
}

Formula Formula::atom(std::string name) {
  if (!is_valid_atom_name(name)) throw std::invalid_argument("invalid atom name '" + name + "'");
  return make(Op::Atom, {}, std::move(name));
}

Formula Formula::negation(Formula f) { return make(Op::Not, {std::move(f)}); }
Formula Formula::conjunction(Formula l, Formula r) { return make(Op::And, {std::move(l), std::move(r)}); }
Formula Formula::disjunction(Formula l, Formula r) { return make(Op::Or, {std::move(l), std::move(r)}); }
Formula Formula::implication(Formula l, Formula r) { return make(Op::Implies, {std::move(l), std::move(r)}); }
Formula Formula::next(Formula f) { return make(Op::Next, {std::move(f)}); }
Formula Formula::until(Formula l, Formula r) { return make(Op::Until, {std::move(l), std::move(r)}); }
Formula Formula::finally(Formula f) { return make(Op::Finally, {std::move(f)}); }
Formula Formula::globally(Formula f) { return make(Op::Globally, {std::move(f)}); }

Op Formula::op() const { return node_->op; }
const std::string& Formula::name() const { return node_->name; }
std::size_t Formula::arity() const { return node_->children.size(); }

const Formula& Formula::child(std::size_t i) const {
  if (i >= node_->children.size()) throw std::out_of_range("formula operand index");
  return node_->children[i];
}

std::size_t Formula::depth() const { return node_->depth; }
std::size_t Formula::size() const { return node_->size; }

bool operator==(const Formula& a, const Formula& b) {
  if (a.node_ == b.node_) return true;
  const auto& x = *a.node_;
  const auto& y = *b.node_;
  if (x.op != y.op || x.size != y.size || x.name != y.name) return false;
  for (std::size_t i = 0; i < x.children.size(); ++i) {
    if (x.children[i] != y.children[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Lexer

ParseError::ParseError(std::size_t offset, std::vector<std::string> expected, std::string found)
    : Error([&] {
        std::string msg = "parse error at byte " + std::to_string(offset) + ": expected ";
        for (std::size_t i = 0; i < expected.size(); ++i) {
          if (i) msg += i + 1 == expected.size() ? " or " : ", ";
          msg += expected[i];
        }
        msg += ", found " + (found.empty() ? std::string("end of input") : "'" + found + "'");
        return msg;
      }()),
      offset_(offset),
      expected_(std::move(expected)),
      found_(std::move(found)) {}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    auto two = [&](char a, char b) { return c == static_cast<unsigned char>(a) && i + 1 < n && text[i + 1] == b; };
    if (two('-', '>')) {
      out.push_back({TokenKind::Implies, "->", start});
      i += 2;
    } else if (two('&', '&')) {
      out.push_back({TokenKind::And, "&", start});
      i += 2;
    } else if (two('|', '|')) {
      out.push_back({TokenKind::Or, "|", start});
      i += 2;
    } else if (c == '&') {
      out.push_back({TokenKind::And, "&", start});
      ++i;
    } else if (c == '|') {
      out.push_back({TokenKind::Or, "|", start});
      ++i;
    } else if (c == '!') {
      out.push_back({TokenKind::Not, "!", start});
      ++i;
    } else if (c == '(') {
      out.push_back({TokenKind::LParen, "(", start});
      ++i;
    } else if (c == ')') {
      out.push_back({TokenKind::RParen, ")", start});
      ++i;
    } else if (std::isalpha(c) || c == '_') {
      while (i < n && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) ++i;
      std::string word(text.substr(start, i - start));
      TokenKind kind = TokenKind::Ident;
      if (word == "G") kind = TokenKind::Globally;
      else if (word == "F") kind = TokenKind::Finally;
      else if (word == "X") kind = TokenKind::Next;
      else if (word == "U") kind = TokenKind::Until;
      else if (word == "true") kind = TokenKind::True;
      else if (word == "false") kind = TokenKind::False;
      out.push_back({kind, std::move(word), start});
    } else {
      throw ParseError(start, {"operator", "identifier", "parenthesis"}, std::string(1, static_cast<char>(c)));
    }
  }
  out.push_back({TokenKind::End, "", n});
  return out;
}

std::vector<std::string> token_strings(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) {
    if (t.kind != TokenKind::End) out.push_back(std::move(t.text));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

  Formula parse_all() {
    Formula f = implies();
    if (peek().kind != TokenKind::End) fail({"->", "|", "&", "U", "end of input"});
    return f;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& take() { return tokens_[pos_++]; }
  bool accept(TokenKind k) {
    if (peek().kind != k) return false;
    ++pos_;
    return true;
  }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    throw ParseError(peek().offset, std::move(expected), peek().text);
  }

  Formula implies() {
    Formula lhs = disjunction();
    if (accept(TokenKind::Implies)) return Formula::implication(std::move(lhs), implies());
    return lhs;
  }

  Formula disjunction() {
    Formula lhs = conjunction();
    while (accept(TokenKind::Or)) lhs = Formula::disjunction(std::move(lhs), conjunction());
    return lhs;
  }

  Formula conjunction() {
    Formula lhs = until();
    while (accept(TokenKind::And)) lhs = Formula::conjunction(std::move(lhs), until());
    return lhs;
  }

  Formula until() {
    Formula lhs = unary();
    if (accept(TokenKind::Until)) return Formula::until(std::move(lhs), until());
    return lhs;
  }

  Formula unary() {
    switch (peek().kind) {
      case TokenKind::Not: ++pos_; return Formula::negation(unary());
      case TokenKind::Next: ++pos_; return Formula::next(unary());
      case TokenKind::Finally: ++pos_; return Formula::finally(unary());
      case TokenKind::Globally: ++pos_; return Formula::globally(unary());
      default: return primary();
    }
  }

  Formula primary() {
    switch (peek().kind) {
      case TokenKind::True: ++pos_; return Formula::truth();
      case TokenKind::False: ++pos_; return Formula::negation(Formula::truth());
      case TokenKind::Ident: return Formula::atom(take().text);
      case TokenKind::LParen: {
        ++pos_;
        Formula inner = implies();
        if (!accept(TokenKind::RParen)) fail({")", "->", "|", "&", "U"});
        return inner;
      }
      default:
        fail({"identifier", "true", "false", "(", "!", "X", "F", "G"});
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

void print(const Formula& f, std::string& out);

void print_bare_binary(const Formula& f, std::string& out) {
  print(f.lhs(), out);
  out += ' ';
  out += symbol(f.op());
  out += ' ';
  print(f.rhs(), out);
}

void print(const Formula& f, std::string& out) {
  switch (f.op()) {
    case Op::True: out += "true"; return;
    case Op::Atom: out += f.name(); return;
    case Op::Not:
    case Op::Next:
    case Op::Finally:
    case Op::Globally: {
      out += symbol(f.op());
      out += " (";
      const Formula& c = f.child(0);
      if (is_binary(c.op())) print_bare_binary(c, out);
      else print(c, out);
      out += ')';
      return;
    }
    case Op::And:
    case Op::Or:
    case Op::Implies:
    case Op::Until:
      out += '(';
      print_bare_binary(f, out);
      out += ')';
      return;
  }
}

}  // namespace

Formula parse(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw ParseError(text.size(), {"formula"}, "");
  }
  return Parser(text).parse_all();
}

std::optional<Formula> try_parse(std::string_view text) {
  try {
    return parse(text);
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

std::string to_string(const Formula& f) {
  std::string out;
  print(f, out);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const Formula& f) {
  nlohmann::json j;
  j["op"] = op_name(f.op());
  if (f.op() == Op::Atom) j["name"] = f.name();
  auto args = nlohmann::json::array();
  for (std::size_t i = 0; i < f.arity(); ++i) args.push_back(to_json(f.child(i)));
  j["args"] = std::move(args);
  return j;
}

Formula from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) {
    throw SchemaError("formula JSON: expected object with string 'op'");
  }
  const std::string op = j["op"];
  std::vector<Formula> args;
  if (j.contains("args")) {
    if (!j["args"].is_array()) throw SchemaError("formula JSON: 'args' must be an array");
    for (const auto& a : j["args"]) args.push_back(from_json(a));
  }
  auto need = [&](std::size_t n) {
    if (args.size() != n) {
      throw SchemaError("formula JSON: '" + op + "' takes " + std::to_string(n) + " operand(s)");
    }
  };
  if (op == "true") return need(0), Formula::truth();
  if (op == "atom") {
    need(0);
    if (!j.contains("name") || !j["name"].is_string()) throw SchemaError("formula JSON: atom without name");
    const std::string name = j["name"];
    if (!is_valid_atom_name(name)) throw SchemaError("formula JSON: invalid atom name '" + name + "'");
    return Formula::atom(name);
  }
  if (op == "not") return need(1), Formula::negation(args[0]);
  if (op == "next") return need(1), Formula::next(args[0]);
  if (op == "finally") return need(1), Formula::finally(args[0]);
  if (op == "globally") return need(1), Formula::globally(args[0]);
  if (op == "and") return need(2), Formula::conjunction(args[0], args[1]);
  if (op == "or") return need(2), Formula::disjunction(args[0], args[1]);
  if (op == "implies") return need(2), Formula::implication(args[0], args[1]);
  if (op == "until") return need(2), Formula::until(args[0], args[1]);
  throw SchemaError("formula JSON: unknown op '" + op + "'");
}

// ---------------------------------------------------------------------------
// Canonical form

namespace {

// Sort key for conjuncts: printed form with leading negations stripped,
// then negation count. Keeps `a` next to `!a`.
std::pair<std::string, std::size_t> conjunct_key(const Formula& f) {
  const Formula* core = &f;
  std::size_t negations = 0;
  while (core->op() == Op::Not) {
    core = &core->child(0);
    ++negations;
  }
  return {to_string(*core), negations};
}

Formula negate(const Formula& c) {
  if (c.op() == Op::Not) return c.child(0);
  return Formula::negation(c);
}

void flatten_and(const Formula& c, std::vector<Formula>& out) {
  if (c.op() == Op::And) {
    flatten_and(c.lhs(), out);
    flatten_and(c.rhs(), out);
  } else if (c.op() != Op::True) {
    out.push_back(c);
  }
}

// Conjunction of already-canonical parts.
Formula conjoin(const std::vector<Formula>& parts) {
  std::vector<Formula> flat;
  for (const auto& p : parts) flatten_and(p, flat);
  std::vector<std::pair<std::pair<std::string, std::size_t>, Formula>> keyed;
  keyed.reserve(flat.size());
  for (auto& f : flat) keyed.emplace_back(conjunct_key(f), std::move(f));
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  keyed.erase(std::unique(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
              keyed.end());
  if (keyed.empty()) return Formula::truth();
  Formula acc = keyed.back().second;
  for (auto it = keyed.rbegin() + 1; it != keyed.rend(); ++it) acc = Formula::conjunction(it->second, acc);
  return acc;
}

Formula general(const Formula& f) {
  switch (f.op()) {
    case Op::True:
    case Op::Atom: return f;
    case Op::Not: return negate(general(f.child(0)));
    case Op::And: return conjoin({general(f.lhs()), general(f.rhs())});
    case Op::Or: return negate(conjoin({negate(general(f.lhs())), negate(general(f.rhs()))}));
    case Op::Implies: return negate(conjoin({general(f.lhs()), negate(general(f.rhs()))}));
    case Op::Next: return Formula::next(general(f.child(0)));
    case Op::Until: return Formula::until(general(f.lhs()), general(f.rhs()));
    case Op::Finally: return Formula::until(Formula::truth(), general(f.child(0)));
    case Op::Globally: return negate(Formula::until(Formula::truth(), negate(general(f.child(0)))));
  }
  return f;
}

// Collects the literals of an And-tree whose leaves are true or !^k atom.
bool literal_conjunction(const Formula& f, std::vector<Literal>& out) {
  switch (f.op()) {
    case Op::True: return true;
    case Op::And: return literal_conjunction(f.lhs(), out) && literal_conjunction(f.rhs(), out);
    case Op::Atom: out.push_back({f.name(), true}); return true;
    case Op::Not: {
      const Formula* core = &f;
      bool positive = true;
      while (core->op() == Op::Not) {
        core = &core->child(0);
        positive = !positive;
      }
      if (core->op() != Op::Atom) return false;
      out.push_back({core->name(), positive});
      return true;
    }
    default: return false;
  }
}

void sort_literals(std::vector<Literal>& lits) {
  std::sort(lits.begin(), lits.end(), [](const Literal& a, const Literal& b) {
    return std::tie(a.atom, b.positive) < std::tie(b.atom, a.positive);
  });
  lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
}

Formula conjunction_of(const std::vector<Literal>& lits) {
  Formula acc;
  for (auto it = lits.rbegin(); it != lits.rend(); ++it) {
    Formula lit = Formula::atom(it->atom);
    if (!it->positive) lit = Formula::negation(std::move(lit));
    acc = it == lits.rbegin() ? lit : Formula::conjunction(lit, acc);
  }
  return acc;
}

struct RuleShape {
  std::vector<Literal> antecedent;
  std::vector<Literal> consequent;
};

std::optional<RuleShape> rule_shape(const Formula& f) {
  if (f.op() != Op::Globally || f.child(0).op() != Op::Implies) return std::nullopt;
  const Formula& body = f.child(0);
  RuleShape shape;
  if (!literal_conjunction(body.lhs(), shape.antecedent) || !literal_conjunction(body.rhs(), shape.consequent)) {
    return std::nullopt;
  }
  if (shape.antecedent.empty() || shape.consequent.empty()) return std::nullopt;
  sort_literals(shape.antecedent);
  sort_literals(shape.consequent);
  return shape;
}

// First temporal construct in pre-order. `negated` tracks negation parity:
// `true U x` denotes F x at even parity and G !x at odd parity.
std::optional<std::string> first_temporal(const Formula& f, bool negated) {
  switch (f.op()) {
    case Op::Next: return std::string("Next");
    case Op::Until:
      if (f.lhs().op() == Op::True) return std::string(negated ? "Globally" : "Finally");
      return std::string("Until");
    case Op::Not: return first_temporal(f.child(0), !negated);
    case Op::And:
      if (auto r = first_temporal(f.lhs(), negated)) return r;
      return first_temporal(f.rhs(), negated);
    default: return std::nullopt;
  }
}

std::optional<std::string> contradiction(const std::vector<Literal>& lits) {
  for (std::size_t i = 1; i < lits.size(); ++i) {
    if (lits[i].atom == lits[i - 1].atom) return lits[i].atom;
  }
  return std::nullopt;
}

}  // namespace

Formula canonicalize(const Formula& f) {
  if (auto shape = rule_shape(f)) {
    return Formula::globally(
        Formula::implication(conjunction_of(shape->antecedent), conjunction_of(shape->consequent)));
  }
  return general(f);
}

Verdict classify(const Formula& f) {
  const Formula c = canonicalize(f);
  if (auto shape = rule_shape(c)) {
    if (auto atom = contradiction(shape->antecedent)) return InferenceError{"contradictory antecedent: " + *atom};
    if (auto atom = contradiction(shape->consequent)) return InferenceError{"contradictory consequent: " + *atom};
    return Convertible{std::move(shape->antecedent), std::move(shape->consequent)};
  }
  const bool rooted_globally =
      c.op() == Op::Not && c.child(0).op() == Op::Until && c.child(0).lhs().op() == Op::True;
  if (rooted_globally) {
    const Formula& negated_body = c.child(0).rhs();
    if (auto op = first_temporal(negated_body, true)) {
      return InferenceError{*op == "Globally" ? "nested Globally" : *op};
    }
    return InferenceError{negated_body.op() == Op::And ? "non-conjunctive body" : "non-implication body"};
  }
  if (auto op = first_temporal(c, false)) {
    return InferenceError{*op == "Globally" ? "Globally not at root" : *op};
  }
  return InferenceError{"missing Globally"};
}

std::string to_string(const Literal& l) { return (l.positive ? "" : "!") + l.atom; }

nlohmann::json to_json(const Verdict& v) {
  auto lits = [](const std::vector<Literal>& ls) {
    auto arr = nlohmann::json::array();
    for (const auto& l : ls) arr.push_back({{"atom", l.atom}, {"positive", l.positive}});
    return arr;
  };
  if (const auto* c = std::get_if<Convertible>(&v)) {
    return {{"verdict", "Convertible"}, {"antecedent", lits(c->antecedent)}, {"consequent", lits(c->consequent)}};
  }
  return {{"verdict", "InferenceError"}, {"reason", std::get<InferenceError>(v).reason}};
}

}  // namespace cogform::ltl
