#pragma once

// Production rules: grounded preconditions, two action slots and a utility.
// Rules have a one-line source form
//
//   IF front_gap_closing = true AND pedestrian_present != true
//   THEN longitudinal = decelerate; lateral = pass
//
// which the loader parses and validates against a knowledge base.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogform/knowledge_base.hpp"

namespace cogform {

struct Condition {
  std::string feature;
  Cmp cmp = Cmp::Eq;
  std::string value;

  bool holds(const FeatureMap& state) const;
  friend auto operator<=>(const Condition&, const Condition&) = default;
};

struct Effects {
  std::optional<std::string> longitudinal;  // nullopt means pass
  std::optional<std::string> lateral;
  /// Internal feature assignments (chain mode).
  std::vector<std::pair<std::string, std::string>> sets;

  const std::optional<std::string>& slot(Slot s) const { return s == Slot::Longitudinal ? longitudinal : lateral; }
  bool empty() const { return !longitudinal && !lateral && sets.empty(); }
  friend bool operator==(const Effects&, const Effects&) = default;
};

struct Provenance {
  std::string source_id;
  std::string formula;
};

struct ProductionRule {
  std::string name;
  std::vector<Condition> conditions;  // sorted, deduplicated
  Effects effects;
  double utility = 0.0;
  Provenance provenance;

  /// Whether every precondition holds.
  bool matches(const FeatureMap& state) const;
  /// Canonical body text; equal for body-identical rules.
  std::string body_key() const;
  /// One-line source form accepted by load_rule.
  std::string to_source() const;

  nlohmann::json to_json() const;
  static ProductionRule from_json(const nlohmann::json& j);
};

/// if_<feat>_<cmp>_<value>__...__then_long_<a>__lat_<b>__set_<feat>_<value>
/// Conditions are sorted first, so the name is order-insensitive.
std::string name_rule(std::vector<Condition> conditions, const Effects& effects);

/// Sorts and deduplicates conditions; throws SchemaError on a contradiction
/// (x = v with x = w, or x = v with x != v).
std::vector<Condition> normalize_conditions(std::vector<Condition> conditions);

class LoadError : public Error {
 public:
  enum class Kind { Syntax, UndefinedSymbol, Domain, Invalid };
  LoadError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Parses and validates one rule in source form. The returned rule is named
/// and has utility 0.
ProductionRule load_rule(std::string_view source, const KnowledgeBase& kb);

/// Every precondition and effect references KB-defined symbols in domain.
void validate_rule(const ProductionRule& rule, const KnowledgeBase& kb);

nlohmann::json rules_to_json(const std::vector<ProductionRule>& rules);
std::vector<ProductionRule> rules_from_json(const nlohmann::json& j);
std::vector<ProductionRule> load_rules(const std::string& path);
void save_rules(const std::vector<ProductionRule>& rules, const std::string& path);

}  // namespace cogform
