#pragma once

// Feature and action vocabulary of one scenario, plus the table that grounds
// LTL atom names in feature predicates and actions.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogform/errors.hpp"

namespace cogform {

enum class Cmp { Eq, Ne };
enum class Slot { Longitudinal, Lateral };

std::string_view cmp_name(Cmp c);  // "eq" / "ne"
std::string_view slot_name(Slot s);  // "longitudinal" / "lateral"
Slot slot_from_name(std::string_view s);

/// Feature values are kept in their canonical text form: "true"/"false",
/// the enum symbol, or the decimal integer.
using FeatureMap = std::map<std::string, std::string>;

/// Converts a JSON scalar (bool, integer, string) into canonical text.
std::string value_text(const nlohmann::json& v);

enum class FeatureType { Bool, Enum, Int };

struct FeatureDef {
  std::string name;
  FeatureType type = FeatureType::Bool;
  std::vector<std::string> values;  // enum symbols
  std::int64_t min = 0;
  std::int64_t max = 0;
  /// Internal features are never observed; rules set them in chain mode.
  bool internal = false;

  bool in_domain(const std::string& value) const;
  std::vector<std::string> domain() const;
  /// Value an internal feature holds at the start of a cycle.
  std::string initial_value() const;
};

struct ConditionGrounding {
  std::string feature;
  Cmp cmp = Cmp::Eq;
  std::string value;
};

struct ActionGrounding {
  Slot slot = Slot::Longitudinal;
  std::string action;
};

class KnowledgeBase {
 public:
  std::string name;
  std::vector<FeatureDef> features;
  std::vector<std::string> longitudinal_actions;
  std::vector<std::string> lateral_actions;
  std::map<std::string, ConditionGrounding> conditions;
  /// Every action name also grounds to itself unless overridden here.
  std::map<std::string, ActionGrounding> action_atoms;

  /// Throws SchemaError on dangling references, out-of-domain values,
  /// empty or overlapping action sets.
  void validate() const;

  const FeatureDef* feature(const std::string& name) const;
  const std::vector<std::string>& actions(Slot s) const;
  bool is_action(Slot s, const std::string& action) const;
  std::optional<ActionGrounding> action_atom(const std::string& atom) const;

  /// Atom names usable in formulas, sorted.
  std::vector<std::string> vocabulary() const;

  /// Every observed feature present with an in-domain value, no unknown keys.
  /// Internal features may be omitted. Throws SchemaError.
  void validate_state(const FeatureMap& state) const;

  nlohmann::json to_json() const;
  static KnowledgeBase from_json(const nlohmann::json& j);
  static KnowledgeBase load(const std::string& path);
};

}  // namespace cogform
