#include "cogform/knowledge_base.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace cogform {

std::string_view cmp_name(Cmp c) { return c == Cmp::Eq ? "eq" : "ne"; }

std::string_view slot_name(Slot s) { return s == Slot::Longitudinal ? "longitudinal" : "lateral"; }

Slot slot_from_name(std::string_view s) {
  if (s == "longitudinal" || s == "long") return Slot::Longitudinal;
  if (s == "lateral" || s == "lat") return Slot::Lateral;
  throw SchemaError("unknown action slot: " + std::string(s));
}

std::string value_text(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  throw SchemaError("feature value must be a boolean, integer or string: " + v.dump());
}

bool FeatureDef::in_domain(const std::string& value) const {
  switch (type) {
    case FeatureType::Bool:
      return value == "true" || value == "false";
    case FeatureType::Enum:
      return std::find(values.begin(), values.end(), value) != values.end();
    case FeatureType::Int: {
      if (value.empty()) return false;
      std::size_t pos = 0;
      try {
        const long long x = std::stoll(value, &pos);
        return pos == value.size() && x >= min && x <= max && std::to_string(x) == value;
      } catch (const std::exception&) {
        return false;
      }
    }
  }
  return false;
}

std::vector<std::string> FeatureDef::domain() const {
  switch (type) {
    case FeatureType::Bool:
      return {"false", "true"};
    case FeatureType::Enum:
      return values;
    case FeatureType::Int: {
      std::vector<std::string> out;
      for (auto x = min; x <= max; ++x) out.push_back(std::to_string(x));
      return out;
    }
  }
  return {};
}

std::string FeatureDef::initial_value() const {
  switch (type) {
    case FeatureType::Bool:
      return "false";
    case FeatureType::Enum:
      return values.empty() ? std::string() : values.front();
    case FeatureType::Int:
      return std::to_string(min);
  }
  return {};
}

const FeatureDef* KnowledgeBase::feature(const std::string& n) const {
  for (const auto& f : features) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

const std::vector<std::string>& KnowledgeBase::actions(Slot s) const {
  return s == Slot::Longitudinal ? longitudinal_actions : lateral_actions;
}

bool KnowledgeBase::is_action(Slot s, const std::string& action) const {
  const auto& a = actions(s);
  return std::find(a.begin(), a.end(), action) != a.end();
}

std::optional<ActionGrounding> KnowledgeBase::action_atom(const std::string& atom) const {
  if (const auto it = action_atoms.find(atom); it != action_atoms.end()) return it->second;
  if (is_action(Slot::Longitudinal, atom)) return ActionGrounding{Slot::Longitudinal, atom};
  if (is_action(Slot::Lateral, atom)) return ActionGrounding{Slot::Lateral, atom};
  return std::nullopt;
}

std::vector<std::string> KnowledgeBase::vocabulary() const {
  std::set<std::string> names;
  for (const auto& [atom, _] : conditions) names.insert(atom);
  for (const auto& [atom, _] : action_atoms) names.insert(atom);
  for (const auto& a : longitudinal_actions) names.insert(a);
  for (const auto& a : lateral_actions) names.insert(a);
  return {names.begin(), names.end()};
}

void KnowledgeBase::validate() const {
  const std::string where = "knowledge base '" + name + "': ";
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw SchemaError(where + "feature with empty name");
    if (!seen.insert(f.name).second) throw SchemaError(where + "duplicate feature " + f.name);
    if (f.type == FeatureType::Enum && f.values.empty()) throw SchemaError(where + "enum feature without values: " + f.name);
    if (f.type == FeatureType::Int && f.min > f.max) throw SchemaError(where + "empty integer range: " + f.name);
  }
  if (longitudinal_actions.empty() || lateral_actions.empty()) throw SchemaError(where + "action sets must be nonempty");
  for (const auto& a : longitudinal_actions) {
    if (is_action(Slot::Lateral, a)) throw SchemaError(where + "action in both slots: " + a);
    if (a == "pass") throw SchemaError(where + "'pass' is reserved");
  }
  for (const auto& a : lateral_actions) {
    if (a == "pass") throw SchemaError(where + "'pass' is reserved");
  }
  for (const auto& [atom, g] : conditions) {
    const auto* f = feature(g.feature);
    if (!f) throw SchemaError(where + "atom " + atom + " grounds to undefined feature " + g.feature);
    if (!f->in_domain(g.value)) throw SchemaError(where + "atom " + atom + " uses out-of-domain value " + g.value);
  }
  for (const auto& [atom, g] : action_atoms) {
    if (!is_action(g.slot, g.action)) throw SchemaError(where + "atom " + atom + " grounds to unknown action " + g.action);
    if (conditions.count(atom)) throw SchemaError(where + "atom " + atom + " is both a condition and an action");
  }
}

void KnowledgeBase::validate_state(const FeatureMap& state) const {
  for (const auto& [k, v] : state) {
    const auto* f = feature(k);
    if (!f) throw SchemaError("state has unknown feature " + k);
    if (!f->in_domain(v)) throw SchemaError("state value out of domain: " + k + "=" + v);
  }
  for (const auto& f : features) {
    if (!f.internal && !state.count(f.name)) throw SchemaError("state is missing feature " + f.name);
  }
}

nlohmann::json KnowledgeBase::to_json() const {
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& f : features) {
    nlohmann::json j = {{"name", f.name}};
    switch (f.type) {
      case FeatureType::Bool:
        j["type"] = "bool";
        break;
      case FeatureType::Enum:
        j["type"] = "enum";
        j["values"] = f.values;
        break;
      case FeatureType::Int:
        j["type"] = "int";
        j["min"] = f.min;
        j["max"] = f.max;
        break;
    }
    if (f.internal) j["internal"] = true;
    fs.push_back(std::move(j));
  }
  nlohmann::json conds = nlohmann::json::object();
  for (const auto& [atom, g] : conditions) {
    conds[atom] = {{"feature", g.feature}, {"cmp", cmp_name(g.cmp)}, {"value", g.value}};
  }
  nlohmann::json acts = nlohmann::json::object();
  for (const auto& [atom, g] : action_atoms) acts[atom] = {{"slot", slot_name(g.slot)}, {"action", g.action}};
  return {{"name", name},
          {"features", fs},
          {"actions", {{"longitudinal", longitudinal_actions}, {"lateral", lateral_actions}}},
          {"conditions", conds},
          {"action_atoms", acts}};
}

KnowledgeBase KnowledgeBase::from_json(const nlohmann::json& j) {
  KnowledgeBase kb;
  try {
    kb.name = j.value("name", std::string());
    for (const auto& fj : j.at("features")) {
      FeatureDef f;
      f.name = fj.at("name").get<std::string>();
      const auto type = fj.value("type", std::string("bool"));
      if (type == "bool") {
        f.type = FeatureType::Bool;
      } else if (type == "enum") {
        f.type = FeatureType::Enum;
        f.values = fj.at("values").get<std::vector<std::string>>();
      } else if (type == "int") {
        f.type = FeatureType::Int;
        f.min = fj.at("min").get<std::int64_t>();
        f.max = fj.at("max").get<std::int64_t>();
      } else {
        throw SchemaError("unknown feature type: " + type);
      }
      f.internal = fj.value("internal", false);
      kb.features.push_back(std::move(f));
    }
    kb.longitudinal_actions = j.at("actions").at("longitudinal").get<std::vector<std::string>>();
    kb.lateral_actions = j.at("actions").at("lateral").get<std::vector<std::string>>();
    if (j.contains("conditions")) {
      for (const auto& [atom, g] : j["conditions"].items()) {
        const auto cmp = g.value("cmp", std::string("eq"));
        if (cmp != "eq" && cmp != "ne") throw SchemaError("unknown comparator: " + cmp);
        kb.conditions[atom] = {g.at("feature").get<std::string>(), cmp == "eq" ? Cmp::Eq : Cmp::Ne,
                               value_text(g.at("value"))};
      }
    }
    if (j.contains("action_atoms")) {
      for (const auto& [atom, g] : j["action_atoms"].items()) {
        kb.action_atoms[atom] = {slot_from_name(g.at("slot").get<std::string>()), g.at("action").get<std::string>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("knowledge base: ") + e.what());
  }
  kb.validate();
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read knowledge base " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("knowledge base " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace cogform
