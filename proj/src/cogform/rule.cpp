#include "cogform/rule.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace cogform {

bool Condition::holds(const FeatureMap& state) const {
  const auto it = state.find(feature);
  const bool equal = it != state.end() && it->second == value;
  return cmp == Cmp::Eq ? equal : !equal;
}

bool ProductionRule::matches(const FeatureMap& state) const {
  return std::all_of(conditions.begin(), conditions.end(), [&](const Condition& c) { return c.holds(state); });
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::vector<Condition> normalize_conditions(std::vector<Condition> conditions) {
  std::sort(conditions.begin(), conditions.end());
  conditions.erase(std::unique(conditions.begin(), conditions.end()), conditions.end());
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    for (std::size_t j = i + 1; j < conditions.size(); ++j) {
      const auto& a = conditions[i];
      const auto& b = conditions[j];
      if (a.feature != b.feature) continue;
      const bool both_eq = a.cmp == Cmp::Eq && b.cmp == Cmp::Eq && a.value != b.value;
      const bool eq_ne = a.cmp != b.cmp && a.value == b.value;
      if (both_eq || eq_ne) {
        throw SchemaError("contradictory preconditions on " + a.feature);
      }
    }
  }
  return conditions;
}

std::string name_rule(std::vector<Condition> conditions, const Effects& effects) {
  std::sort(conditions.begin(), conditions.end());
  conditions.erase(std::unique(conditions.begin(), conditions.end()), conditions.end());
  std::string name = "if";
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    name += i ? "__" : "_";
    name += conditions[i].feature + "_" + std::string(cmp_name(conditions[i].cmp)) + "_" + conditions[i].value;
  }
  std::vector<std::string> segs;
  if (effects.longitudinal) segs.push_back("long_" + *effects.longitudinal);
  if (effects.lateral) segs.push_back("lat_" + *effects.lateral);
  auto sets = effects.sets;
  std::sort(sets.begin(), sets.end());
  for (const auto& [f, v] : sets) segs.push_back("set_" + f + "_" + v);
  name += "__then";
  for (std::size_t i = 0; i < segs.size(); ++i) name += (i ? "__" : "_") + segs[i];
  return lower(name);
}

std::string ProductionRule::body_key() const {
  // Condition order is canonical after normalization; name_rule sorts anyway.
  return name_rule(conditions, effects);
}

std::string ProductionRule::to_source() const {
  std::string s = "IF ";
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (i) s += " AND ";
    s += conditions[i].feature + (conditions[i].cmp == Cmp::Eq ? " = " : " != ") + conditions[i].value;
  }
  s += " THEN longitudinal = " + effects.longitudinal.value_or("pass");
  s += "; lateral = " + effects.lateral.value_or("pass");
  for (const auto& [f, v] : effects.sets) s += "; SET " + f + " = " + v;
  return s;
}

nlohmann::json ProductionRule::to_json() const {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : conditions) conds.push_back({{"feature", c.feature}, {"cmp", cmp_name(c.cmp)}, {"value", c.value}});
  nlohmann::json j = {{"name", name},
                      {"preconditions", conds},
                      {"effects",
                       {{"longitudinal", effects.longitudinal.value_or("pass")},
                        {"lateral", effects.lateral.value_or("pass")}}},
                      {"utility", utility},
                      {"provenance", {{"source_id", provenance.source_id}, {"formula", provenance.formula}}}};
  if (!effects.sets.empty()) {
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& [f, v] : effects.sets) sets.push_back({{"feature", f}, {"value", v}});
    j["effects"]["sets"] = sets;
  }
  return j;
}

ProductionRule ProductionRule::from_json(const nlohmann::json& j) {
  ProductionRule r;
  try {
    for (const auto& c : j.at("preconditions")) {
      const auto cmp = c.value("cmp", std::string("eq"));
      if (cmp != "eq" && cmp != "ne") throw SchemaError("unknown comparator " + cmp);
      r.conditions.push_back({c.at("feature").get<std::string>(), cmp == "eq" ? Cmp::Eq : Cmp::Ne, value_text(c.at("value"))});
    }
    const auto& e = j.at("effects");
    const auto lon = e.value("longitudinal", std::string("pass"));
    const auto lat = e.value("lateral", std::string("pass"));
    if (lon != "pass") r.effects.longitudinal = lon;
    if (lat != "pass") r.effects.lateral = lat;
    if (e.contains("sets")) {
      for (const auto& s : e["sets"]) r.effects.sets.emplace_back(s.at("feature").get<std::string>(), value_text(s.at("value")));
    }
    r.utility = j.value("utility", 0.0);
    if (j.contains("provenance")) {
      r.provenance.source_id = j["provenance"].value("source_id", std::string());
      r.provenance.formula = j["provenance"].value("formula", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("rule: ") + e.what());
  }
  if (r.conditions.empty()) throw SchemaError("rule has no preconditions");
  if (r.effects.empty()) throw SchemaError("rule has no effect");
  if (!std::isfinite(r.utility)) throw SchemaError("rule utility is not finite");
  r.conditions = normalize_conditions(std::move(r.conditions));
  r.name = name_rule(r.conditions, r.effects);
  if (j.contains("name") && j["name"].get<std::string>() != r.name) {
    throw SchemaError("rule name does not match its body: " + j["name"].get<std::string>());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Loader

namespace {

struct Tok {
  enum Kind { Word, Eq, Ne, Sep, End } kind;
  std::string text;
  std::size_t offset;
};

std::vector<Tok> lex_rule(std::string_view s) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
      const auto start = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-')) ++i;
      out.push_back({Tok::Word, std::string(s.substr(start, i - start)), start});
    } else if (c == '=' ) {
      out.push_back({Tok::Eq, "=", i});
      i += (i + 1 < s.size() && s[i + 1] == '=') ? 2 : 1;
    } else if (c == '!' && i + 1 < s.size() && s[i + 1] == '=') {
      out.push_back({Tok::Ne, "!=", i});
      i += 2;
    } else if (c == ';' || c == ',') {
      out.push_back({Tok::Sep, std::string(1, c), i});
      ++i;
    } else {
      throw LoadError(LoadError::Kind::Syntax,
                      "unexpected character '" + std::string(1, c) + "' at offset " + std::to_string(i));
    }
  }
  out.push_back({Tok::End, "", s.size()});
  return out;
}

bool keyword(const Tok& t, const char* kw) { return t.kind == Tok::Word && lower(t.text) == kw; }

}  // namespace

ProductionRule load_rule(std::string_view source, const KnowledgeBase& kb) {
  const auto toks = lex_rule(source);
  std::size_t p = 0;
  auto syntax = [&](const std::string& expected) -> LoadError {
    const auto& t = toks[p];
    return LoadError(LoadError::Kind::Syntax, "expected " + expected + " at offset " + std::to_string(t.offset) +
                                                  ", found " + (t.kind == Tok::End ? "end of input" : "'" + t.text + "'"));
  };
  auto word = [&](const std::string& what) {
    if (toks[p].kind != Tok::Word) throw syntax(what);
    return toks[p++].text;
  };

  ProductionRule r;
  if (!keyword(toks[p], "if")) throw syntax("IF");
  ++p;
  for (;;) {
    Condition c;
    c.feature = word("feature name");
    if (toks[p].kind == Tok::Eq) {
      c.cmp = Cmp::Eq;
    } else if (toks[p].kind == Tok::Ne) {
      c.cmp = Cmp::Ne;
    } else {
      throw syntax("'=' or '!='");
    }
    ++p;
    c.value = word("value");
    r.conditions.push_back(std::move(c));
    if (keyword(toks[p], "and")) {
      ++p;
      continue;
    }
    if (keyword(toks[p], "then")) {
      ++p;
      break;
    }
    throw syntax("AND or THEN");
  }
  bool seen_long = false, seen_lat = false;
  for (;;) {
    if (keyword(toks[p], "set")) {
      ++p;
      const auto f = word("feature name");
      if (toks[p].kind != Tok::Eq) throw syntax("'='");
      ++p;
      r.effects.sets.emplace_back(f, word("value"));
    } else {
      const auto slot_word = lower(word("longitudinal, lateral or SET"));
      if (slot_word != "longitudinal" && slot_word != "lateral") {
        --p;
        throw syntax("longitudinal, lateral or SET");
      }
      if (toks[p].kind != Tok::Eq) throw syntax("'='");
      ++p;
      const auto action = word("action");
      const bool is_long = slot_word == "longitudinal";
      bool& seen = is_long ? seen_long : seen_lat;
      if (seen) throw LoadError(LoadError::Kind::Invalid, "slot " + slot_word + " assigned twice");
      seen = true;
      if (lower(action) != "pass") (is_long ? r.effects.longitudinal : r.effects.lateral) = action;
    }
    if (toks[p].kind == Tok::Sep || keyword(toks[p], "and")) {
      ++p;
      continue;
    }
    if (toks[p].kind == Tok::End) break;
    throw syntax("';' or end of rule");
  }

  validate_rule(r, kb);
  try {
    r.conditions = normalize_conditions(std::move(r.conditions));
  } catch (const SchemaError& e) {
    throw LoadError(LoadError::Kind::Invalid, e.what());
  }
  if (r.effects.empty()) throw LoadError(LoadError::Kind::Invalid, "rule has no effect (both slots pass)");
  r.name = name_rule(r.conditions, r.effects);
  return r;
}

void validate_rule(const ProductionRule& r, const KnowledgeBase& kb) {
  if (r.conditions.empty()) throw LoadError(LoadError::Kind::Invalid, "rule has no preconditions");
  for (const auto& c : r.conditions) {
    const auto* f = kb.feature(c.feature);
    if (!f) throw LoadError(LoadError::Kind::UndefinedSymbol, "undefined variable '" + c.feature + "'");
    if (!f->in_domain(c.value)) {
      throw LoadError(LoadError::Kind::Domain, "value '" + c.value + "' is outside the domain of " + c.feature);
    }
  }
  for (const Slot s : {Slot::Longitudinal, Slot::Lateral}) {
    const auto& a = r.effects.slot(s);
    if (a && !kb.is_action(s, *a)) {
      throw LoadError(LoadError::Kind::UndefinedSymbol,
                      "undefined " + std::string(slot_name(s)) + " action '" + *a + "'");
    }
  }
  for (const auto& [fname, v] : r.effects.sets) {
    const auto* f = kb.feature(fname);
    if (!f) throw LoadError(LoadError::Kind::UndefinedSymbol, "undefined variable '" + fname + "'");
    if (!f->internal) throw LoadError(LoadError::Kind::Invalid, "cannot set observed feature " + fname);
    if (!f->in_domain(v)) throw LoadError(LoadError::Kind::Domain, "value '" + v + "' is outside the domain of " + fname);
  }
  if (!std::isfinite(r.utility)) throw LoadError(LoadError::Kind::Invalid, "utility is not finite");
}

nlohmann::json rules_to_json(const std::vector<ProductionRule>& rules) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rules) arr.push_back(r.to_json());
  return {{"rules", arr}};
}

std::vector<ProductionRule> rules_from_json(const nlohmann::json& j) {
  const auto& arr = j.is_array() ? j : j.at("rules");
  std::vector<ProductionRule> out;
  for (const auto& r : arr) out.push_back(ProductionRule::from_json(r));
  return out;
}

std::vector<ProductionRule> load_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read rules " + path);
  try {
    return rules_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("rules " + path + ": " + e.what());
  }
}

void save_rules(const std::vector<ProductionRule>& rules, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rules " + path);
  out << rules_to_json(rules).dump(2) << "\n";
}

}  // namespace cogform
