#include "cogform/rule_compiler.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>

#include "cogform/critic_tree.hpp"

namespace cogform {

GroundedBody ground(const ltl::Convertible& verdict, const KnowledgeBase& kb) {
  GroundedBody body;
  for (const auto& lit : verdict.antecedent) {
    const auto it = kb.conditions.find(lit.atom);
    if (it == kb.conditions.end()) {
      if (kb.action_atom(lit.atom)) throw GroundingError(lit.atom, "action atom used as a condition: " + lit.atom);
      throw GroundingError(lit.atom, "unknown atom: " + lit.atom);
    }
    Cmp cmp = it->second.cmp;
    if (!lit.positive) cmp = cmp == Cmp::Eq ? Cmp::Ne : Cmp::Eq;
    body.conditions.push_back({it->second.feature, cmp, it->second.value});
  }
  for (const auto& lit : verdict.consequent) {
    if (const auto act = kb.action_atom(lit.atom)) {
      if (!lit.positive) throw GroundingError(lit.atom, "negated action: " + lit.atom);
      auto& slot = act->slot == Slot::Longitudinal ? body.effects.longitudinal : body.effects.lateral;
      if (slot && *slot != act->action) {
        throw GroundingError(lit.atom, "conflicting " + std::string(slot_name(act->slot)) + " actions: " + *slot +
                                           " and " + act->action);
      }
      slot = act->action;
      continue;
    }
    const auto it = kb.conditions.find(lit.atom);
    if (it == kb.conditions.end()) throw GroundingError(lit.atom, "unknown atom: " + lit.atom);
    const auto* f = kb.feature(it->second.feature);
    if (f && f->internal && lit.positive && it->second.cmp == Cmp::Eq) {
      body.effects.sets.emplace_back(it->second.feature, it->second.value);
      continue;
    }
    throw GroundingError(lit.atom, "consequent atom is not an action: " + lit.atom);
  }
  return body;
}

// ---------------------------------------------------------------------------
// Dedup

namespace {

DedupResult decide_dedup(const ProductionRule& candidate, const std::vector<ProductionRule>& store,
                         const std::vector<double>& sims, double threshold, std::size_t top_k) {
  DedupResult r;
  if (store.empty()) return r;
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  r.existing = store[order[0]].name;
  r.similarity = sims[order[0]];
  const auto key = candidate.body_key();
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].body_key() == key) {
      r.duplicate = r.body_identical = true;
      r.existing = store[i].name;
      r.similarity = sims[i];
      return r;
    }
  }
  for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
    if (sims[order[i]] >= threshold) {
      r.duplicate = true;
      r.existing = store[order[i]].name;
      r.similarity = sims[order[i]];
      return r;
    }
  }
  return r;
}

}  // namespace

DedupResult dedup_check(const ProductionRule& candidate, const std::vector<ProductionRule>& store,
                        EmbeddingProvider& provider, double threshold, std::size_t top_k) {
  const Vector c = provider.embed(candidate.name);
  std::vector<double> sims;
  sims.reserve(store.size());
  for (const auto& r : store) sims.push_back(cosine(c, provider.embed(r.name)));
  return decide_dedup(candidate, store, sims, threshold, top_k);
}

RuleStore::RuleStore(std::vector<ProductionRule> rules) : rules_(std::move(rules)) {}

DedupResult RuleStore::check_locked(const ProductionRule& candidate, EmbeddingProvider& provider, double threshold,
                                    std::size_t top_k) const {
  const Vector c = provider.embed(candidate.name);
  embeddings_.resize(rules_.size());
  std::vector<double> sims;
  sims.reserve(rules_.size());
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (embeddings_[i].size() != c.size()) embeddings_[i] = provider.embed(rules_[i].name);
    sims.push_back(cosine(c, embeddings_[i]));
  }
  return decide_dedup(candidate, rules_, sims, threshold, top_k);
}

DedupResult RuleStore::check(const ProductionRule& candidate, EmbeddingProvider& provider, double threshold,
                             std::size_t top_k) const {
  std::lock_guard lock(mutex_);
  return check_locked(candidate, provider, threshold, top_k);
}

DedupResult RuleStore::insert_if_new(ProductionRule candidate, EmbeddingProvider& provider, double threshold,
                                     std::size_t top_k) {
  std::lock_guard lock(mutex_);
  auto r = check_locked(candidate, provider, threshold, top_k);
  if (!r.duplicate) {
    embeddings_.push_back(provider.embed(candidate.name));
    rules_.push_back(std::move(candidate));
  }
  return r;
}

std::vector<ProductionRule> RuleStore::rules() const {
  std::lock_guard lock(mutex_);
  return rules_;
}

std::size_t RuleStore::size() const {
  std::lock_guard lock(mutex_);
  return rules_.size();
}

// ---------------------------------------------------------------------------
// Outcomes

std::string_view outcome_name(OutcomeTag t) {
  switch (t) {
    case OutcomeTag::Viable:
      return "Viable";
    case OutcomeTag::FormatMismatch:
      return "FormatMismatch";
    case OutcomeTag::DuplicatedContent:
      return "DuplicatedContent";
    case OutcomeTag::InferenceError:
      return "InferenceError";
  }
  return "?";
}

nlohmann::json CompileOutcome::to_json() const {
  nlohmann::json j = {{"source_id", source_id},
                      {"formula", formula},
                      {"outcome", outcome_name(tag)},
                      {"detail", detail},
                      {"repair_rounds", repair_rounds}};
  if (rule) j["rule"] = rule->name;
  if (tag == OutcomeTag::DuplicatedContent) {
    j["existing"] = existing;
    j["similarity"] = similarity;
  }
  return j;
}

std::size_t OutcomeReport::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::string OutcomeReport::to_csv() const {
  std::string out = "outcome,count\n";
  for (const auto t : kAllOutcomes) out += std::string(outcome_name(t)) + "," + std::to_string(count(t)) + "\n";
  return out;
}

nlohmann::json OutcomeReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto t : kAllOutcomes) j[std::string(outcome_name(t))] = count(t);
  return j;
}

OutcomeReport outcome_report(const std::vector<CompileOutcome>& outcomes) {
  OutcomeReport r;
  for (const auto& o : outcomes) ++r.counts[static_cast<std::size_t>(o.tag)];
  return r;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string outcomes_to_csv(const std::vector<CompileOutcome>& outcomes) {
  std::string out = "source_id,formula,outcome,detail,rule\n";
  for (const auto& o : outcomes) {
    out += csv_field(o.source_id) + "," + csv_field(o.formula) + "," + std::string(outcome_name(o.tag)) + "," +
           csv_field(o.detail) + "," + csv_field(o.rule ? o.rule->name : o.existing) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writer prompts

namespace {

const char* kWriterSystem =
    "You convert LTL formulas into production rules for a driving agent.\n"
    "Write exactly one line in this form:\n"
    "IF <feature> = <value> AND <feature> != <value> THEN longitudinal = <action>; lateral = <action>\n"
    "Use only these features:\n{features}\nand these actions:\n{actions}\n"
    "Reply with the rule line only.";

const char* kWriterRepair = "The rule failed to load: {error}\nReturn a corrected rule line.";

}  // namespace

WriterPrompts WriterPrompts::literal() {
  return {kWriterSystem,
          "Text: {text}\nFormula: {formula}\nGrounded reading: {grounded_rule}\n"
          "Translate only what the formula states. Output pass for a slot the formula does not determine.",
          kWriterRepair};
}

WriterPrompts WriterPrompts::supply() {
  return {kWriterSystem,
          "Text: {text}\nFormula: {formula}\nGrounded reading: {grounded_rule}\n"
          "The text may leave environmental conditions implicit. Infer and add any missing conditions the driver "
          "relies on. Output pass for a slot the formula does not determine.",
          kWriterRepair};
}

std::string extract_rule_source(std::string_view reply) {
  std::istringstream in{std::string(reply)};
  std::string found;
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r`");
    if (b == std::string::npos) continue;
    line = line.substr(b);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '`')) line.pop_back();
    if (line.size() >= 3 && std::toupper(static_cast<unsigned char>(line[0])) == 'I' &&
        std::toupper(static_cast<unsigned char>(line[1])) == 'F' && line[2] == ' ') {
      found = line;
    }
  }
  if (!found.empty()) return found;
  const auto b = reply.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = reply.find_last_not_of(" \t\r\n");
  return std::string(reply.substr(b, e - b + 1));
}

// ---------------------------------------------------------------------------
// Compiler

RuleCompiler::RuleCompiler(const KnowledgeBase& kb, EmbeddingProvider& provider, CompilerConfig cfg,
                           llm::ChatBackend* writer, WriterPrompts prompts)
    : kb_(kb), provider_(provider), cfg_(cfg), writer_(writer), prompts_(std::move(prompts)) {}

CompileOutcome RuleCompiler::compile(const std::string& formula, RuleStore& store, const std::string& source_id,
                                     const std::string& text) {
  CompileOutcome out;
  out.source_id = source_id;
  out.formula = formula;
  auto fail = [&](OutcomeTag tag, std::string detail) {
    out.tag = tag;
    out.detail = std::move(detail);
    return out;
  };

  ltl::Formula f;
  try {
    f = ltl::parse(formula);
  } catch (const ltl::ParseError& e) {
    return fail(OutcomeTag::FormatMismatch, std::string("not a formula: ") + e.what());
  }
  const auto verdict = ltl::classify(f);
  if (const auto* err = std::get_if<ltl::InferenceError>(&verdict)) return fail(OutcomeTag::InferenceError, err->reason);
  const auto& conv = std::get<ltl::Convertible>(verdict);

  GroundedBody body;
  try {
    body = ground(conv, kb_);
  } catch (const GroundingError& e) {
    return fail(OutcomeTag::InferenceError, e.what());
  }
  ProductionRule grounded;
  grounded.conditions = body.conditions;
  grounded.effects = body.effects;
  const std::string grounded_source = grounded.to_source();

  ProductionRule rule;
  if (!writer_) {
    try {
      rule = load_rule(grounded_source, kb_);
    } catch (const LoadError& e) {
      return fail(e.kind() == LoadError::Kind::UndefinedSymbol ? OutcomeTag::InferenceError : OutcomeTag::FormatMismatch,
                  e.what());
    }
  } else {
    std::string features, actions;
    for (const auto& fd : kb_.features) {
      std::string dom;
      for (const auto& v : fd.domain()) dom += (dom.empty() ? "" : "|") + v;
      features += "- " + fd.name + " in {" + dom + "}" + (fd.internal ? " (internal)" : "") + "\n";
    }
    for (const Slot s : {Slot::Longitudinal, Slot::Lateral}) {
      std::string list;
      for (const auto& a : kb_.actions(s)) list += (list.empty() ? "" : "|") + a;
      actions += "- " + std::string(slot_name(s)) + " in {" + list + "|pass}\n";
    }
    std::map<std::string, std::string> values = {{"formula", ltl::to_string(f)},
                                                 {"text", text},
                                                 {"grounded_rule", grounded_source},
                                                 {"features", features},
                                                 {"actions", actions}};
    llm::Conversation conv_msgs = {{llm::Role::System, critic::render(prompts_.system, values)},
                                   {llm::Role::User, critic::render(prompts_.user, values)}};
    std::optional<LoadError> last;
    bool loaded = false;
    for (int round = 0; round <= cfg_.repair_rounds; ++round) {
      std::string reply;
      try {
        reply = llm::complete(*writer_, conv_msgs).content;
      } catch (const llm::GatewayError& e) {
        out.repair_rounds = round;
        return fail(OutcomeTag::FormatMismatch, std::string("rule writer failed: ") + e.what());
      }
      try {
        rule = load_rule(extract_rule_source(reply), kb_);
        out.repair_rounds = round;
        loaded = true;
        break;
      } catch (const LoadError& e) {
        last = e;
        conv_msgs.push_back({llm::Role::Assistant, reply.empty() ? std::string("(empty)") : reply});
        values["error"] = e.what();
        conv_msgs.push_back({llm::Role::User, critic::render(prompts_.repair, values)});
      }
    }
    if (!loaded) {
      out.repair_rounds = cfg_.repair_rounds;
      return fail(last->kind() == LoadError::Kind::UndefinedSymbol ? OutcomeTag::InferenceError
                                                                   : OutcomeTag::FormatMismatch,
                  last->what());
    }
  }

  rule.utility = cfg_.initial_utility;
  rule.provenance = {source_id, ltl::to_string(f)};
  const auto dedup = store.insert_if_new(rule, provider_, cfg_.duplicate_threshold, cfg_.top_k);
  if (dedup.duplicate) {
    out.existing = dedup.existing;
    out.similarity = dedup.similarity;
    return fail(OutcomeTag::DuplicatedContent,
                dedup.body_identical ? "identical to " + dedup.existing : "similar to " + dedup.existing);
  }
  out.tag = OutcomeTag::Viable;
  out.rule = std::move(rule);
  return out;
}

}  // namespace cogform
