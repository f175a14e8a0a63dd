#pragma once

// LTL formula -> production rule. Each attempt ends in exactly one outcome:
// Viable, FormatMismatch, DuplicatedContent or InferenceError.

#include <array>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cogform/embedding.hpp"
#include "cogform/ltl.hpp"
#include "cogform/rule.hpp"

namespace cogform {

class GroundingError : public Error {
 public:
  GroundingError(std::string atom, const std::string& message) : Error(message), atom_(std::move(atom)) {}
  const std::string& atom() const { return atom_; }

 private:
  std::string atom_;
};

struct GroundedBody {
  std::vector<Condition> conditions;
  Effects effects;
};

/// Maps antecedent literals to preconditions (negation flips the comparator)
/// and consequent literals to slot actions. A positive consequent atom
/// grounded in an internal feature becomes a chain-mode assignment.
/// Throws GroundingError for unknown atoms, negated or conflicting actions.
GroundedBody ground(const ltl::Convertible& verdict, const KnowledgeBase& kb);

struct DedupResult {
  bool duplicate = false;
  bool body_identical = false;
  std::string existing;     // closest stored rule, empty when the store is empty
  double similarity = 0.0;  // cosine to `existing`
};

/// Body-identical rules are always duplicates; otherwise the candidate name
/// is compared with the top_k most similar stored names and flagged when any
/// cosine reaches threshold.
DedupResult dedup_check(const ProductionRule& candidate, const std::vector<ProductionRule>& store,
                        EmbeddingProvider& provider, double threshold = 0.9, std::size_t top_k = 5);

/// Rule store with atomic check-then-insert.
class RuleStore {
 public:
  RuleStore() = default;
  explicit RuleStore(std::vector<ProductionRule> rules);

  DedupResult check(const ProductionRule& candidate, EmbeddingProvider& provider, double threshold,
                    std::size_t top_k) const;
  /// Inserts unless the candidate is a duplicate.
  DedupResult insert_if_new(ProductionRule candidate, EmbeddingProvider& provider, double threshold,
                            std::size_t top_k);
  std::vector<ProductionRule> rules() const;
  std::size_t size() const;

 private:
  DedupResult check_locked(const ProductionRule& candidate, EmbeddingProvider& provider, double threshold,
                           std::size_t top_k) const;

  mutable std::mutex mutex_;
  std::vector<ProductionRule> rules_;
  mutable std::vector<Vector> embeddings_;
};

enum class OutcomeTag { Viable, FormatMismatch, DuplicatedContent, InferenceError };
std::string_view outcome_name(OutcomeTag t);
inline constexpr std::array<OutcomeTag, 4> kAllOutcomes = {OutcomeTag::Viable, OutcomeTag::FormatMismatch,
                                                           OutcomeTag::DuplicatedContent, OutcomeTag::InferenceError};

struct CompileOutcome {
  OutcomeTag tag = OutcomeTag::InferenceError;
  std::string detail;
  std::optional<ProductionRule> rule;  // Viable only
  std::string existing;                // DuplicatedContent only
  double similarity = 0.0;
  std::string source_id;
  std::string formula;
  int repair_rounds = 0;

  nlohmann::json to_json() const;
};

struct OutcomeReport {
  std::array<std::size_t, 4> counts{};  // indexed like kAllOutcomes

  std::size_t count(OutcomeTag t) const { return counts[static_cast<std::size_t>(t)]; }
  std::size_t total() const;
  /// "outcome,count" rows in fixed category order.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

OutcomeReport outcome_report(const std::vector<CompileOutcome>& outcomes);
/// One row per attempt: source_id,formula,outcome,detail,rule.
std::string outcomes_to_csv(const std::vector<CompileOutcome>& outcomes);

/// Prompt set for the rule-writer model. Placeholders: {formula} {text}
/// {grounded_rule} {features} {actions} {error}.
struct WriterPrompts {
  std::string system;
  std::string user;
  std::string repair;

  /// Write exactly what the formula states; undetermined slots are pass.
  static WriterPrompts literal();
  /// Also infer missing environmental conditions from the text.
  static WriterPrompts supply();
};

struct CompilerConfig {
  double duplicate_threshold = 0.9;
  std::size_t top_k = 5;
  int repair_rounds = 3;
  double initial_utility = 0.0;
};

class RuleCompiler {
 public:
  /// writer may be null: the grounded rule is then loaded directly.
  RuleCompiler(const KnowledgeBase& kb, EmbeddingProvider& provider, CompilerConfig cfg = {},
               llm::ChatBackend* writer = nullptr, WriterPrompts prompts = WriterPrompts::literal());

  /// Classify, ground, load (with repair rounds when a writer is set), then
  /// dedup and insert. `text` is the source segment, used by writer prompts.
  CompileOutcome compile(const std::string& formula, RuleStore& store, const std::string& source_id = {},
                         const std::string& text = {});

 private:
  const KnowledgeBase& kb_;
  EmbeddingProvider& provider_;
  CompilerConfig cfg_;
  llm::ChatBackend* writer_;
  WriterPrompts prompts_;
};

/// Pulls the rule line (starting with IF) out of a writer reply.
std::string extract_rule_source(std::string_view reply);

}  // namespace cogform
