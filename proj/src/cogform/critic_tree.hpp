#pragma once

// Critic Tree: a revisor model rewrites a candidate LTL formula, a sampled
// set of critic models judges each node, and every rejection spawns a child
// revision carrying the critic's feedback. Search is level by level up to a
// maximum depth; the first node approved by all critics is returned,
// otherwise the root revision.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogform/llm_gateway.hpp"

namespace cogform::critic {

/// Plain-text prompt templates with {placeholder} fields.
struct PromptTemplates {
  std::string revisor_system;
  std::string revisor_initial;   // {text} {initial} {vocabulary}
  std::string revisor_feedback;  // {feedback}
  std::string critic_system;     // {vocabulary}
  std::string critic_user;       // {text} {formula} {parse_note}

  /// The minimal-knowledge prompt set.
  static PromptTemplates minimal();
  /// Reads <dir>/<field>.txt for each field; missing files keep the minimal text.
  static PromptTemplates load(const std::string& dir);
};

/// Replaces every {key} in tmpl. Unknown placeholders are left untouched.
std::string render(const std::string& tmpl, const std::map<std::string, std::string>& values);

struct CriticTreeConfig {
  int num_critics = 2;
  int max_depth = 2;
  llm::BackendSpec revisor;
  llm::CriticEnsembleSpec critics;
  PromptTemplates prompts = PromptTemplates::minimal();
  /// Atom vocabulary interpolated into the prompts (knowledge-base atoms).
  std::vector<std::string> vocabulary;
  /// When no node is fully approved, return the best-scoring node instead of
  /// the root. Off by default.
  bool fallback_to_best = false;
  /// Adds wall-clock timings to trace events (makes traces non-reproducible).
  bool record_timings = false;

  void validate() const;
};

/// Reads the "critic_tree" config section. Relative paths resolve against base_dir.
CriticTreeConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = {});

struct CriticVerdict {
  bool approved = false;
  std::string feedback;
  std::string critic;  // backend name
};

/// Parses `APPROVED` or `REVISE: <feedback>`; anything else is a rejection
/// carrying the raw reply as feedback.
CriticVerdict parse_verdict(std::string_view reply);

/// Pulls the formula out of a revisor reply (code fences and labels removed).
std::string extract_formula(std::string_view reply);

struct TreeNode {
  int id = 0;
  int depth = 0;
  std::optional<int> parent;
  std::vector<int> children;
  std::string formula;
  bool parseable = false;
  llm::Conversation context;
  std::vector<CriticVerdict> verdicts;
};

struct TraceEvent {
  enum class Kind { Revise, Critic } kind;
  int node = 0;
  std::string backend;
  std::string detail;  // formula for revisions, feedback for critics
  bool approved = false;
  bool parseable = true;
  double elapsed_ms = -1;
};

struct CriticTreeResult {
  std::string formula;
  int returned_node = 0;
  /// "approved", "fallback_root" or "fallback_best".
  std::string outcome;
  std::vector<TreeNode> nodes;
  std::vector<TraceEvent> events;
  int revisor_calls = 0;
  int critic_calls = 0;

  std::size_t distinct_revisions() const;
  nlohmann::json to_json() const;
};

class CriticTree {
 public:
  explicit CriticTree(CriticTreeConfig cfg);
  /// Uses the given backends instead of building them from the config.
  /// critics[i] corresponds to cfg.critics.members[i].
  CriticTree(CriticTreeConfig cfg, std::unique_ptr<llm::ChatBackend> revisor,
             std::vector<std::unique_ptr<llm::ChatBackend>> critics);

  /// Refines `initial` for `text`. The critic draw sequence is seeded with
  /// `seed`, or with the ensemble seed when absent.
  CriticTreeResult run(const std::string& text, const std::string& initial,
                       std::optional<std::uint64_t> seed = std::nullopt);

  /// Asks num_critics sampled critics about one node, in order.
  std::vector<CriticVerdict> judge(const TreeNode& node, const std::string& text, Rng& rng);

  const CriticTreeConfig& config() const { return cfg_; }

 private:
  CriticVerdict ask_critic(const TreeNode& node, const std::string& text, Rng& rng, CriticTreeResult* trace);
  TreeNode revise(const llm::Conversation& context, int id, int depth, std::optional<int> parent,
                  CriticTreeResult& trace);

  CriticTreeConfig cfg_;
  std::unique_ptr<llm::ChatBackend> revisor_;
  std::vector<std::unique_ptr<llm::ChatBackend>> critics_;
};

}  // namespace cogform::critic
