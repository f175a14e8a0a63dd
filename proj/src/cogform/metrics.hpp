#pragma once

// Scoring for translations (match accuracy, BLEU) and agents (JS divergence
// against reference decision distributions, reasoning success rate).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cogform/crl_trainer.hpp"

namespace cogform::metrics {

/// Fraction of pairs whose canonical forms are equal. Unparseable entries
/// never match. Throws std::invalid_argument on a length mismatch.
double ltl_match_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& references);

/// BLEU-4: unsmoothed unigram precision, add-one smoothing for n >= 2,
/// brevity penalty. An empty prediction scores 0.
double ltl_bleu(const std::vector<std::string>& prediction, const std::vector<std::string>& reference);
/// Tokenizes both sides with the LTL lexer (whitespace split if lexing fails).
double ltl_bleu(const std::string& prediction, const std::string& reference);
/// Corpus-level BLEU-4 with pooled n-gram counts and lengths.
double corpus_bleu(const std::vector<std::vector<std::string>>& predictions,
                   const std::vector<std::vector<std::string>>& references);

std::vector<std::string> bleu_tokens(const std::string& text);

using Distribution = std::map<std::string, double>;

/// 1/2 KL(P||M) + 1/2 KL(Q||M), M = (P+Q)/2, base-2 logs, 0 log 0 = 0.
/// Keys missing from one side have probability 0 there.
double js_divergence(const Distribution& p, const Distribution& q);
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

/// "feature=value,..." in feature order.
std::string state_key(const FeatureMap& state);
/// "<longitudinal>|<lateral>", "none" for an empty slot.
std::string action_key(const std::optional<std::string>& longitudinal, const std::optional<std::string>& lateral);

struct StateDistributions {
  std::string state;
  std::size_t samples = 0;  // reference sample count
  std::size_t runs = 0;     // engine runs
  Distribution reference;
  Distribution model;
  double js = 0.0;
};

struct TopStates {
  std::vector<StateDistributions> states;
  /// Fewer distinct states than requested.
  bool truncated = false;
  double mean_js() const;
  nlohmann::json to_json() const;
};

/// Groups reference samples by state, keeps the top_k most frequent (ties by
/// state key) and runs the engine `samples` times per state, or `runs`
/// times when given.
TopStates decision_distributions(const std::vector<ProductionRule>& rules, const std::vector<Episode>& episodes,
                                 const EngineConfig& engine, std::uint64_t seed, std::size_t top_k = 10,
                                 std::optional<std::size_t> runs = std::nullopt);

/// Fraction of cycles whose conflict set was nonempty for some slot.
double rsr(const std::vector<ReasoningTrace>& traces);

}  // namespace cogform::metrics
