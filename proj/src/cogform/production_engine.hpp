#pragma once

// Perceive-plan-act cycle: match rules against a world state, resolve each
// action slot by softmax over the utilities of the matching rules.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogform/rng.hpp"
#include "cogform/rule.hpp"

namespace cogform {

struct WorldState {
  FeatureMap features;
  std::int64_t t = 0;
};

struct Firing {
  std::string rule;
  std::int64_t step = 0;
};

struct Decision {
  std::optional<std::string> longitudinal;
  std::optional<std::string> lateral;
  std::vector<Firing> fired;

  const std::optional<std::string>& slot(Slot s) const { return s == Slot::Longitudinal ? longitudinal : lateral; }
};

enum class StepKind { Longitudinal, Lateral, Chain };
std::string_view step_kind_name(StepKind k);

struct TraceStep {
  std::int64_t t = 0;
  StepKind kind = StepKind::Longitudinal;
  std::vector<std::string> conflict;  // rule names, name order
  std::vector<double> probabilities;
  std::size_t chosen = 0;  // index into conflict
  std::optional<std::string> longitudinal;  // actions this firing produced
  std::optional<std::string> lateral;

  const std::string& chosen_rule() const { return conflict[chosen]; }
};

struct ReasoningTrace {
  std::int64_t t = 0;
  /// Whether any slot had a nonempty conflict set this cycle.
  bool matched = false;
  std::vector<TraceStep> steps;

  nlohmann::json to_json() const;
};

struct EngineConfig {
  double sigma = std::sqrt(2.0);
  /// Let rules set internal features before the slots are resolved.
  bool chain_mode = false;
  int max_chain = 4;

  void validate() const;
};

/// Rules whose preconditions all hold, ordered by name.
std::vector<const ProductionRule*> match(const FeatureMap& state, const std::vector<ProductionRule>& rules);

/// exp(u_i / sigma) / sum_j exp(u_j / sigma), computed with log-sum-exp.
std::vector<double> softmax(const std::vector<double>& utilities, double sigma);

/// Draws an index from a probability vector.
std::size_t sample_index(const std::vector<double>& probabilities, Rng& rng);

struct Selection {
  std::size_t chosen = 0;
  std::vector<double> probabilities;
};

/// Softmax choice over a nonempty conflict set.
Selection select(const std::vector<const ProductionRule*>& conflict, double sigma, Rng& rng);

/// One engine cycle: optional chain steps, then the longitudinal slot, then
/// the lateral slot unless the longitudinal winner already filled it.
std::pair<Decision, ReasoningTrace> decide(const WorldState& state, const std::vector<ProductionRule>& rules,
                                           const EngineConfig& cfg, Rng& rng);

}  // namespace cogform
