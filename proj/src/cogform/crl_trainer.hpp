#pragma once

// Cognitive reinforcement learning: per-slot rewards for matching the
// reference decision, decayed along the firings that led to them and folded
// into rule utilities.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cogform/production_engine.hpp"

namespace cogform {

struct EpisodeStep {
  WorldState state;
  std::optional<std::string> longitudinal;  // reference actions
  std::optional<std::string> lateral;

  const std::optional<std::string>& reference(Slot s) const { return s == Slot::Longitudinal ? longitudinal : lateral; }
};

struct Episode {
  std::string id;
  std::string scenario;
  std::string subject;
  std::vector<EpisodeStep> steps;
};

class EpisodeSchemaError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

/// JSON Lines, one record per step:
/// {"episode", "scenario", "subject", "t", "state", "reference": {"longitudinal", "lateral"}}.
/// Records are grouped by episode id in order of first appearance.
std::vector<Episode> read_episodes(std::istream& in);
std::vector<Episode> load_episodes(const std::string& path);
void write_episodes(std::ostream& out, const std::vector<Episode>& episodes);
void save_episodes(const std::string& path, const std::vector<Episode>& episodes);

/// Throws EpisodeSchemaError on empty episodes, invalid states or reference
/// actions outside the KB vocabulary.
void validate_episodes(const std::vector<Episode>& episodes, const KnowledgeBase& kb);

struct TrainConfig {
  double alpha = 2e-4;
  double beta = 0.01;
  double sigma = std::sqrt(2.0);
  double initial_utility = 0.0;
  double reward_positive = 10.0;
  double reward_negative = 0.0;
  int epochs = 1;
  std::uint64_t seed = 0;
  bool chain_mode = false;
  int max_chain = 4;

  void validate() const;
  EngineConfig engine() const { return {sigma, chain_mode, max_chain}; }
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// r = R - beta * (reward_step - firing_step).
double decayed_reward(double reward, std::int64_t firing_step, std::int64_t reward_step, double beta);

/// One reward per firing in the window, in window order.
std::vector<double> reward_decompose(double reward, const std::vector<Firing>& window, std::int64_t reward_step,
                                     double beta);

/// u + alpha * (r - u).
double utility_update(double u, double r, double alpha);

struct CurvePoint {
  int epoch = 0;
  double agreement = 0.0;  // online agreement during the epoch
  double mean_utility = 0.0;
  std::optional<double> js;
};

std::string curve_to_csv(const std::vector<CurvePoint>& curve);

/// Called after every epoch with the current rules; its value is stored as
/// the epoch's JS divergence.
using EpochHook = std::function<std::optional<double>(int epoch, const std::vector<ProductionRule>&)>;

struct TrainResult {
  std::vector<ProductionRule> rules;
  std::vector<CurvePoint> curve;
  std::size_t steps = 0;    // engine cycles
  std::size_t updates = 0;  // utility updates applied
};

/// Utilities start at the initial utility; episodes are shuffled per epoch.
TrainResult train(std::vector<ProductionRule> rules, const std::vector<Episode>& episodes, const TrainConfig& cfg,
                  const EpochHook& hook = {});

struct Agreement {
  double longitudinal = 0.0;
  double lateral = 0.0;
  double overall = 0.0;
  double rsr = 0.0;
  std::size_t pairs = 0;  // (state, slot) pairs with a reference action, per run

  nlohmann::json to_json() const;
};

/// Frozen-utility agreement with the reference, averaged over n_runs seeded runs.
Agreement evaluate_agreement(const std::vector<ProductionRule>& rules, const std::vector<Episode>& episodes,
                             const EngineConfig& engine, std::uint64_t seed, int n_runs = 1);

}  // namespace cogform
