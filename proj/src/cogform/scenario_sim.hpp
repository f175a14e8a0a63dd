#pragma once

// Discrete symbolic driving scenarios and table-driven reference drivers
// that produce episode datasets.

#include <string>
#include <vector>

#include "cogform/crl_trainer.hpp"

namespace cogform::sim {

enum class Archetype { HighwayCutIn, SignalizedIntersection, LaneChangeInterference };

std::string_view archetype_name(Archetype a);
Archetype archetype_from_name(std::string_view s);
inline constexpr Archetype kAllArchetypes[] = {Archetype::HighwayCutIn, Archetype::SignalizedIntersection,
                                              Archetype::LaneChangeInterference};

struct ScenarioSpec {
  Archetype archetype = Archetype::HighwayCutIn;
  int episode_length = 20;
  /// The NPC manoeuvre starts at a step drawn uniformly from [trigger_min, trigger_max].
  int trigger_min = 4;
  int trigger_max = 12;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioSpec from_json(const nlohmann::json& j);
};

/// First entry whose `when` features all match wins. The last entry must
/// have an empty `when`, which makes the table total.
struct DecisionTable {
  struct Entry {
    FeatureMap when;
    std::string longitudinal;
    std::string lateral;
  };
  std::string name;
  std::vector<Entry> entries;

  void validate(const KnowledgeBase& kb) const;
  const Entry& lookup(const FeatureMap& state) const;
  nlohmann::json to_json() const;
  static DecisionTable from_json(const nlohmann::json& j);
};

/// Each episode follows one table, drawn with the mixture weights.
struct ReferencePolicy {
  std::vector<DecisionTable> tables;
  std::vector<double> weights;

  void validate(const KnowledgeBase& kb) const;
  nlohmann::json to_json() const;
  /// Accepts a single table or {"mixture": [{"weight", "table"}]}.
  static ReferencePolicy from_json(const nlohmann::json& j);
  static ReferencePolicy single(DecisionTable t);
};

KnowledgeBase scenario_kb(Archetype a);

/// The bundled cautious-driver table for an archetype.
DecisionTable default_table(Archetype a);
/// A less careful driver, used as a second mixture component.
DecisionTable assertive_table(Archetype a);

/// Seeded, deterministic. Episode i uses its own sub-seed, so the first k
/// episodes do not depend on n_episodes.
std::vector<Episode> generate(const ScenarioSpec& spec, const ReferencePolicy& policy, int n_episodes);

}  // namespace cogform::sim
