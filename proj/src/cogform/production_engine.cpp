#include "cogform/production_engine.hpp"

#include <algorithm>
#include <limits>

namespace cogform {

std::string_view step_kind_name(StepKind k) {
  switch (k) {
    case StepKind::Longitudinal:
      return "longitudinal";
    case StepKind::Lateral:
      return "lateral";
    case StepKind::Chain:
      return "chain";
  }
  return "?";
}

void EngineConfig::validate() const {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw SchemaError("engine: sigma must be positive");
  if (max_chain < 0) throw SchemaError("engine: max_chain must be >= 0");
}

nlohmann::json ReasoningTrace::to_json() const {
  nlohmann::json steps_j = nlohmann::json::array();
  for (const auto& s : steps) {
    steps_j.push_back({{"t", s.t},
                       {"kind", step_kind_name(s.kind)},
                       {"conflict", s.conflict},
                       {"probabilities", s.probabilities},
                       {"chosen", s.chosen_rule()},
                       {"longitudinal", s.longitudinal ? nlohmann::json(*s.longitudinal) : nlohmann::json(nullptr)},
                       {"lateral", s.lateral ? nlohmann::json(*s.lateral) : nlohmann::json(nullptr)}});
  }
  return {{"t", t}, {"matched", matched}, {"steps", steps_j}};
}

std::vector<const ProductionRule*> match(const FeatureMap& state, const std::vector<ProductionRule>& rules) {
  std::vector<const ProductionRule*> out;
  for (const auto& r : rules) {
    if (r.matches(state)) out.push_back(&r);
  }
  std::sort(out.begin(), out.end(), [](const ProductionRule* a, const ProductionRule* b) { return a->name < b->name; });
  return out;
}

std::vector<double> softmax(const std::vector<double>& utilities, double sigma) {
  std::vector<double> p(utilities.size());
  if (p.empty()) return p;
  double m = -std::numeric_limits<double>::infinity();
  for (double u : utilities) m = std::max(m, u / sigma);
  double z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(utilities[i] / sigma - m));
  for (double& x : p) x /= z;
  return p;
}

std::size_t sample_index(const std::vector<double>& probabilities, Rng& rng) {
  if (probabilities.size() == 1) return 0;
  const double r = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    if (r < acc) return i;
  }
  return probabilities.size() - 1;
}

Selection select(const std::vector<const ProductionRule*>& conflict, double sigma, Rng& rng) {
  if (conflict.empty()) throw std::invalid_argument("select: empty conflict set");
  std::vector<double> u;
  u.reserve(conflict.size());
  for (const auto* r : conflict) u.push_back(r->utility);
  Selection s;
  s.probabilities = softmax(u, sigma);
  s.chosen = sample_index(s.probabilities, rng);
  return s;
}

namespace {

TraceStep make_step(std::int64_t t, StepKind kind, const std::vector<const ProductionRule*>& conflict,
                    const Selection& sel) {
  TraceStep step;
  step.t = t;
  step.kind = kind;
  for (const auto* r : conflict) step.conflict.push_back(r->name);
  step.probabilities = sel.probabilities;
  step.chosen = sel.chosen;
  return step;
}

bool changes_state(const ProductionRule& r, const FeatureMap& state) {
  for (const auto& [f, v] : r.effects.sets) {
    const auto it = state.find(f);
    if (it == state.end() || it->second != v) return true;
  }
  return false;
}

}  // namespace

std::pair<Decision, ReasoningTrace> decide(const WorldState& state, const std::vector<ProductionRule>& rules,
                                           const EngineConfig& cfg, Rng& rng) {
  Decision d;
  ReasoningTrace trace;
  trace.t = state.t;
  const auto matched = match(state.features, rules);
  if (matched.empty()) return {d, trace};

  const std::vector<const ProductionRule*>* current = &matched;
  FeatureMap working;
  std::vector<const ProductionRule*> rematched;
  if (cfg.chain_mode) {
    working = state.features;
    for (int k = 0; k < cfg.max_chain; ++k) {
      std::vector<const ProductionRule*> chain;
      for (const auto* r : *current) {
        if (!r->effects.sets.empty() && changes_state(*r, working)) chain.push_back(r);
      }
      if (chain.empty()) break;
      const auto sel = select(chain, cfg.sigma, rng);
      const auto* winner = chain[sel.chosen];
      for (const auto& [f, v] : winner->effects.sets) working[f] = v;
      trace.steps.push_back(make_step(state.t, StepKind::Chain, chain, sel));
      d.fired.push_back({winner->name, state.t});
      rematched = match(working, rules);
      current = &rematched;
    }
  }

  for (const Slot slot : {Slot::Longitudinal, Slot::Lateral}) {
    if (d.slot(slot)) continue;
    std::vector<const ProductionRule*> conflict;
    for (const auto* r : *current) {
      if (r->effects.slot(slot)) conflict.push_back(r);
    }
    if (conflict.empty()) continue;
    const auto sel = select(conflict, cfg.sigma, rng);
    const auto* winner = conflict[sel.chosen];
    auto step = make_step(state.t, slot == Slot::Longitudinal ? StepKind::Longitudinal : StepKind::Lateral, conflict, sel);
    if (slot == Slot::Longitudinal) {
      d.longitudinal = step.longitudinal = winner->effects.longitudinal;
      if (winner->effects.lateral) d.lateral = step.lateral = winner->effects.lateral;
    } else {
      d.lateral = step.lateral = winner->effects.lateral;
    }
    trace.steps.push_back(std::move(step));
    d.fired.push_back({winner->name, state.t});
  }
  trace.matched = std::any_of(trace.steps.begin(), trace.steps.end(),
                              [](const TraceStep& s) { return s.kind != StepKind::Chain; });
  return {d, trace};
}

}  // namespace cogform
