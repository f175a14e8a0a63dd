#include "cogform/scenario_sim.hpp"

#include <algorithm>
#include <cmath>

namespace cogform::sim {

std::string_view archetype_name(Archetype a) {
  switch (a) {
    case Archetype::HighwayCutIn:
      return "highway_cut_in";
    case Archetype::SignalizedIntersection:
      return "signalized_intersection";
    case Archetype::LaneChangeInterference:
      return "lane_change_interference";
  }
  return "?";
}

Archetype archetype_from_name(std::string_view s) {
  for (const auto a : kAllArchetypes) {
    if (archetype_name(a) == s) return a;
  }
  throw SchemaError("unknown scenario archetype: " + std::string(s));
}

void ScenarioSpec::validate() const {
  if (episode_length < 1) throw SchemaError("scenario: episode_length must be >= 1");
  if (trigger_min < 0 || trigger_max < trigger_min) throw SchemaError("scenario: invalid trigger range");
  if (!(noise >= 0 && noise < 1)) throw SchemaError("scenario: noise must be in [0, 1)");
}

nlohmann::json ScenarioSpec::to_json() const {
  return {{"archetype", archetype_name(archetype)},
          {"episode_length", episode_length},
          {"trigger_min", trigger_min},
          {"trigger_max", trigger_max},
          {"noise", noise},
          {"seed", seed}};
}

ScenarioSpec ScenarioSpec::from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  try {
    s.archetype = archetype_from_name(j.at("archetype").get<std::string>());
    s.episode_length = j.value("episode_length", s.episode_length);
    s.trigger_min = j.value("trigger_min", s.trigger_min);
    s.trigger_max = j.value("trigger_max", s.trigger_max);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("scenario spec: ") + e.what());
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Decision tables

void DecisionTable::validate(const KnowledgeBase& kb) const {
  if (entries.empty() || !entries.back().when.empty()) {
    throw SchemaError("decision table '" + name + "' must end with a default entry");
  }
  for (const auto& e : entries) {
    for (const auto& [f, v] : e.when) {
      const auto* def = kb.feature(f);
      if (!def || !def->in_domain(v)) throw SchemaError("decision table '" + name + "': bad condition " + f + "=" + v);
    }
    if (!kb.is_action(Slot::Longitudinal, e.longitudinal) || !kb.is_action(Slot::Lateral, e.lateral)) {
      throw SchemaError("decision table '" + name + "': unknown action in entry");
    }
  }
}

const DecisionTable::Entry& DecisionTable::lookup(const FeatureMap& state) const {
  for (const auto& e : entries) {
    const bool hit = std::all_of(e.when.begin(), e.when.end(), [&](const auto& kv) {
      const auto it = state.find(kv.first);
      return it != state.end() && it->second == kv.second;
    });
    if (hit) return e;
  }
  throw SchemaError("decision table '" + name + "' has no default entry");
}

nlohmann::json DecisionTable::to_json() const {
  nlohmann::json es = nlohmann::json::array();
  for (const auto& e : entries) {
    es.push_back({{"when", e.when}, {"longitudinal", e.longitudinal}, {"lateral", e.lateral}});
  }
  return {{"name", name}, {"entries", es}};
}

DecisionTable DecisionTable::from_json(const nlohmann::json& j) {
  DecisionTable t;
  try {
    t.name = j.value("name", std::string("table"));
    for (const auto& e : j.at("entries")) {
      DecisionTable::Entry entry;
      if (e.contains("when")) {
        for (const auto& [k, v] : e["when"].items()) entry.when[k] = value_text(v);
      }
      entry.longitudinal = e.at("longitudinal").get<std::string>();
      entry.lateral = e.at("lateral").get<std::string>();
      t.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("decision table: ") + e.what());
  }
  return t;
}

void ReferencePolicy::validate(const KnowledgeBase& kb) const {
  if (tables.empty() || tables.size() != weights.size()) throw SchemaError("policy: one weight per table required");
  double s = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw SchemaError("policy: weights must be non-negative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-9) throw SchemaError("policy: mixture weights must sum to 1");
  for (const auto& t : tables) t.validate(kb);
}

nlohmann::json ReferencePolicy::to_json() const {
  nlohmann::json m = nlohmann::json::array();
  for (std::size_t i = 0; i < tables.size(); ++i) m.push_back({{"weight", weights[i]}, {"table", tables[i].to_json()}});
  return {{"mixture", m}};
}

ReferencePolicy ReferencePolicy::from_json(const nlohmann::json& j) {
  if (!j.contains("mixture")) return single(DecisionTable::from_json(j));
  ReferencePolicy p;
  try {
    for (const auto& m : j["mixture"]) {
      p.weights.push_back(m.at("weight").get<double>());
      p.tables.push_back(DecisionTable::from_json(m.at("table")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("policy: ") + e.what());
  }
  return p;
}

ReferencePolicy ReferencePolicy::single(DecisionTable t) { return {{std::move(t)}, {1.0}}; }

// ---------------------------------------------------------------------------
// Knowledge bases

namespace {

nlohmann::json common_kb(const char* name) {
  return {{"name", name},
          {"actions",
           {{"longitudinal", {"accelerate", "keep", "decelerate", "brake"}},
            {"lateral", {"keep_lane", "change_left", "change_right"}}}},
          {"action_atoms",
           {{"speed_up", {{"slot", "longitudinal"}, {"action", "accelerate"}}},
            {"maintain_speed", {{"slot", "longitudinal"}, {"action", "keep"}}},
            {"slow_down", {{"slot", "longitudinal"}, {"action", "decelerate"}}},
            {"stop", {{"slot", "longitudinal"}, {"action", "brake"}}},
            {"stay_in_lane", {{"slot", "lateral"}, {"action", "keep_lane"}}},
            {"move_left", {{"slot", "lateral"}, {"action", "change_left"}}},
            {"move_right", {{"slot", "lateral"}, {"action", "change_right"}}}}}};
}

nlohmann::json speed_feature() { return {{"name", "ego_speed"}, {"type", "enum"}, {"values", {"low", "medium", "high"}}}; }

void add_speed_atoms(nlohmann::json& c) {
  c["speed_low"] = {{"feature", "ego_speed"}, {"value", "low"}};
  c["speed_medium"] = {{"feature", "ego_speed"}, {"value", "medium"}};
  c["speed_high"] = {{"feature", "ego_speed"}, {"value", "high"}};
}

}  // namespace

KnowledgeBase scenario_kb(Archetype a) {
  nlohmann::json j = common_kb(std::string(archetype_name(a)).c_str());
  nlohmann::json c = nlohmann::json::object();
  add_speed_atoms(c);
  switch (a) {
    case Archetype::HighwayCutIn:
      j["features"] = {{{"name", "right_vehicle_signaling"}, {"type", "bool"}},
                       {{"name", "front_gap_closing"}, {"type", "bool"}},
                       {{"name", "left_lane_free"}, {"type", "bool"}},
                       speed_feature(),
                       {{"name", "hazard_ahead"}, {"type", "bool"}, {"internal", true}}};
      c["right_vehicle_signaling"] = {{"feature", "right_vehicle_signaling"}, {"value", true}};
      c["cut_in_ahead"] = {{"feature", "front_gap_closing"}, {"value", true}};
      c["front_gap_closing"] = {{"feature", "front_gap_closing"}, {"value", true}};
      c["left_lane_free"] = {{"feature", "left_lane_free"}, {"value", true}};
      c["hazard_ahead"] = {{"feature", "hazard_ahead"}, {"value", true}};
      break;
    case Archetype::SignalizedIntersection:
      j["features"] = {{{"name", "signal_state"}, {"type", "enum"}, {"values", {"red", "yellow", "green"}}},
                       {{"name", "pedestrian_present"}, {"type", "bool"}},
                       {{"name", "near_stop_line"}, {"type", "bool"}},
                       speed_feature(),
                       {{"name", "must_yield"}, {"type", "bool"}, {"internal", true}}};
      c["red_light"] = {{"feature", "signal_state"}, {"value", "red"}};
      c["yellow_light"] = {{"feature", "signal_state"}, {"value", "yellow"}};
      c["green_light"] = {{"feature", "signal_state"}, {"value", "green"}};
      c["pedestrian_present"] = {{"feature", "pedestrian_present"}, {"value", true}};
      c["near_stop_line"] = {{"feature", "near_stop_line"}, {"value", true}};
      c["must_yield"] = {{"feature", "must_yield"}, {"value", true}};
      break;
    case Archetype::LaneChangeInterference:
      j["features"] = {{{"name", "adjacent_vehicle_signaling"}, {"type", "bool"}},
                       {{"name", "adjacent_vehicle_merging"}, {"type", "bool"}},
                       {{"name", "left_lane_free"}, {"type", "bool"}},
                       speed_feature(),
                       {{"name", "merge_conflict"}, {"type", "bool"}, {"internal", true}}};
      c["adjacent_vehicle_signaling"] = {{"feature", "adjacent_vehicle_signaling"}, {"value", true}};
      c["adjacent_vehicle_merging"] = {{"feature", "adjacent_vehicle_merging"}, {"value", true}};
      c["left_lane_free"] = {{"feature", "left_lane_free"}, {"value", true}};
      c["merge_conflict"] = {{"feature", "merge_conflict"}, {"value", true}};
      break;
  }
  j["conditions"] = c;
  return KnowledgeBase::from_json(j);
}

namespace {

DecisionTable::Entry entry(FeatureMap when, const char* lon, const char* lat) { return {std::move(when), lon, lat}; }

}  // namespace

DecisionTable default_table(Archetype a) {
  DecisionTable t;
  t.name = "cautious";
  switch (a) {
    case Archetype::HighwayCutIn:
      t.entries = {entry({{"front_gap_closing", "true"}, {"ego_speed", "low"}}, "keep", "keep_lane"),
                   entry({{"front_gap_closing", "true"}}, "decelerate", "keep_lane"),
                   entry({{"right_vehicle_signaling", "true"}, {"ego_speed", "high"}}, "decelerate", "keep_lane"),
                   entry({{"right_vehicle_signaling", "true"}}, "keep", "keep_lane"),
                   entry({{"ego_speed", "low"}}, "accelerate", "keep_lane"),
                   entry({}, "keep", "keep_lane")};
      break;
    case Archetype::SignalizedIntersection:
      t.entries = {entry({{"pedestrian_present", "true"}}, "brake", "keep_lane"),
                   entry({{"signal_state", "red"}, {"near_stop_line", "true"}}, "brake", "keep_lane"),
                   entry({{"signal_state", "red"}}, "decelerate", "keep_lane"),
                   entry({{"signal_state", "yellow"}}, "decelerate", "keep_lane"),
                   entry({{"ego_speed", "low"}}, "accelerate", "keep_lane"),
                   entry({}, "keep", "keep_lane")};
      break;
    case Archetype::LaneChangeInterference:
      t.entries = {entry({{"adjacent_vehicle_merging", "true"}, {"left_lane_free", "true"}}, "keep", "change_left"),
                   entry({{"adjacent_vehicle_merging", "true"}}, "decelerate", "keep_lane"),
                   entry({{"adjacent_vehicle_signaling", "true"}}, "decelerate", "keep_lane"),
                   entry({{"ego_speed", "low"}}, "accelerate", "keep_lane"),
                   entry({}, "keep", "keep_lane")};
      break;
  }
  return t;
}

DecisionTable assertive_table(Archetype a) {
  DecisionTable t;
  t.name = "assertive";
  switch (a) {
    case Archetype::HighwayCutIn:
      t.entries = {entry({{"front_gap_closing", "true"}, {"left_lane_free", "true"}}, "keep", "change_left"),
                   entry({{"front_gap_closing", "true"}}, "brake", "keep_lane"),
                   entry({{"ego_speed", "high"}}, "keep", "keep_lane"),
                   entry({}, "accelerate", "keep_lane")};
      break;
    case Archetype::SignalizedIntersection:
      t.entries = {entry({{"pedestrian_present", "true"}}, "brake", "keep_lane"),
                   entry({{"signal_state", "red"}}, "brake", "keep_lane"),
                   entry({{"signal_state", "yellow"}, {"near_stop_line", "true"}}, "accelerate", "keep_lane"),
                   entry({{"ego_speed", "high"}}, "keep", "keep_lane"),
                   entry({}, "accelerate", "keep_lane")};
      break;
    case Archetype::LaneChangeInterference:
      t.entries = {entry({{"adjacent_vehicle_merging", "true"}}, "brake", "keep_lane"),
                   entry({{"adjacent_vehicle_signaling", "true"}, {"ego_speed", "high"}}, "keep", "keep_lane"),
                   entry({{"ego_speed", "high"}}, "keep", "keep_lane"),
                   entry({}, "accelerate", "keep_lane")};
      break;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const std::vector<std::string> kSpeeds = {"low", "medium", "high"};

std::string next_speed(const std::string& speed, const std::string& action) {
  auto i = static_cast<int>(std::find(kSpeeds.begin(), kSpeeds.end(), speed) - kSpeeds.begin());
  if (action == "accelerate") i = std::min(i + 1, 2);
  if (action == "decelerate") i = std::max(i - 1, 0);
  if (action == "brake") i = 0;
  return kSpeeds[static_cast<std::size_t>(i)];
}

std::string b(bool x) { return x ? "true" : "false"; }

std::string noisy(const std::string& action, const std::vector<std::string>& all, double noise, Rng& rng) {
  if (noise <= 0 || rng.uniform() >= noise) return action;
  std::vector<std::string> others;
  for (const auto& a : all) {
    if (a != action) others.push_back(a);
  }
  return others[rng.below(others.size())];
}

}  // namespace

std::vector<Episode> generate(const ScenarioSpec& spec, const ReferencePolicy& policy, int n_episodes) {
  spec.validate();
  const KnowledgeBase kb = scenario_kb(spec.archetype);
  policy.validate(kb);
  if (n_episodes < 0) throw std::invalid_argument("generate: negative episode count");
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(n_episodes));
  const std::string scen(archetype_name(spec.archetype));

  for (int i = 0; i < n_episodes; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    // Mixture component.
    std::size_t table = policy.tables.size() - 1;
    {
      const double r = rng.uniform();
      double acc = 0;
      for (std::size_t k = 0; k < policy.weights.size(); ++k) {
        acc += policy.weights[k];
        if (r < acc) {
          table = k;
          break;
        }
      }
    }
    const auto& tab = policy.tables[table];
    const int trigger = spec.trigger_min + static_cast<int>(rng.below(static_cast<std::size_t>(spec.trigger_max - spec.trigger_min + 1)));
    const int duration = 2 + static_cast<int>(rng.below(3));
    std::string speed = kSpeeds[rng.below(3)];
    bool left_free = rng.uniform() < 0.5;
    const int signal_phase = static_cast<int>(rng.below(12));
    const int stop_line_at = 3 + static_cast<int>(rng.below(8));

    Episode ep;
    ep.id = scen + "-" + std::to_string(i);
    ep.scenario = scen;
    ep.subject = tab.name + "-" + std::to_string(table);
    for (int t = 0; t < spec.episode_length; ++t) {
      FeatureMap s;
      s["ego_speed"] = speed;
      switch (spec.archetype) {
        case Archetype::HighwayCutIn:
          s["right_vehicle_signaling"] = b(t >= trigger - 2 && t < trigger);
          s["front_gap_closing"] = b(t >= trigger && t < trigger + duration);
          s["left_lane_free"] = b(left_free);
          if (rng.uniform() < 0.1) left_free = !left_free;
          break;
        case Archetype::SignalizedIntersection: {
          // green 6, yellow 2, red 4
          const int phase = (signal_phase + t) % 12;
          s["signal_state"] = phase < 6 ? "green" : phase < 8 ? "yellow" : "red";
          s["pedestrian_present"] = b(t >= trigger && t < trigger + duration);
          s["near_stop_line"] = b(t >= stop_line_at && t < stop_line_at + 3);
          break;
        }
        case Archetype::LaneChangeInterference:
          s["adjacent_vehicle_signaling"] = b(t >= trigger - 2 && t < trigger);
          s["adjacent_vehicle_merging"] = b(t >= trigger && t < trigger + duration);
          s["left_lane_free"] = b(left_free);
          if (rng.uniform() < 0.1) left_free = !left_free;
          break;
      }
      const auto& e = tab.lookup(s);
      EpisodeStep step;
      step.state = {s, t};
      step.longitudinal = noisy(e.longitudinal, kb.longitudinal_actions, spec.noise, rng);
      step.lateral = noisy(e.lateral, kb.lateral_actions, spec.noise, rng);
      speed = next_speed(speed, *step.longitudinal);
      ep.steps.push_back(std::move(step));
    }
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace cogform::sim
