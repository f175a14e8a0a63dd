#include "cogform/crl_trainer.hpp"

#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace cogform {

// ---------------------------------------------------------------------------
// Episode IO

std::vector<Episode> read_episodes(std::istream& in) {
  std::vector<Episode> out;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("episode").is_string() ? j["episode"].get<std::string>() : j["episode"].dump();
      auto [it, fresh] = index.emplace(id, out.size());
      if (fresh) {
        Episode e;
        e.id = id;
        e.scenario = j.value("scenario", std::string());
        e.subject = j.value("subject", std::string());
        out.push_back(std::move(e));
      }
      EpisodeStep step;
      step.state.t = j.at("t").get<std::int64_t>();
      for (const auto& [k, v] : j.at("state").items()) step.state.features[k] = value_text(v);
      const auto& ref = j.at("reference");
      if (ref.contains("longitudinal") && !ref["longitudinal"].is_null()) step.longitudinal = ref["longitudinal"].get<std::string>();
      if (ref.contains("lateral") && !ref["lateral"].is_null()) step.lateral = ref["lateral"].get<std::string>();
      auto& steps = out[it->second].steps;
      if (!steps.empty() && steps.back().state.t >= step.state.t) {
        throw EpisodeSchemaError("episode " + id + ": steps out of order");
      }
      steps.push_back(std::move(step));
    } catch (const nlohmann::json::exception& e) {
      throw EpisodeSchemaError("episode record " + std::to_string(lineno) + ": " + e.what());
    } catch (const EpisodeSchemaError& e) {
      throw EpisodeSchemaError("episode record " + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw EpisodeSchemaError("episode record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read episodes " + path);
  return read_episodes(in);
}

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes) {
  for (const auto& e : episodes) {
    for (const auto& s : e.steps) {
      nlohmann::json state = nlohmann::json::object();
      for (const auto& [k, v] : s.state.features) state[k] = v;
      nlohmann::json j = {{"episode", e.id},
                          {"scenario", e.scenario},
                          {"subject", e.subject},
                          {"t", s.state.t},
                          {"state", state},
                          {"reference",
                           {{"longitudinal", s.longitudinal ? nlohmann::json(*s.longitudinal) : nlohmann::json(nullptr)},
                            {"lateral", s.lateral ? nlohmann::json(*s.lateral) : nlohmann::json(nullptr)}}}};
      out << j.dump() << "\n";
    }
  }
}

void save_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write episodes " + path);
  write_episodes(out, episodes);
}

void validate_episodes(const std::vector<Episode>& episodes, const KnowledgeBase& kb) {
  for (const auto& e : episodes) {
    if (e.steps.empty()) throw EpisodeSchemaError("episode " + e.id + " is empty");
    for (const auto& s : e.steps) {
      try {
        kb.validate_state(s.state.features);
      } catch (const SchemaError& err) {
        throw EpisodeSchemaError("episode " + e.id + " t=" + std::to_string(s.state.t) + ": " + err.what());
      }
      for (const Slot slot : {Slot::Longitudinal, Slot::Lateral}) {
        const auto& a = s.reference(slot);
        if (a && !kb.is_action(slot, *a)) {
          throw EpisodeSchemaError("episode " + e.id + ": unknown " + std::string(slot_name(slot)) + " action " + *a);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) throw SchemaError("train: alpha must be in [0, 1]");
  if (!(beta >= 0)) throw SchemaError("train: beta must be >= 0");
  if (!(sigma > 0)) throw SchemaError("train: sigma must be > 0");
  if (epochs < 0) throw SchemaError("train: epochs must be >= 0");
  for (double x : {initial_utility, reward_positive, reward_negative}) {
    if (!std::isfinite(x)) throw SchemaError("train: utilities and rewards must be finite");
  }
  engine().validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"alpha", alpha},
          {"beta", beta},
          {"sigma", sigma},
          {"initial_utility", initial_utility},
          {"reward_positive", reward_positive},
          {"reward_negative", reward_negative},
          {"epochs", epochs},
          {"seed", seed},
          {"chain_mode", chain_mode},
          {"max_chain", max_chain}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.sigma = j.value("sigma", c.sigma);
    c.initial_utility = j.value("initial_utility", c.initial_utility);
    c.reward_positive = j.value("reward_positive", c.reward_positive);
    c.reward_negative = j.value("reward_negative", c.reward_negative);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.chain_mode = j.value("chain_mode", c.chain_mode);
    c.max_chain = j.value("max_chain", c.max_chain);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Learning rule

double decayed_reward(double reward, std::int64_t firing_step, std::int64_t reward_step, double beta) {
  return reward - beta * static_cast<double>(reward_step - firing_step);
}

std::vector<double> reward_decompose(double reward, const std::vector<Firing>& window, std::int64_t reward_step,
                                     double beta) {
  std::vector<double> out;
  out.reserve(window.size());
  for (const auto& f : window) {
    if (f.step > reward_step) throw std::invalid_argument("reward_decompose: firing after the reward");
    out.push_back(decayed_reward(reward, f.step, reward_step, beta));
  }
  return out;
}

double utility_update(double u, double r, double alpha) { return u + alpha * (r - u); }

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,agreement,mean_utility,js\n";
  for (const auto& p : curve) {
    out << p.epoch << "," << p.agreement << "," << p.mean_utility << ",";
    if (p.js) out << *p.js;
    out << "\n";
  }
  return out.str();
}

namespace {

double mean_utility(const std::vector<ProductionRule>& rules) {
  if (rules.empty()) return 0.0;
  double s = 0;
  for (const auto& r : rules) s += r.utility;
  return s / static_cast<double>(rules.size());
}

}  // namespace

TrainResult train(std::vector<ProductionRule> rules, const std::vector<Episode>& episodes, const TrainConfig& cfg,
                  const EpochHook& hook) {
  cfg.validate();
  TrainResult result;
  for (auto& r : rules) r.utility = cfg.initial_utility;
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < rules.size(); ++i) by_name[rules[i].name] = i;
  const EngineConfig engine = cfg.engine();

  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng engine_rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(episodes.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    std::size_t agree = 0, pairs = 0;
    for (const std::size_t ei : order) {
      std::vector<Firing> window[2];
      for (const auto& step : episodes[ei].steps) {
        const auto [decision, trace] = decide(step.state, rules, engine, engine_rng);
        ++result.steps;
        for (const auto& s : trace.steps) {
          const Firing f{s.chosen_rule(), s.t};
          const bool to_long = s.kind != StepKind::Lateral;
          const bool to_lat = s.kind != StepKind::Longitudinal || s.lateral.has_value();
          if (to_long) window[0].push_back(f);
          if (to_lat) window[1].push_back(f);
        }
        for (const Slot slot : {Slot::Longitudinal, Slot::Lateral}) {
          const auto& ref = step.reference(slot);
          if (!ref) continue;
          const bool ok = decision.slot(slot) == ref;
          ++pairs;
          agree += ok;
          auto& w = window[slot == Slot::Longitudinal ? 0 : 1];
          const double reward = ok ? cfg.reward_positive : cfg.reward_negative;
          const auto rs = reward_decompose(reward, w, step.state.t, cfg.beta);
          for (std::size_t i = 0; i < w.size(); ++i) {
            auto& u = rules[by_name.at(w[i].rule)].utility;
            u = utility_update(u, rs[i], cfg.alpha);
            ++result.updates;
          }
          w.clear();
        }
      }
    }
    CurvePoint p;
    p.epoch = epoch;
    p.agreement = pairs ? static_cast<double>(agree) / static_cast<double>(pairs) : 0.0;
    p.mean_utility = mean_utility(rules);
    if (hook) p.js = hook(epoch, rules);
    result.curve.push_back(p);
  }
  result.rules = std::move(rules);
  return result;
}

nlohmann::json Agreement::to_json() const {
  return {{"longitudinal", longitudinal}, {"lateral", lateral}, {"overall", overall}, {"rsr", rsr}, {"pairs", pairs}};
}

Agreement evaluate_agreement(const std::vector<ProductionRule>& rules, const std::vector<Episode>& episodes,
                             const EngineConfig& engine, std::uint64_t seed, int n_runs) {
  engine.validate();
  if (n_runs < 1) throw std::invalid_argument("evaluate_agreement: n_runs must be >= 1");
  std::size_t agree[2] = {0, 0}, pairs[2] = {0, 0}, cycles = 0, matched = 0;
  for (int run = 0; run < n_runs; ++run) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(run)));
    for (const auto& e : episodes) {
      for (const auto& step : e.steps) {
        const auto [decision, trace] = decide(step.state, rules, engine, rng);
        ++cycles;
        matched += trace.matched;
        for (const Slot slot : {Slot::Longitudinal, Slot::Lateral}) {
          const auto& ref = step.reference(slot);
          if (!ref) continue;
          const int k = slot == Slot::Longitudinal ? 0 : 1;
          ++pairs[k];
          agree[k] += decision.slot(slot) == ref;
        }
      }
    }
  }
  auto frac = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  Agreement a;
  a.longitudinal = frac(agree[0], pairs[0]);
  a.lateral = frac(agree[1], pairs[1]);
  a.overall = frac(agree[0] + agree[1], pairs[0] + pairs[1]);
  a.rsr = frac(matched, cycles);
  a.pairs = (pairs[0] + pairs[1]) / static_cast<std::size_t>(n_runs);
  return a;
}

}  // namespace cogform
