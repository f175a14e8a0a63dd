#include "cogform/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cogform/ltl.hpp"

namespace cogform::metrics {

double ltl_match_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& references) {
  if (predictions.size() != references.size()) throw std::invalid_argument("match accuracy: length mismatch");
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = ltl::try_parse(predictions[i]);
    const auto r = ltl::try_parse(references[i]);
    if (p && r && ltl::canonicalize(*p) == ltl::canonicalize(*r)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

namespace {

using Tokens = std::vector<std::string>;

struct NgramStats {
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double pred_len = 0;
  double ref_len = 0;
};

void accumulate(const Tokens& pred, const Tokens& ref, NgramStats& s) {
  s.pred_len += static_cast<double>(pred.size());
  s.ref_len += static_cast<double>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Tokens, int> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[Tokens(ref.begin() + i, ref.begin() + i + n)];
    std::map<Tokens, int> pred_counts;
    for (std::size_t i = 0; i + n <= pred.size(); ++i) ++pred_counts[Tokens(pred.begin() + i, pred.begin() + i + n)];
    for (const auto& [g, c] : pred_counts) {
      const auto it = ref_counts.find(g);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
}

double score(const NgramStats& s) {
  if (s.pred_len == 0 || s.matches[0] == 0) return 0.0;
  double log_sum = std::log(s.matches[0] / s.totals[0]);
  for (int n = 1; n < 4; ++n) log_sum += std::log((s.matches[n] + 1) / (s.totals[n] + 1));
  const double bp = s.pred_len > s.ref_len ? 1.0 : std::exp(1.0 - s.ref_len / s.pred_len);
  return bp * std::exp(log_sum / 4.0);
}

}  // namespace

double ltl_bleu(const std::vector<std::string>& prediction, const std::vector<std::string>& reference) {
  NgramStats s;
  accumulate(prediction, reference, s);
  return score(s);
}

std::vector<std::string> bleu_tokens(const std::string& text) {
  try {
    return ltl::token_strings(text);
  } catch (const std::exception&) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  }
}

double ltl_bleu(const std::string& prediction, const std::string& reference) {
  return ltl_bleu(bleu_tokens(prediction), bleu_tokens(reference));
}

double corpus_bleu(const std::vector<std::vector<std::string>>& predictions,
                   const std::vector<std::vector<std::string>>& references) {
  if (predictions.size() != references.size()) throw std::invalid_argument("corpus BLEU: length mismatch");
  NgramStats s;
  for (std::size_t i = 0; i < predictions.size(); ++i) accumulate(predictions[i], references[i], s);
  return score(s);
}

namespace {

double kl_to_mixture(double p, double m) { return p > 0 ? p * std::log2(p / m) : 0.0; }

}  // namespace

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("js_divergence: support mismatch");
  double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    d += 0.5 * kl_to_mixture(p[i], m) + 0.5 * kl_to_mixture(q[i], m);
  }
  return std::max(0.0, d);
}

double js_divergence(const Distribution& p, const Distribution& q) {
  std::vector<double> a, b;
  for (const auto& [k, v] : p) {
    a.push_back(v);
    const auto it = q.find(k);
    b.push_back(it == q.end() ? 0.0 : it->second);
  }
  for (const auto& [k, v] : q) {
    if (p.count(k)) continue;
    a.push_back(0.0);
    b.push_back(v);
  }
  return js_divergence(a, b);
}

std::string state_key(const FeatureMap& state) {
  std::string out;
  for (const auto& [k, v] : state) {
    if (!out.empty()) out += ",";
    out += k + "=" + v;
  }
  return out;
}

std::string action_key(const std::optional<std::string>& longitudinal, const std::optional<std::string>& lateral) {
  return longitudinal.value_or("none") + "|" + lateral.value_or("none");
}

double TopStates::mean_js() const {
  if (states.empty()) return 0.0;
  double s = 0;
  for (const auto& st : states) s += st.js;
  return s / static_cast<double>(states.size());
}

nlohmann::json TopStates::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : states) {
    arr.push_back({{"state", s.state},
                   {"samples", s.samples},
                   {"runs", s.runs},
                   {"reference", s.reference},
                   {"model", s.model},
                   {"js", s.js}});
  }
  return {{"states", arr}, {"truncated", truncated}, {"mean_js", mean_js()}};
}

TopStates decision_distributions(const std::vector<ProductionRule>& rules, const std::vector<Episode>& episodes,
                                 const EngineConfig& engine, std::uint64_t seed, std::size_t top_k,
                                 std::optional<std::size_t> runs) {
  struct Group {
    FeatureMap state;
    std::map<std::string, std::size_t> actions;
    std::size_t n = 0;
  };
  std::map<std::string, Group> groups;
  for (const auto& e : episodes) {
    for (const auto& s : e.steps) {
      auto& g = groups[state_key(s.state.features)];
      if (g.n == 0) g.state = s.state.features;
      ++g.actions[action_key(s.longitudinal, s.lateral)];
      ++g.n;
    }
  }
  std::vector<std::pair<std::string, const Group*>> order;
  for (const auto& [k, g] : groups) order.emplace_back(k, &g);
  // map iteration is key-ordered, so a stable sort by count breaks ties by key
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second->n > b.second->n; });

  if (runs && *runs == 0) throw std::invalid_argument("decision distributions: runs must be positive");
  TopStates out;
  out.truncated = order.size() < top_k;
  if (out.truncated) log_warning("decision distributions: only " + std::to_string(order.size()) + " distinct states");
  Rng rng(seed);
  for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
    const auto& [key, g] = order[i];
    StateDistributions sd;
    sd.state = key;
    sd.samples = g->n;
    sd.runs = runs.value_or(g->n);
    for (const auto& [a, c] : g->actions) sd.reference[a] = static_cast<double>(c) / static_cast<double>(g->n);
    std::map<std::string, std::size_t> counts;
    const WorldState ws{g->state, 0};
    for (std::size_t r = 0; r < sd.runs; ++r) {
      const auto d = decide(ws, rules, engine, rng).first;
      ++counts[action_key(d.longitudinal, d.lateral)];
    }
    for (const auto& [a, c] : counts) sd.model[a] = static_cast<double>(c) / static_cast<double>(sd.runs);
    sd.js = js_divergence(sd.reference, sd.model);
    out.states.push_back(std::move(sd));
  }
  return out;
}

double rsr(const std::vector<ReasoningTrace>& traces) {
  if (traces.empty()) return 0.0;
  const auto n = std::count_if(traces.begin(), traces.end(), [](const ReasoningTrace& t) { return t.matched; });
  return static_cast<double>(n) / static_cast<double>(traces.size());
}

}  // namespace cogform::metrics
