#include "cogform/critic_tree.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cogform/ltl.hpp"

namespace cogform::critic {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::toupper(static_cast<unsigned char>(s[i])) != std::toupper(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PromptTemplates PromptTemplates::minimal() {
  PromptTemplates p;
  p.revisor_system =
      "You translate natural-language descriptions of decisions into Linear Temporal Logic.\n"
      "Use only the operators G, F, X, U, !, &, |, ->, the constants true and false, parentheses, "
      "and atomic propositions.\nReply with a single formula and nothing else.";
  p.revisor_initial =
      "Text: {text}\nCandidate translation: {initial}\nAvailable atomic propositions: {vocabulary}\n"
      "Return the corrected formula.";
  p.revisor_feedback = "A reviewer rejected the formula: {feedback}\nReturn the corrected formula.";
  p.critic_system =
      "You review Linear Temporal Logic translations of natural-language text.\n"
      "Check logical correctness and the preferred format G(<propositions> -> <propositions>) "
      "over the atomic propositions: {vocabulary}.\n"
      "Reply APPROVED if the formula is correct. Otherwise reply REVISE: followed by one sentence of feedback.";
  p.critic_user = "Text: {text}\nFormula: {formula}{parse_note}";
  return p;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
  PromptTemplates p = minimal();
  auto read = [&](const char* file, std::string& field) {
    std::ifstream in(std::filesystem::path(dir) / file);
    if (!in) return;
    std::stringstream ss;
    ss << in.rdbuf();
    field = ss.str();
    while (!field.empty() && (field.back() == '\n' || field.back() == '\r')) field.pop_back();
  };
  read("revisor_system.txt", p.revisor_system);
  read("revisor_initial.txt", p.revisor_initial);
  read("revisor_feedback.txt", p.revisor_feedback);
  read("critic_system.txt", p.critic_system);
  read("critic_user.txt", p.critic_user);
  return p;
}

std::string render(const std::string& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string::npos) {
        const auto it = values.find(tmpl.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

void CriticTreeConfig::validate() const {
  if (num_critics < 1) throw SchemaError("critic tree: num_critics must be >= 1");
  if (max_depth < 0) throw SchemaError("critic tree: max_depth must be >= 0");
  revisor.validate();
  critics.validate();
}

CriticTreeConfig config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  CriticTreeConfig cfg;
  try {
    cfg.num_critics = j.value("num_critics", 2);
    cfg.max_depth = j.value("max_depth", 2);
    cfg.fallback_to_best = j.value("fallback_to_best", false);
    cfg.record_timings = j.value("record_timings", false);
    cfg.revisor = llm::backend_from_json(j.at("revisor"), base_dir);
    for (const auto& m : j.at("critics")) {
      cfg.critics.members.push_back({llm::backend_from_json(m.at("backend"), base_dir), m.value("probability", 0.0)});
    }
    cfg.critics.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("prompts")) {
      std::filesystem::path dir = j["prompts"].get<std::string>();
      if (dir.is_relative() && !base_dir.empty()) dir = std::filesystem::path(base_dir) / dir;
      cfg.prompts = PromptTemplates::load(dir.string());
    }
    if (j.contains("vocabulary")) cfg.vocabulary = j["vocabulary"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("critic tree config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

CriticVerdict parse_verdict(std::string_view reply) {
  const std::string text = trim(reply);
  if (starts_with_ci(text, "APPROVED")) {
    const std::string rest = trim(std::string_view(text).substr(8));
    if (rest.empty() || rest.front() == '.' || rest.front() == '!') return {true, {}, {}};
  }
  if (starts_with_ci(text, "REVISE:")) {
    std::string feedback = trim(std::string_view(text).substr(7));
    if (!feedback.empty()) return {false, std::move(feedback), {}};
  }
  log_warning("critic reply is neither APPROVED nor REVISE: treating as rejection: " + text.substr(0, 120));
  return {false, text.empty() ? std::string("(empty critic reply)") : text, {}};
}

std::string extract_formula(std::string_view reply) {
  std::string text = trim(reply);
  // Strip a fenced block if present.
  if (const auto open = text.find("```"); open != std::string::npos) {
    auto body_start = text.find('\n', open);
    const auto close = text.find("```", open + 3);
    if (body_start != std::string::npos && close != std::string::npos && body_start < close) {
      text = trim(std::string_view(text).substr(body_start + 1, close - body_start - 1));
    }
  }
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    line = trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) return {};
  std::string pick = lines.back();
  for (const auto& line : lines) {
    for (const char* label : {"LTL:", "Formula:", "Answer:"}) {
      if (starts_with_ci(line, label)) pick = line;
    }
  }
  for (const char* label : {"LTL:", "Formula:", "Answer:"}) {
    if (starts_with_ci(pick, label)) pick = trim(std::string_view(pick).substr(std::string_view(label).size()));
  }
  if (pick.size() >= 2 && pick.front() == '`' && pick.back() == '`') pick = trim(pick.substr(1, pick.size() - 2));
  return pick;
}

// ---------------------------------------------------------------------------

std::size_t CriticTreeResult::distinct_revisions() const {
  std::set<std::string> seen;
  for (const auto& n : nodes) seen.insert(n.formula);
  return seen.size();
}

nlohmann::json CriticTreeResult::to_json() const {
  nlohmann::json j;
  j["formula"] = formula;
  j["returned_node"] = returned_node;
  j["outcome"] = outcome;
  j["revisor_calls"] = revisor_calls;
  j["critic_calls"] = critic_calls;
  auto ns = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& c : n.verdicts) v.push_back({{"critic", c.critic}, {"approved", c.approved}, {"feedback", c.feedback}});
    ns.push_back({{"id", n.id},
                  {"depth", n.depth},
                  {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
                  {"children", n.children},
                  {"formula", n.formula},
                  {"parseable", n.parseable},
                  {"verdicts", std::move(v)},
                  {"context", llm::to_json(n.context)}});
  }
  j["nodes"] = std::move(ns);
  auto es = nlohmann::json::array();
  for (const auto& e : events) {
    nlohmann::json ev = {{"event", e.kind == TraceEvent::Kind::Revise ? "revise" : "critic"},
                         {"node", e.node},
                         {"backend", e.backend}};
    if (e.kind == TraceEvent::Kind::Revise) {
      ev["formula"] = e.detail;
      ev["parseable"] = e.parseable;
    } else {
      ev["approved"] = e.approved;
      ev["feedback"] = e.detail;
    }
    if (e.elapsed_ms >= 0) ev["elapsed_ms"] = e.elapsed_ms;
    es.push_back(std::move(ev));
  }
  j["events"] = std::move(es);
  return j;
}

// ---------------------------------------------------------------------------

CriticTree::CriticTree(CriticTreeConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  revisor_ = llm::make_backend(cfg_.revisor);
  for (const auto& m : cfg_.critics.members) critics_.push_back(llm::make_backend(m.backend));
}

CriticTree::CriticTree(CriticTreeConfig cfg, std::unique_ptr<llm::ChatBackend> revisor,
                       std::vector<std::unique_ptr<llm::ChatBackend>> critics)
    : cfg_(std::move(cfg)), revisor_(std::move(revisor)), critics_(std::move(critics)) {
  if (cfg_.num_critics < 1 || cfg_.max_depth < 0) throw SchemaError("critic tree: invalid num_critics/max_depth");
  if (critics_.size() != cfg_.critics.members.size() || critics_.empty()) {
    throw SchemaError("critic tree: one backend per ensemble member required");
  }
}

TreeNode CriticTree::revise(const llm::Conversation& context, int id, int depth, std::optional<int> parent,
                            CriticTreeResult& trace) {
  const auto t0 = std::chrono::steady_clock::now();
  const llm::ChatMessage reply = llm::complete(*revisor_, context);
  ++trace.revisor_calls;
  TreeNode node;
  node.id = id;
  node.depth = depth;
  node.parent = parent;
  node.formula = extract_formula(reply.content);
  node.parseable = ltl::try_parse(node.formula).has_value();
  node.context = context;
  node.context.push_back({llm::Role::Assistant, reply.content.empty() ? std::string("(empty)") : reply.content});
  if (!node.parseable) log_warning("revisor produced an unparseable formula: " + node.formula);
  trace.events.push_back({TraceEvent::Kind::Revise, id, revisor_->name(), node.formula, false, node.parseable,
                          cfg_.record_timings ? ms_since(t0) : -1});
  return node;
}

CriticVerdict CriticTree::ask_critic(const TreeNode& node, const std::string& text, Rng& rng, CriticTreeResult* trace) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t member = llm::sample_critic_index(cfg_.critics, rng);
  auto& backend = *critics_[member];
  std::string parse_note;
  if (!node.parseable) parse_note = "\n(The formula above does not parse as LTL.)";
  const std::map<std::string, std::string> values = {{"text", text},
                                                     {"formula", node.formula.empty() ? "(empty)" : node.formula},
                                                     {"parse_note", parse_note},
                                                     {"vocabulary", join(cfg_.vocabulary, ", ")}};
  const llm::Conversation messages = {{llm::Role::System, render(cfg_.prompts.critic_system, values)},
                                      {llm::Role::User, render(cfg_.prompts.critic_user, values)}};
  CriticVerdict v = parse_verdict(llm::complete(backend, messages).content);
  v.critic = backend.name();
  if (trace) {
    ++trace->critic_calls;
    trace->events.push_back({TraceEvent::Kind::Critic, node.id, v.critic, v.feedback, v.approved, true,
                             cfg_.record_timings ? ms_since(t0) : -1});
  }
  return v;
}

std::vector<CriticVerdict> CriticTree::judge(const TreeNode& node, const std::string& text, Rng& rng) {
  std::vector<CriticVerdict> out;
  for (int k = 0; k < cfg_.num_critics; ++k) out.push_back(ask_critic(node, text, rng, nullptr));
  return out;
}

CriticTreeResult CriticTree::run(const std::string& text, const std::string& initial,
                                 std::optional<std::uint64_t> seed) {
  if (text.empty()) throw std::invalid_argument("critic tree: empty input text");
  Rng rng(seed.value_or(cfg_.critics.seed));
  CriticTreeResult result;

  const std::map<std::string, std::string> values = {
      {"text", text}, {"initial", initial.empty() ? "(none)" : initial}, {"vocabulary", join(cfg_.vocabulary, ", ")}};
  llm::Conversation root_context = {{llm::Role::System, render(cfg_.prompts.revisor_system, values)},
                                    {llm::Role::User, render(cfg_.prompts.revisor_initial, values)}};
  result.nodes.push_back(revise(root_context, 0, 0, std::nullopt, result));

  std::vector<int> level = {0};
  for (int d = 0; d <= cfg_.max_depth; ++d) {
    std::vector<int> next_level;
    for (const int id : level) {
      if (!result.nodes[id].children.empty()) continue;
      bool all_approved = true;
      for (int k = 0; k < cfg_.num_critics; ++k) {
        CriticVerdict v = ask_critic(result.nodes[id], text, rng, &result);
        result.nodes[id].verdicts.push_back(v);
        all_approved = all_approved && v.approved;
        if (k + 1 == cfg_.num_critics && all_approved) {
          result.formula = result.nodes[id].formula;
          result.returned_node = id;
          result.outcome = "approved";
          return result;
        }
        if (v.approved) continue;
        llm::Conversation context = result.nodes[id].context;
        context.push_back({llm::Role::User, render(cfg_.prompts.revisor_feedback, {{"feedback", v.feedback}})});
        const int child_id = static_cast<int>(result.nodes.size());
        TreeNode child = revise(context, child_id, result.nodes[id].depth + 1, id, result);
        result.nodes[id].children.push_back(child_id);
        result.nodes.push_back(std::move(child));
        next_level.push_back(child_id);
      }
    }
    level = std::move(next_level);
  }

  result.returned_node = 0;
  result.outcome = "fallback_root";
  if (cfg_.fallback_to_best) {
    double best = -1;
    for (const auto& n : result.nodes) {
      if (!n.parseable || n.verdicts.empty()) continue;
      const double score =
          static_cast<double>(std::count_if(n.verdicts.begin(), n.verdicts.end(), [](auto& v) { return v.approved; })) /
          static_cast<double>(n.verdicts.size());
      if (score > best) {
        best = score;
        result.returned_node = n.id;
      }
    }
    result.outcome = "fallback_best";
  }
  result.formula = result.nodes[result.returned_node].formula;
  return result;
}

}  // namespace cogform::critic
