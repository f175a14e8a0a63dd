// cogform command-line front end. Links only the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cogform/cogform.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(cogform_status s, const char* what) {
  if (s != COGFORM_OK) throw DomainError(std::string(what) + ": " + cogform_last_error());
}

// Owns a string returned by the library.
struct CStr {
  char* p = nullptr;
  ~CStr() { cogform_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Formula = Handle<cogform_formula, cogform_formula_free>;
using Kb = Handle<cogform_kb, cogform_kb_free>;
using Store = Handle<cogform_rule_store, cogform_rule_store_free>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DomainError(path + ": " + e.what());
  }
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string backend;
  std::string out;
  std::optional<int> jobs;
};

class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {}
  bool enabled() const { return !dir_.empty(); }
  void write(const std::string& name, const std::string& content) const {
    fs::create_directories(dir_);
    std::ofstream out(fs::path(dir_) / name, std::ios::binary);
    if (!out) throw DomainError("cannot write " + (fs::path(dir_) / name).string());
    out << content;
  }

 private:
  std::string dir_;
};

std::string resolve(const std::string& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = fs::path(base) / path;
  return path.string();
}

// Loads a backend spec file, making its paths absolute.
json load_backend(const std::string& path) {
  json b = read_json(path);
  const auto base = fs::absolute(path).parent_path().string();
  for (const char* k : {"transcript", "record"}) {
    if (b.contains(k) && b[k].is_string()) b[k] = resolve(base, b[k].get<std::string>());
  }
  return b;
}

struct Config {
  json j = json::object();
  std::string base;
};

Config load_config(const Globals& g) {
  Config c;
  if (g.config.empty()) return c;
  c.j = read_json(g.config);
  c.base = fs::absolute(g.config).parent_path().string();
  return c;
}

void require_seed(const Globals& g, const char* sub) {
  if (!g.seed) throw UsageError(std::string(sub) + " requires --seed");
}

void load_kb(Kb& kb, const std::string& kb_path, const std::string& scenario, const Config& cfg) {
  if (!kb_path.empty()) {
    check(cogform_kb_load(kb_path.c_str(), &kb.p), "knowledge base");
  } else if (!scenario.empty()) {
    check(cogform_kb_scenario(scenario.c_str(), &kb.p), "knowledge base");
  } else if (cfg.j.contains("knowledge_base")) {
    const auto& k = cfg.j["knowledge_base"];
    if (k.is_string()) {
      check(cogform_kb_load(resolve(cfg.base, k.get<std::string>()).c_str(), &kb.p), "knowledge base");
    } else {
      check(cogform_kb_scenario(k.at("scenario").get<std::string>().c_str(), &kb.p), "knowledge base");
    }
  } else {
    throw UsageError("a knowledge base is required (--kb, --scenario or --config)");
  }
}

// ---------------------------------------------------------------------------

int cmd_parse(const std::string& text) {
  Formula f, canon;
  check(cogform_formula_parse(text.c_str(), &f.p), "parse");
  check(cogform_formula_canonicalize(f.p, &canon.p), "canonicalize");
  CStr printed, cj;
  check(cogform_formula_to_string(f.p, &printed.p), "print");
  check(cogform_formula_to_json(canon.p, &cj.p), "print");
  json out = json::parse(cj.str());
  out["input"] = text;
  out["printed"] = printed.str();
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_classify(const std::string& text) {
  Formula f;
  check(cogform_formula_parse(text.c_str(), &f.p), "parse");
  CStr v;
  check(cogform_formula_classify(f.p, &v.p), "classify");
  json out = json::parse(v.str());
  out["formula"] = text;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_translate(const Globals& g, const std::string& text, const std::optional<std::string>& initial) {
  require_seed(g, "translate");
  if (g.config.empty()) throw UsageError("translate requires --config");
  json ov = json::object();
  if (!g.backend.empty()) ov["backend"] = load_backend(g.backend);
  ov["no_record"] = true;
  json req = {{"text", text}, {"seed", *g.seed}};
  if (initial) req["initial"] = *initial;
  CStr out;
  const auto ovs = ov.dump();
  check(cogform_translate(g.config.c_str(), ovs.c_str(), req.dump().c_str(), &out.p), "translate");
  const auto result = json::parse(out.str());
  const Output o(g.out);
  if (o.enabled()) o.write("translation.json", result.dump(2) + "\n");
  std::cout << result.dump() << "\n";
  return 0;
}

int cmd_compile(const Globals& g, std::vector<std::string> formulas, const std::string& formulas_file,
                const std::string& kb_path, const std::string& scenario, const std::string& store_path,
                const std::string& mode_flag) {
  const Config cfg = load_config(g);
  if (!formulas_file.empty()) {
    std::istringstream in(read_file(formulas_file));
    for (std::string line; std::getline(in, line);) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) formulas.push_back(line);
    }
  }
  if (formulas.empty()) throw UsageError("compile needs at least one formula");
  Kb kb;
  load_kb(kb, kb_path, scenario, cfg);
  Store store;
  if (!store_path.empty()) {
    check(cogform_rule_store_load(store_path.c_str(), &store.p), "rule store");
  } else {
    check(cogform_rule_store_new(&store.p), "rule store");
  }

  const std::string mode = !mode_flag.empty() ? mode_flag : cfg.j.value("prompt_mode", std::string("literal"));
  json opts = cfg.j.value("compiler", json::object());
  opts["prompt_mode"] = mode;
  opts["base_dir"] = cfg.base;
  if (!g.backend.empty()) {
    opts["writer"] = load_backend(g.backend);
  } else if (cfg.j.contains("writer")) {
    const auto& w = cfg.j["writer"];
    if (w.contains("kind")) {
      opts["writer"] = w;
    } else if (w.contains(mode)) {
      opts["writer"] = w[mode];
    }
  }
  // Transcript recording is only redirected into --out by run-all.
  if (opts.contains("writer")) opts["writer"].erase("record");
  json outcomes = json::array();
  json counts = {{"Viable", 0}, {"FormatMismatch", 0}, {"DuplicatedContent", 0}, {"InferenceError", 0}};
  for (std::size_t i = 0; i < formulas.size(); ++i) {
    opts["source_id"] = "formula-" + std::to_string(i);
    CStr o;
    check(cogform_compile(kb.p, store.p, formulas[i].c_str(), opts.dump().c_str(), &o.p), "compile");
    auto oj = json::parse(o.str());
    counts[oj.at("outcome").get<std::string>()] = counts[oj.at("outcome").get<std::string>()].get<int>() + 1;
    outcomes.push_back(std::move(oj));
  }
  CStr rules;
  check(cogform_rule_store_to_json(store.p, &rules.p), "rule store");
  const Output out(g.out);
  if (out.enabled()) {
    out.write("rules.json", rules.str() + "\n");
    std::string csv = "outcome,count\n";
    for (const char* k : {"Viable", "FormatMismatch", "DuplicatedContent", "InferenceError"}) {
      csv += std::string(k) + "," + std::to_string(counts[k].get<int>()) + "\n";
    }
    out.write("outcomes.csv", csv);
  }
  std::cout << json{{"outcomes", outcomes}, {"counts", counts}}.dump() << "\n";
  return 0;
}

int cmd_gen_data(const Globals& g, const std::string& scenario, std::optional<int> episodes,
                 std::optional<double> noise, const std::string& policy) {
  require_seed(g, "gen-data");
  const Config cfg = load_config(g);
  json ds = cfg.j.value("dataset", json::object());
  json spec = ds.value("scenario", json::object());
  if (!scenario.empty()) {
    spec["archetype"] = scenario;
  } else if (!spec.contains("archetype")) {
    const auto& k = cfg.j.value("knowledge_base", json::object());
    if (!k.is_object() || !k.contains("scenario")) throw UsageError("gen-data needs --scenario");
    spec["archetype"] = k["scenario"];
  }
  if (noise) spec["noise"] = *noise;
  json req = {{"scenario", spec}, {"seed", *g.seed}, {"episodes", episodes.value_or(ds.value("episodes", 50))}};
  if (!policy.empty()) {
    req["policy"] = policy == "cautious" || policy == "assertive" ? json(policy) : read_json(policy);
  } else if (ds.contains("policy")) {
    req["policy"] = ds["policy"];
  }
  CStr out;
  check(cogform_generate_episodes(req.dump().c_str(), &out.p), "gen-data");
  const Output o(g.out);
  if (o.enabled()) {
    o.write("episodes.jsonl", out.str());
  } else {
    std::cout << out.str();
  }
  return 0;
}

int cmd_train(const Globals& g, const std::string& rules_path, const std::string& episodes_path,
              std::optional<int> epochs, const std::string& kb_path) {
  require_seed(g, "train");
  const Config cfg = load_config(g);
  json tc = cfg.j.value("train", json::object());
  tc["seed"] = *g.seed;
  if (epochs) tc["epochs"] = *epochs;
  Store rules, trained;
  check(cogform_rule_store_load(rules_path.c_str(), &rules.p), "rules");
  Kb kb;
  if (!kb_path.empty()) check(cogform_kb_load(kb_path.c_str(), &kb.p), "knowledge base");
  const auto eps = read_file(episodes_path);
  CStr curve, tj;
  check(cogform_train(kb.p, rules.p, eps.c_str(), tc.dump().c_str(), &trained.p, &curve.p), "train");
  check(cogform_rule_store_to_json(trained.p, &tj.p), "rules");
  const Output o(g.out);
  if (o.enabled()) {
    o.write("trained_rules.json", tj.str() + "\n");
    o.write("learning_curve.csv", curve.str());
  }
  std::cout << curve.str();
  return 0;
}

int cmd_eval(const Globals& g, const std::string& rules_path, const std::string& episodes_path,
             std::optional<int> runs, std::optional<std::size_t> top_k) {
  require_seed(g, "eval");
  const Config cfg = load_config(g);
  json opts = cfg.j.value("evaluation", json::object());
  const json tc = cfg.j.value("train", json::object());
  if (tc.contains("sigma")) opts["sigma"] = tc["sigma"];
  opts["seed"] = *g.seed;
  if (runs) opts["runs"] = *runs;
  if (top_k) opts["top_k"] = *top_k;
  Store rules;
  check(cogform_rule_store_load(rules_path.c_str(), &rules.p), "rules");
  const auto eps = read_file(episodes_path);
  CStr out;
  check(cogform_evaluate(rules.p, eps.c_str(), opts.dump().c_str(), &out.p), "eval");
  const Output o(g.out);
  if (o.enabled()) o.write("metrics.json", out.str() + "\n");
  std::cout << json::parse(out.str()).dump() << "\n";
  return 0;
}

int cmd_run_all(const Globals& g, const std::string& mode) {
  require_seed(g, "run-all");
  if (g.config.empty()) throw UsageError("run-all requires --config");
  if (g.out.empty()) throw UsageError("run-all requires --out");
  json ov = {{"seed", *g.seed}};
  if (!mode.empty()) ov["prompt_mode"] = mode;
  if (g.jobs) ov["jobs"] = *g.jobs;
  if (!g.backend.empty()) ov["backend"] = load_backend(g.backend);
  CStr manifest;
  check(cogform_run_experiment(g.config.c_str(), ov.dump().c_str(), g.out.c_str(), &manifest.p), "run-all");
  std::cout << json::parse(manifest.str()).dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Formalize driving experience into production rules and train them against reference behaviour."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cogform_version()));

  Globals g;
  std::uint64_t seed = 0;
  int jobs = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (required by stochastic subcommands)");
  app.add_option("--config", g.config, "Experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--backend", g.backend, "Backend spec JSON used for every LLM role")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory; nothing is written elsewhere");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Parallel segments during formalization")->check(CLI::PositiveNumber);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Silence warnings");

  std::string formula;
  auto* parse = app.add_subcommand("parse", "Parse a formula and print its canonical AST as JSON");
  parse->add_option("formula", formula)->required();
  auto* classify = app.add_subcommand("classify", "Print the convertibility verdict of a formula");
  classify->add_option("formula", formula)->required();

  std::string text;
  std::optional<std::string> initial;
  auto* translate = app.add_subcommand("translate", "Refine a text through the translator and critic tree");
  translate->add_option("--text", text)->required();
  translate->add_option("--initial", initial, "Initial formula; otherwise the translator backend is asked");

  std::vector<std::string> formulas;
  std::string formulas_file, kb_path, scenario, store_path, mode;
  auto* compile = app.add_subcommand("compile", "Compile formulas into production rules");
  compile->add_option("formulas", formulas);
  compile->add_option("--formulas-file", formulas_file)->check(CLI::ExistingFile);
  compile->add_option("--kb", kb_path)->check(CLI::ExistingFile);
  compile->add_option("--scenario", scenario);
  compile->add_option("--store", store_path, "Existing rule store to extend")->check(CLI::ExistingFile);
  compile->add_option("--mode", mode)->check(CLI::IsMember({"literal", "supply"}));

  std::optional<int> episodes;
  std::optional<double> noise;
  std::string policy;
  auto* gen = app.add_subcommand("gen-data", "Generate a reference episode dataset");
  gen->add_option("--scenario", scenario)
      ->check(CLI::IsMember({"highway_cut_in", "signalized_intersection", "lane_change_interference"}));
  gen->add_option("--episodes", episodes)->check(CLI::NonNegativeNumber);
  gen->add_option("--noise", noise)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--policy", policy, "cautious, assertive or a policy JSON file");

  std::string rules_path, episodes_path;
  std::optional<int> epochs;
  auto* trn = app.add_subcommand("train", "Train rule utilities on an episode dataset");
  trn->add_option("--rules", rules_path)->required()->check(CLI::ExistingFile);
  trn->add_option("--episodes", episodes_path)->required()->check(CLI::ExistingFile);
  trn->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);
  trn->add_option("--kb", kb_path)->check(CLI::ExistingFile);

  std::optional<int> runs;
  std::optional<std::size_t> top_k;
  auto* ev = app.add_subcommand("eval", "Agreement, JS divergence and RSR of a rule store");
  ev->add_option("--rules", rules_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--episodes", episodes_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--runs", runs)->check(CLI::PositiveNumber);
  ev->add_option("--top-k", top_k)->check(CLI::PositiveNumber);

  auto* run_all = app.add_subcommand("run-all", "Formalize, train and evaluate from one config");
  run_all->add_option("--mode", mode)->check(CLI::IsMember({"literal", "supply"}));

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }
  if (seed_opt->count()) g.seed = seed;
  if (jobs_opt->count()) g.jobs = jobs;
  if (quiet) cogform_set_warnings(0);

  try {
    if (*parse) return cmd_parse(formula);
    if (*classify) return cmd_classify(formula);
    if (*translate) return cmd_translate(g, text, initial);
    if (*compile) return cmd_compile(g, formulas, formulas_file, kb_path, scenario, store_path, mode);
    if (*gen) return cmd_gen_data(g, scenario, episodes, noise, policy);
    if (*trn) return cmd_train(g, rules_path, episodes_path, epochs, kb_path);
    if (*ev) return cmd_eval(g, rules_path, episodes_path, runs, top_k);
    if (*run_all) return cmd_run_all(g, mode);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kUsageError;
}
