#include "cogform/cogform.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cogform/ltl.hpp"
#include "cogform/pipeline.hpp"

using namespace cogform;

struct cogform_formula {
  ltl::Formula f;
};
struct cogform_kb {
  KnowledgeBase kb;
};
struct cogform_rule_store {
  std::vector<ProductionRule> rules;
};

namespace {

thread_local std::string g_last_error;

cogform_status fail(cogform_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Maps library exceptions to status codes.
template <class F>
cogform_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const ltl::ParseError& e) {
    return fail(COGFORM_E_PARSE, e.what());
  } catch (const LoadError& e) {
    return fail(COGFORM_E_PARSE, e.what());
  } catch (const SchemaError& e) {
    return fail(COGFORM_E_SCHEMA, e.what());
  } catch (const IoError& e) {
    return fail(COGFORM_E_IO, e.what());
  } catch (const llm::GatewayError& e) {
    return fail(COGFORM_E_BACKEND, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(COGFORM_E_SCHEMA, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(COGFORM_E_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(COGFORM_E_INTERNAL, e.what());
  } catch (...) {
    return fail(COGFORM_E_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size() + 1);
  return p;
}

nlohmann::json parse_json(const char* text, const char* what) {
  if (!text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
}

std::vector<Episode> parse_episodes(const char* jsonl) {
  std::istringstream in(jsonl);
  return read_episodes(in);
}

#define REQUIRE(cond, msg) \
  if (!(cond)) return fail(COGFORM_E_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* cogform_version(void) { return COGFORM_VERSION; }

const char* cogform_last_error(void) { return g_last_error.c_str(); }

void cogform_string_free(char* s) { std::free(s); }

void cogform_set_warnings(int enabled) { set_warnings_enabled(enabled != 0); }

cogform_status cogform_formula_parse(const char* text, cogform_formula** out) {
  REQUIRE(text && out, "formula_parse: null argument");
  return guarded([&] {
    *out = new cogform_formula{ltl::parse(text)};
    return COGFORM_OK;
  });
}

void cogform_formula_free(cogform_formula* f) { delete f; }

cogform_status cogform_formula_to_string(const cogform_formula* f, char** out) {
  REQUIRE(f && out, "formula_to_string: null argument");
  return guarded([&] {
    *out = dup(ltl::to_string(f->f));
    return COGFORM_OK;
  });
}

cogform_status cogform_formula_to_json(const cogform_formula* f, char** out) {
  REQUIRE(f && out, "formula_to_json: null argument");
  return guarded([&] {
    *out = dup(nlohmann::json{{"formula", ltl::to_string(f->f)}, {"ast", ltl::to_json(f->f)}}.dump());
    return COGFORM_OK;
  });
}

cogform_status cogform_formula_canonicalize(const cogform_formula* f, cogform_formula** out) {
  REQUIRE(f && out, "formula_canonicalize: null argument");
  return guarded([&] {
    *out = new cogform_formula{ltl::canonicalize(f->f)};
    return COGFORM_OK;
  });
}

cogform_status cogform_formula_equal(const cogform_formula* a, const cogform_formula* b, int* out) {
  REQUIRE(a && b && out, "formula_equal: null argument");
  *out = a->f == b->f ? 1 : 0;
  return COGFORM_OK;
}

cogform_status cogform_formula_classify(const cogform_formula* f, char** out_json) {
  REQUIRE(f && out_json, "formula_classify: null argument");
  return guarded([&] {
    *out_json = dup(ltl::to_json(ltl::classify(f->f)).dump());
    return COGFORM_OK;
  });
}

cogform_status cogform_kb_load(const char* path, cogform_kb** out) {
  REQUIRE(path && out, "kb_load: null argument");
  return guarded([&] {
    *out = new cogform_kb{KnowledgeBase::load(path)};
    return COGFORM_OK;
  });
}

cogform_status cogform_kb_from_json(const char* json, cogform_kb** out) {
  REQUIRE(json && out, "kb_from_json: null argument");
  return guarded([&] {
    *out = new cogform_kb{KnowledgeBase::from_json(parse_json(json, "knowledge base"))};
    return COGFORM_OK;
  });
}

cogform_status cogform_kb_scenario(const char* archetype, cogform_kb** out) {
  REQUIRE(archetype && out, "kb_scenario: null argument");
  return guarded([&] {
    *out = new cogform_kb{sim::scenario_kb(sim::archetype_from_name(archetype))};
    return COGFORM_OK;
  });
}

cogform_status cogform_kb_to_json(const cogform_kb* kb, char** out) {
  REQUIRE(kb && out, "kb_to_json: null argument");
  return guarded([&] {
    *out = dup(kb->kb.to_json().dump(2));
    return COGFORM_OK;
  });
}

void cogform_kb_free(cogform_kb* kb) { delete kb; }

cogform_status cogform_rule_store_new(cogform_rule_store** out) {
  REQUIRE(out, "rule_store_new: null argument");
  return guarded([&] {
    *out = new cogform_rule_store{};
    return COGFORM_OK;
  });
}

cogform_status cogform_rule_store_load(const char* path, cogform_rule_store** out) {
  REQUIRE(path && out, "rule_store_load: null argument");
  return guarded([&] {
    *out = new cogform_rule_store{load_rules(path)};
    return COGFORM_OK;
  });
}

cogform_status cogform_rule_store_from_json(const char* json, cogform_rule_store** out) {
  REQUIRE(json && out, "rule_store_from_json: null argument");
  return guarded([&] {
    *out = new cogform_rule_store{rules_from_json(parse_json(json, "rule store"))};
    return COGFORM_OK;
  });
}

cogform_status cogform_rule_store_to_json(const cogform_rule_store* s, char** out) {
  REQUIRE(s && out, "rule_store_to_json: null argument");
  return guarded([&] {
    *out = dup(rules_to_json(s->rules).dump(2));
    return COGFORM_OK;
  });
}

cogform_status cogform_rule_store_save(const cogform_rule_store* s, const char* path) {
  REQUIRE(s && path, "rule_store_save: null argument");
  return guarded([&] {
    save_rules(s->rules, path);
    return COGFORM_OK;
  });
}

cogform_status cogform_rule_store_size(const cogform_rule_store* s, size_t* out) {
  REQUIRE(s && out, "rule_store_size: null argument");
  *out = s->rules.size();
  return COGFORM_OK;
}

void cogform_rule_store_free(cogform_rule_store* s) { delete s; }

cogform_status cogform_compile(const cogform_kb* kb, cogform_rule_store* store, const char* formula,
                               const char* options_json, char** out_json) {
  REQUIRE(kb && store && formula && out_json, "compile: null argument");
  return guarded([&] {
    const auto o = parse_json(options_json, "compile options");
    CompilerConfig cc;
    cc.duplicate_threshold = o.value("duplicate_threshold", cc.duplicate_threshold);
    cc.top_k = o.value("top_k", cc.top_k);
    cc.repair_rounds = o.value("repair_rounds", cc.repair_rounds);
    cc.initial_utility = o.value("initial_utility", cc.initial_utility);
    const bool supply = pipeline::mode_from_name(o.value("prompt_mode", std::string("literal"))) ==
                        pipeline::PromptMode::Supply;
    std::unique_ptr<llm::ChatBackend> writer;
    if (o.contains("writer")) writer = llm::make_backend(llm::backend_from_json(o["writer"], o.value("base_dir", std::string())));
    HashedTrigramEmbedding provider;
    RuleStore rs(store->rules);
    RuleCompiler compiler(kb->kb, provider, cc, writer.get(), supply ? WriterPrompts::supply() : WriterPrompts::literal());
    const auto outcome = compiler.compile(formula, rs, o.value("source_id", std::string()), o.value("text", std::string()));
    store->rules = rs.rules();
    *out_json = dup(outcome.to_json().dump());
    return COGFORM_OK;
  });
}

cogform_status cogform_translate(const char* config_path, const char* overrides_json, const char* request_json,
                                 char** out_json) {
  REQUIRE(config_path && request_json && out_json, "translate: null argument");
  return guarded([&] {
    std::ifstream in(config_path);
    if (!in) throw IoError(std::string("cannot read config ") + config_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("config ") + config_path + ": " + e.what());
    }
    const auto ov = parse_json(overrides_json, "overrides");
    if (ov.contains("backend")) {
      if (j.contains("translator")) j["translator"] = ov["backend"];
      if (j.contains("critic_tree")) {
        j["critic_tree"]["revisor"] = ov["backend"];
        for (auto& m : j["critic_tree"]["critics"]) m["backend"] = ov["backend"];
      }
    }
    if (ov.value("no_record", false)) {
      if (j.contains("translator")) j["translator"].erase("record");
      if (j.contains("critic_tree")) {
        j["critic_tree"]["revisor"].erase("record");
        for (auto& m : j["critic_tree"]["critics"]) m["backend"].erase("record");
      }
    }
    const std::string base = std::filesystem::path(config_path).parent_path().string();
    std::vector<std::string> vocabulary;
    if (j.contains("knowledge_base")) {
      const auto& kb = j["knowledge_base"];
      if (kb.is_string()) {
        std::filesystem::path p = kb.get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base) / p;
        vocabulary = KnowledgeBase::load(p.string()).vocabulary();
      } else {
        vocabulary = sim::scenario_kb(sim::archetype_from_name(kb.at("scenario").get<std::string>())).vocabulary();
      }
    }
    std::optional<llm::BackendSpec> translator;
    if (j.contains("translator")) translator = llm::backend_from_json(j["translator"], base);
    std::optional<critic::CriticTreeConfig> tree;
    if (j.contains("critic_tree")) {
      tree = critic::config_from_json(j["critic_tree"], base);
      if (tree->vocabulary.empty()) tree->vocabulary = vocabulary;
    }
    const auto req = parse_json(request_json, "translate request");
    pipeline::Segment seg{req.value("id", std::string("segment")), req.at("text").get<std::string>(), {}, {}};
    if (req.contains("initial")) seg.initial = req["initial"].get<std::string>();
    const auto t = pipeline::translate_segment(seg, translator, tree, vocabulary, req.value("seed", std::uint64_t{0}));
    *out_json = dup(nlohmann::json{{"initial", t.initial},
                                   {"refined", t.refined},
                                   {"tree", t.tree ? t.tree->to_json() : nlohmann::json(nullptr)}}
                        .dump());
    return COGFORM_OK;
  });
}

cogform_status cogform_generate_episodes(const char* request_json, char** out_jsonl) {
  REQUIRE(request_json && out_jsonl, "generate_episodes: null argument");
  return guarded([&] {
    const auto req = parse_json(request_json, "generate request");
    auto spec = sim::ScenarioSpec::from_json(req.at("scenario"));
    if (req.contains("seed")) spec.seed = req["seed"].get<std::uint64_t>();
    const auto& p = req.contains("policy") ? req["policy"] : nlohmann::json("cautious");
    sim::ReferencePolicy policy;
    if (p.is_string()) {
      const auto name = p.get<std::string>();
      if (name == "cautious") {
        policy = sim::ReferencePolicy::single(sim::default_table(spec.archetype));
      } else if (name == "assertive") {
        policy = sim::ReferencePolicy::single(sim::assertive_table(spec.archetype));
      } else {
        throw SchemaError("policy: unknown built-in table " + name);
      }
    } else {
      policy = sim::ReferencePolicy::from_json(p);
    }
    const int n = req.value("episodes", 50);
    std::ostringstream out;
    write_episodes(out, sim::generate(spec, policy, n));
    *out_jsonl = dup(out.str());
    return COGFORM_OK;
  });
}

cogform_status cogform_train(const cogform_kb* kb, const cogform_rule_store* rules, const char* episodes_jsonl,
                             const char* train_json, cogform_rule_store** out_trained, char** out_curve_csv) {
  REQUIRE(rules && episodes_jsonl && out_trained, "train: null argument");
  return guarded([&] {
    const auto eps = parse_episodes(episodes_jsonl);
    if (kb) validate_episodes(eps, kb->kb);
    const auto cfg = TrainConfig::from_json(parse_json(train_json, "train config"));
    auto result = train(rules->rules, eps, cfg);
    *out_trained = new cogform_rule_store{std::move(result.rules)};
    if (out_curve_csv) *out_curve_csv = dup(curve_to_csv(result.curve));
    return COGFORM_OK;
  });
}

cogform_status cogform_evaluate(const cogform_rule_store* rules, const char* episodes_jsonl, const char* options_json,
                                char** out_json) {
  REQUIRE(rules && episodes_jsonl && out_json, "evaluate: null argument");
  return guarded([&] {
    const auto eps = parse_episodes(episodes_jsonl);
    const auto o = parse_json(options_json, "evaluate options");
    EngineConfig engine;
    engine.sigma = o.value("sigma", engine.sigma);
    engine.validate();
    const auto seed = o.value("seed", std::uint64_t{0});
    const auto agreement = evaluate_agreement(rules->rules, eps, engine, seed, o.value("runs", 1));
    std::optional<std::size_t> js_runs;
    if (o.contains("js_runs")) js_runs = o["js_runs"].get<std::size_t>();
    const auto top = metrics::decision_distributions(rules->rules, eps, engine, mix_seed(seed, 1),
                                                     o.value("top_k", std::size_t{10}), js_runs);
    *out_json = dup(nlohmann::json{{"agreement", agreement.to_json()},
                                   {"distributions", top.to_json()},
                                   {"mean_js", top.mean_js()},
                                   {"rsr", agreement.rsr}}
                        .dump(2));
    return COGFORM_OK;
  });
}

cogform_status cogform_run_experiment(const char* config_path, const char* overrides_json, const char* out_dir,
                                      char** out_manifest_json) {
  REQUIRE(config_path && out_dir, "run_experiment: null argument");
  return guarded([&] {
    const auto o = parse_json(overrides_json, "overrides");
    pipeline::Overrides ov;
    if (o.contains("seed")) ov.seed = o["seed"].get<std::uint64_t>();
    if (o.contains("prompt_mode")) ov.mode = pipeline::mode_from_name(o["prompt_mode"].get<std::string>());
    if (o.contains("jobs")) ov.jobs = o["jobs"].get<int>();
    if (o.contains("backend")) ov.backend = o["backend"];
    const auto cfg = pipeline::load_config(config_path, ov);
    const auto rep = pipeline::run_experiment(cfg, out_dir);
    if (out_manifest_json) *out_manifest_json = dup(rep.manifest.dump(2));
    return COGFORM_OK;
  });
}

}  // extern "C"
