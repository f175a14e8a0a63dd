#include "cogform/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "cogform/ltl.hpp"

namespace cogform::pipeline {

namespace fs = std::filesystem;

std::string_view mode_name(PromptMode m) { return m == PromptMode::Supply ? "supply" : "literal"; }

PromptMode mode_from_name(std::string_view s) {
  if (s == "literal") return PromptMode::Literal;
  if (s == "supply") return PromptMode::Supply;
  throw SchemaError("prompt_mode must be literal or supply, got " + std::string(s));
}

std::vector<Segment> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path);
  std::vector<Segment> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Segment s;
      s.text = j.at("text").get<std::string>();
      s.id = j.value("id", "seg-" + std::to_string(out.size()));
      if (j.contains("initial")) s.initial = j["initial"].get<std::string>();
      if (j.contains("reference")) s.reference = j["reference"].get<std::string>();
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = fs::path(base_dir) / path;
  return path.lexically_normal().string();
}

std::string hex64(std::uint64_t h) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

// Rewrites every LLM role in the raw config to `backend`.
void replace_backends(nlohmann::json& j, const nlohmann::json& backend) {
  if (j.contains("translator")) j["translator"] = backend;
  if (j.contains("critic_tree")) {
    auto& ct = j["critic_tree"];
    ct["revisor"] = backend;
    if (ct.contains("critics")) {
      for (auto& m : ct["critics"]) m["backend"] = backend;
    }
  }
  if (j.contains("writer")) j["writer"] = backend;
}

sim::ReferencePolicy policy_from_json(const nlohmann::json& j, sim::Archetype a) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "cautious") return sim::ReferencePolicy::single(sim::default_table(a));
    if (s == "assertive") return sim::ReferencePolicy::single(sim::assertive_table(a));
    throw SchemaError("dataset.policy: unknown built-in table " + s);
  }
  return sim::ReferencePolicy::from_json(j);
}

}  // namespace

PipelineConfig config_from_json(nlohmann::json j, const std::string& base_dir, const Overrides& ov) {
  if (!j.is_object()) throw SchemaError("config: top level must be an object");
  if (ov.seed) j["seed"] = *ov.seed;
  if (ov.mode) j["prompt_mode"] = std::string(mode_name(*ov.mode));
  if (ov.jobs) j["jobs"] = *ov.jobs;
  if (ov.backend) replace_backends(j, *ov.backend);

  PipelineConfig c;
  c.effective = j;
  // Parallelism never changes results, so it stays out of the hashed config.
  c.effective.erase("jobs");
  try {
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", std::uint64_t{0});
    c.mode = mode_from_name(j.value("prompt_mode", std::string("literal")));
    c.jobs = j.value("jobs", 1);
    if (c.jobs < 1) throw SchemaError("config: jobs must be at least 1");

    const auto& kb = j.at("knowledge_base");
    if (kb.is_string()) {
      c.kb = KnowledgeBase::load(resolve(base_dir, kb.get<std::string>()));
    } else {
      c.kb = sim::scenario_kb(sim::archetype_from_name(kb.at("scenario").get<std::string>()));
    }

    const auto& corpus = j.at("corpus");
    if (corpus.is_string()) {
      c.corpus = load_corpus(resolve(base_dir, corpus.get<std::string>()));
    } else {
      for (const auto& s : corpus) {
        Segment seg{s.value("id", "seg-" + std::to_string(c.corpus.size())), s.at("text").get<std::string>(), {}, {}};
        if (s.contains("initial")) seg.initial = s["initial"].get<std::string>();
        if (s.contains("reference")) seg.reference = s["reference"].get<std::string>();
        c.corpus.push_back(std::move(seg));
      }
    }

    if (j.contains("translator")) c.translator = llm::backend_from_json(j["translator"], base_dir);
    if (j.contains("critic_tree")) {
      c.critic_tree = critic::config_from_json(j["critic_tree"], base_dir);
      if (c.critic_tree->vocabulary.empty()) c.critic_tree->vocabulary = c.kb.vocabulary();
    }
    if (j.contains("writer")) {
      const auto& w = j["writer"];
      if (w.contains("kind")) {
        c.writer_literal = c.writer_supply = llm::backend_from_json(w, base_dir);
      } else {
        if (w.contains("literal")) c.writer_literal = llm::backend_from_json(w["literal"], base_dir);
        if (w.contains("supply")) c.writer_supply = llm::backend_from_json(w["supply"], base_dir);
      }
    }
    if (j.contains("compiler")) {
      const auto& cc = j["compiler"];
      c.compiler.duplicate_threshold = cc.value("duplicate_threshold", c.compiler.duplicate_threshold);
      c.compiler.top_k = cc.value("top_k", c.compiler.top_k);
      c.compiler.repair_rounds = cc.value("repair_rounds", c.compiler.repair_rounds);
    }
    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      if (e.value("kind", std::string("hashed")) == "hashed") {
        c.embedding_dim = e.value("dim", c.embedding_dim);
      } else {
        c.embedding = llm::backend_from_json(e, base_dir);
      }
    }

    const auto& ds = j.at("dataset");
    if (ds.contains("episodes_path")) {
      c.dataset.episodes_path = resolve(base_dir, ds["episodes_path"].get<std::string>());
      if (!fs::exists(c.dataset.episodes_path)) throw IoError("dataset.episodes_path does not exist: " + c.dataset.episodes_path);
    } else {
      nlohmann::json spec = ds.value("scenario", nlohmann::json::object());
      if (!spec.contains("archetype")) spec["archetype"] = c.kb.name;
      c.dataset.scenario = sim::ScenarioSpec::from_json(spec);
      c.dataset.policy = policy_from_json(ds.value("policy", nlohmann::json("cautious")), c.dataset.scenario.archetype);
      c.dataset.n_episodes = ds.value("episodes", 50);
      c.dataset.seed_given = spec.contains("seed");
    }

    c.train = TrainConfig::from_json(j.value("train", nlohmann::json::object()));
    if (j.contains("evaluation")) {
      const auto& e = j["evaluation"];
      c.eval.runs = e.value("runs", c.eval.runs);
      c.eval.top_k = e.value("top_k", c.eval.top_k);
      if (e.contains("js_runs")) c.eval.js_runs = e["js_runs"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  if (c.corpus.empty()) throw SchemaError("config: corpus is empty");
  if (c.eval.runs < 1) throw SchemaError("config: evaluation.runs must be at least 1");
  return c;
}

PipelineConfig load_config(const std::string& path, const Overrides& ov) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config " + path + ": " + e.what());
  }
  return config_from_json(std::move(j), fs::path(path).parent_path().string(), ov);
}

// ---------------------------------------------------------------------------
// Formalization

namespace {

const char* kTranslatorSystem =
    "You translate driving behaviour descriptions into linear temporal logic. Use only these atoms: {vocabulary}. "
    "Operators: G F X U ! & | ->. Reply with the formula only.";

void redirect(llm::BackendSpec& spec, const std::string& dir) {
  if (!dir.empty() && !spec.record_path.empty()) {
    spec.record_path = (fs::path(dir) / fs::path(spec.record_path).filename()).string();
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

struct Refined {
  Translation t;
  std::string error;
};

}  // namespace

Translation translate_segment(const Segment& seg, const std::optional<llm::BackendSpec>& translator,
                              const std::optional<critic::CriticTreeConfig>& tree,
                              const std::vector<std::string>& vocabulary, std::uint64_t seed) {
  Translation t;
  if (seg.initial) {
    t.initial = *seg.initial;
  } else if (translator) {
    auto backend = llm::make_backend(*translator);
    const auto sys = critic::render(kTranslatorSystem, {{"vocabulary", join(vocabulary)}});
    t.initial = critic::extract_formula(
        llm::complete(*backend, {{llm::Role::System, sys}, {llm::Role::User, seg.text}}).content);
  } else {
    throw SchemaError("segment " + seg.id + " has no initial formula and no translator is configured");
  }
  t.refined = t.initial;
  if (tree) {
    critic::CriticTree ct(*tree);
    t.tree = ct.run(seg.text, t.initial, seed);
    t.refined = t.tree->formula;
  }
  return t;
}

namespace {

Refined refine(const Segment& seg, std::size_t index, const PipelineConfig& cfg,
               const std::optional<llm::BackendSpec>& translator,
               const std::optional<critic::CriticTreeConfig>& tree_cfg) {
  Refined r;
  try {
    r.t = translate_segment(seg, translator, tree_cfg, cfg.kb.vocabulary(), mix_seed(mix_seed(cfg.seed, 10), index));
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

}  // namespace

FormalizeResult formalize_corpus(const std::vector<Segment>& texts, const PipelineConfig& cfg,
                                 const std::string& transcript_dir) {
  if (texts.empty()) throw std::invalid_argument("formalize_corpus: empty corpus");
  auto translator = cfg.translator;
  auto tree_cfg = cfg.critic_tree;
  auto writer_spec = cfg.writer();
  bool recording = false;
  if (translator) {
    redirect(*translator, transcript_dir);
    recording |= !translator->record_path.empty();
  }
  if (tree_cfg) {
    redirect(tree_cfg->revisor, transcript_dir);
    recording |= !tree_cfg->revisor.record_path.empty();
    for (auto& m : tree_cfg->critics.members) {
      redirect(m.backend, transcript_dir);
      recording |= !m.backend.record_path.empty();
    }
  }
  if (writer_spec) redirect(*writer_spec, transcript_dir);
  if (!transcript_dir.empty() && recording) fs::create_directories(transcript_dir);
  if (!transcript_dir.empty() && writer_spec && !writer_spec->record_path.empty()) fs::create_directories(transcript_dir);

  // Translation and refinement are independent per segment. Recording
  // appends to shared files, so it runs on one thread.
  std::vector<Refined> refined(texts.size());
  const std::size_t workers = recording ? 1 : std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), texts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < texts.size();) refined[i] = refine(texts[i], i, cfg, translator, tree_cfg);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::unique_ptr<EmbeddingProvider> provider;
  if (cfg.embedding) {
    provider = std::make_unique<HttpEmbedding>(*cfg.embedding);
  } else {
    provider = std::make_unique<HashedTrigramEmbedding>(cfg.embedding_dim);
  }
  std::unique_ptr<llm::ChatBackend> writer;
  if (writer_spec) writer = llm::make_backend(*writer_spec);
  CompilerConfig cc = cfg.compiler;
  cc.initial_utility = cfg.train.initial_utility;
  RuleCompiler compiler(cfg.kb, *provider, cc, writer.get(),
                        cfg.mode == PromptMode::Supply ? WriterPrompts::supply() : WriterPrompts::literal());

  FormalizeResult out;
  RuleStore store;
  std::vector<CompileOutcome> outcomes;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    SegmentResult s;
    s.id = texts[i].id;
    s.initial = refined[i].t.initial;
    s.refined = refined[i].t.refined;
    s.tree = std::move(refined[i].t.tree);
    if (!refined[i].error.empty()) {
      s.outcome.tag = OutcomeTag::FormatMismatch;
      s.outcome.detail = "formalization failed: " + refined[i].error;
      s.outcome.source_id = s.id;
      s.outcome.formula = s.refined;
    } else {
      s.outcome = compiler.compile(s.refined, store, s.id, texts[i].text);
    }
    outcomes.push_back(s.outcome);
    out.segments.push_back(std::move(s));
  }
  out.rules = store.rules();
  out.report = outcome_report(outcomes);
  return out;
}

std::vector<Episode> build_dataset(const PipelineConfig& cfg) {
  std::vector<Episode> eps;
  if (!cfg.dataset.episodes_path.empty()) {
    eps = load_episodes(cfg.dataset.episodes_path);
  } else {
    auto spec = cfg.dataset.scenario;
    if (!cfg.dataset.seed_given) spec.seed = mix_seed(cfg.seed, 1);
    eps = sim::generate(spec, cfg.dataset.policy, cfg.dataset.n_episodes);
  }
  validate_episodes(eps, cfg.kb);
  return eps;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void write(const std::string& rel, const std::string& content) {
    const auto path = root_ / rel;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
    hashes_[rel] = hex64(fnv1a64(content));
  }

  void hash_existing(const std::string& rel) {
    std::ifstream in(root_ / rel, std::ios::binary);
    if (!in) return;
    std::stringstream ss;
    ss << in.rdbuf();
    hashes_[rel] = hex64(fnv1a64(ss.str()));
  }

  const std::map<std::string, std::string>& hashes() const { return hashes_; }

 private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
};

std::string jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

nlohmann::json translation_scores(const std::vector<Segment>& texts, const FormalizeResult& f) {
  std::vector<std::string> initial, refined, refs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!texts[i].reference) continue;
    initial.push_back(f.segments[i].initial);
    refined.push_back(f.segments[i].refined);
    refs.push_back(*texts[i].reference);
  }
  if (refs.empty()) return nullptr;
  auto bleu = [&](const std::vector<std::string>& pred) {
    std::vector<std::vector<std::string>> p, r;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      p.push_back(metrics::bleu_tokens(pred[i]));
      r.push_back(metrics::bleu_tokens(refs[i]));
    }
    return metrics::corpus_bleu(p, r);
  };
  return {{"pairs", refs.size()},
          {"initial", {{"acc", metrics::ltl_match_accuracy(initial, refs)}, {"bleu", bleu(initial)}}},
          {"refined", {{"acc", metrics::ltl_match_accuracy(refined, refs)}, {"bleu", bleu(refined)}}}};
}

}  // namespace

ExperimentReport run_experiment(const PipelineConfig& cfg, const std::string& out_dir) {
  ArtifactWriter files(out_dir);
  ExperimentReport rep;
  files.write("config.json", cfg.effective.dump(2) + "\n");

  const auto transcripts = (fs::path(out_dir) / "transcripts").string();
  rep.formalized = formalize_corpus(cfg.corpus, cfg, transcripts);
  const auto& f = rep.formalized;
  {
    std::vector<nlohmann::json> segs, trees;
    std::vector<CompileOutcome> outcomes;
    for (const auto& s : f.segments) {
      segs.push_back({{"id", s.id},
                      {"initial", s.initial},
                      {"refined", s.refined},
                      {"critic_outcome", s.tree ? nlohmann::json(s.tree->outcome) : nlohmann::json(nullptr)},
                      {"outcome", s.outcome.to_json()}});
      if (s.tree) trees.push_back({{"id", s.id}, {"tree", s.tree->to_json()}});
      outcomes.push_back(s.outcome);
    }
    files.write("segments.jsonl", jsonl(segs));
    files.write("critic_traces.jsonl", jsonl(trees));
    files.write("outcomes.csv", f.report.to_csv());
    files.write("outcome_details.csv", outcomes_to_csv(outcomes));
    files.write("rules.json", rules_to_json(f.rules).dump(2) + "\n");
  }

  const auto episodes = build_dataset(cfg);
  {
    std::ostringstream s;
    write_episodes(s, episodes);
    files.write("episodes.jsonl", s.str());
  }

  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(cfg.seed, 2);
  const auto engine = tc.engine();
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 3);
  const std::uint64_t js_seed = mix_seed(cfg.seed, 4);
  auto distributions = [&](const std::vector<ProductionRule>& rules) {
    const bool was = warnings_enabled();
    set_warnings_enabled(false);
    auto d = metrics::decision_distributions(rules, episodes, engine, js_seed, cfg.eval.top_k, cfg.eval.js_runs);
    set_warnings_enabled(was);
    return d;
  };

  std::vector<ProductionRule> start = f.rules;
  for (auto& r : start) r.utility = tc.initial_utility;
  rep.initial = evaluate_agreement(start, episodes, engine, eval_seed, cfg.eval.runs);
  rep.initial_states = distributions(start);
  rep.js_curve.emplace_back(0, rep.initial_states.mean_js());

  rep.trained = train(start, episodes, tc, [&](int epoch, const std::vector<ProductionRule>& rules) {
    const double js = distributions(rules).mean_js();
    rep.js_curve.emplace_back(epoch + 1, js);
    return std::optional<double>(js);
  });
  rep.final = evaluate_agreement(rep.trained.rules, episodes, engine, eval_seed, cfg.eval.runs);
  rep.final_states = distributions(rep.trained.rules);

  files.write("trained_rules.json", rules_to_json(rep.trained.rules).dump(2) + "\n");
  files.write("learning_curve.csv", curve_to_csv(rep.trained.curve));
  {
    std::ostringstream s;
    s << std::setprecision(17) << "epoch,mean_js\n";
    for (const auto& [e, js] : rep.js_curve) s << e << "," << js << "\n";
    files.write("js_curve.csv", s.str());
  }
  files.write("decision_distributions.json",
              nlohmann::json{{"initial", rep.initial_states.to_json()}, {"final", rep.final_states.to_json()}}.dump(2) +
                  "\n");

  nlohmann::json m;
  m["prompt_mode"] = mode_name(cfg.mode);
  m["segments"] = cfg.corpus.size();
  m["outcomes"] = f.report.to_json();
  m["rules"] = f.rules.size();
  m["translation"] = translation_scores(cfg.corpus, f);
  m["train"] = {{"epochs", tc.epochs}, {"steps", rep.trained.steps}, {"updates", rep.trained.updates}};
  m["agreement"] = {{"initial", rep.initial.to_json()}, {"final", rep.final.to_json()}};
  m["js"] = {{"initial", rep.initial_states.mean_js()},
             {"final", rep.final_states.mean_js()},
             {"states", rep.final_states.states.size()},
             {"truncated", rep.final_states.truncated}};
  m["rsr"] = rep.final.rsr;
  files.write("metrics.json", m.dump(2) + "\n");

  if (fs::exists(transcripts)) {
    for (const auto& e : fs::directory_iterator(transcripts)) {
      files.hash_existing("transcripts/" + e.path().filename().string());
    }
  }

  rep.manifest = {{"name", cfg.name},
                  {"config_hash", hex64(fnv1a64(cfg.effective.dump()))},
                  {"prompt_mode", mode_name(cfg.mode)},
                  {"seeds",
                   {{"master", cfg.seed},
                    {"critic", mix_seed(cfg.seed, 10)},
                    {"dataset", cfg.dataset.episodes_path.empty() && !cfg.dataset.seed_given
                                    ? mix_seed(cfg.seed, 1)
                                    : cfg.dataset.scenario.seed},
                    {"train", tc.seed},
                    {"evaluation", eval_seed},
                    {"js", js_seed}}},
                  {"files", files.hashes()}};
  files.write("manifest.json", rep.manifest.dump(2) + "\n");
  return rep;
}

}  // namespace cogform::pipeline
