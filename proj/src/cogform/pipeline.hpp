#pragma once

// End-to-end orchestration: experience texts are translated to LTL, refined
// by the critic tree and compiled into a rule store; the store is trained on
// an episode dataset and evaluated. Every artifact lands in one output
// directory together with a manifest of content hashes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogform/critic_tree.hpp"
#include "cogform/crl_trainer.hpp"
#include "cogform/metrics.hpp"
#include "cogform/rule_compiler.hpp"
#include "cogform/scenario_sim.hpp"

namespace cogform::pipeline {

enum class PromptMode { Literal, Supply };
std::string_view mode_name(PromptMode m);
PromptMode mode_from_name(std::string_view s);

/// One experience-text segment. `initial` is a dataset-provided first
/// translation; `reference` an optional gold formula for ACC/BLEU.
struct Segment {
  std::string id;
  std::string text;
  std::optional<std::string> initial;
  std::optional<std::string> reference;
};

/// JSON Lines of {"id", "text", "initial"?, "reference"?}.
std::vector<Segment> load_corpus(const std::string& path);

struct DatasetConfig {
  std::string episodes_path;  // load when set
  sim::ScenarioSpec scenario;
  sim::ReferencePolicy policy;
  int n_episodes = 0;
  bool seed_given = false;
};

struct EvalConfig {
  int runs = 1;
  std::size_t top_k = 10;
  /// Engine runs per state for JS; default is the state's sample count.
  std::optional<std::size_t> js_runs;
};

struct PipelineConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  PromptMode mode = PromptMode::Literal;
  int jobs = 1;
  KnowledgeBase kb;
  std::vector<Segment> corpus;
  std::optional<llm::BackendSpec> translator;
  std::optional<critic::CriticTreeConfig> critic_tree;
  std::optional<llm::BackendSpec> writer_literal;
  std::optional<llm::BackendSpec> writer_supply;
  CompilerConfig compiler;
  std::optional<llm::BackendSpec> embedding;  // HTTP embeddings; hashed trigrams otherwise
  std::size_t embedding_dim = 256;
  DatasetConfig dataset;
  TrainConfig train;
  EvalConfig eval;
  /// The effective configuration after overrides, hashed into the manifest.
  /// `jobs` is left out.
  nlohmann::json effective;

  const std::optional<llm::BackendSpec>& writer() const {
    return mode == PromptMode::Supply ? writer_supply : writer_literal;
  }
};

/// Command-line style overrides applied on top of the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<PromptMode> mode;
  std::optional<int> jobs;
  /// Replaces every LLM role (translator, revisor, critics, writers).
  std::optional<nlohmann::json> backend;
};

/// Parses the config JSON. Relative paths resolve against base_dir.
/// Throws SchemaError or IoError with the offending key in the message.
PipelineConfig config_from_json(nlohmann::json j, const std::string& base_dir, const Overrides& ov = {});
PipelineConfig load_config(const std::string& path, const Overrides& ov = {});

struct Translation {
  std::string initial;
  std::string refined;
  std::optional<critic::CriticTreeResult> tree;
};

/// Initial translation (the segment's own or the translator backend's), then
/// the critic tree when configured. Throws on backend or config failure.
Translation translate_segment(const Segment& seg, const std::optional<llm::BackendSpec>& translator,
                              const std::optional<critic::CriticTreeConfig>& tree,
                              const std::vector<std::string>& vocabulary, std::uint64_t seed);

struct SegmentResult {
  std::string id;
  std::string initial;
  std::string refined;
  std::optional<critic::CriticTreeResult> tree;
  CompileOutcome outcome;
};

struct FormalizeResult {
  std::vector<SegmentResult> segments;
  std::vector<ProductionRule> rules;
  OutcomeReport report;
};

/// Per segment: initial translation, critic tree, compile. Segment failures
/// become outcomes. Translation and refinement run on up to cfg.jobs
/// threads; compilation and store insertion follow segment order.
/// `transcript_dir`, when set, redirects backend recordings there.
FormalizeResult formalize_corpus(const std::vector<Segment>& texts, const PipelineConfig& cfg,
                                 const std::string& transcript_dir = {});

std::vector<Episode> build_dataset(const PipelineConfig& cfg);

struct ExperimentReport {
  FormalizeResult formalized;
  TrainResult trained;
  Agreement initial;
  Agreement final;
  metrics::TopStates initial_states;
  metrics::TopStates final_states;
  std::vector<std::pair<int, double>> js_curve;  // epoch 0 is the untrained store
  nlohmann::json manifest;
};

/// formalize, train, evaluate; writes every artifact and manifest.json to out_dir.
ExperimentReport run_experiment(const PipelineConfig& cfg, const std::string& out_dir);

}  // namespace cogform::pipeline
