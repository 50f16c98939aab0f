#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"
#include "annoloop/metrics.hpp"
#include "annoloop/tuning.hpp"

namespace annoloop::cli {

struct SplitConfig {
  std::size_t support_n = 50;
  std::size_t validation_n = 50;
  std::uint64_t seed = 0;
};

struct DatasetConfig {
  std::string path;  // id<TAB>payload lines
  dataset::RecordFormat format = dataset::RecordFormat::cellgraph;
  std::vector<std::string> operator_vocabulary;  // empty = op_a..op_e
  SplitConfig split;
};

struct InstructionPaths {
  std::string encode_path;
  std::string decode_path;
};

struct MockSection {
  double fidelity = 1.0;
  double template_bonus = 0.0;
  std::uint64_t seed = 0;
};

struct BackendSection {
  backend::BackendKind kind = backend::BackendKind::mock;
  std::string base_url;    // http; or $ANNOLOOP_BASE_URL
  std::string auth_env = "ANNOLOOP_API_KEY";  // env var holding the API key
  std::string model;       // chat model identifier sent with every request
  std::string embed_model; // /embeddings model field, optional
  std::string cache_path;  // replay cache (required for kind=replay)
  MockSection mock;
};

struct GenerationSection {
  double temperature = 0.0;
  int max_tokens = 350;
  int folds = 5;
  int concurrency = 4;
};

struct TemplatePaths {
  std::string record_path;
  std::string summary_path;
};

struct ExternalScorerSection {
  std::string name;
  std::string url;
};

struct TemplateVariant {
  std::string label;
  TemplatePaths paths;
};

// Grids for cmd_ablate; only the axis being swept needs to be present.
struct AblationSection {
  std::vector<std::vector<std::string>> metrics;  // subsets of metric names
  std::vector<double> temperatures;
  std::vector<TemplateVariant> initial_templates;
};

struct RunConfig {
  DatasetConfig dataset;
  InstructionPaths instructions;
  BackendSection backend;
  tuning::TuningConfig tuning;  // .metric mirrors the metrics section below
  GenerationSection generation;
  metrics::MetricConfig metrics;
  TemplatePaths initial_template;
  std::optional<ExternalScorerSection> external_scorer;
  AblationSection ablation;
  std::string output_dir;
};

// Parse a JSON config file.  Relative paths (dataset, instructions,
// templates, cache, output_dir) are resolved against the config file's
// directory.  Unknown keys and type mismatches are ConfigErrors.
RunConfig load_run_config(const std::string& path);

// The effective configuration as a JSON document (the echo embedded in
// tuning_result.json and report.json).
std::string run_config_to_json(const RunConfig& cfg);

struct Diagnostic {
  std::string field;    // dotted path, e.g. "instructions.encode_path"
  std::string message;
};

// Invariant and referenced-file checks; empty means the config is runnable.
std::vector<Diagnostic> validate_run_config(const RunConfig& cfg);

// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::uint64_t> seed;        // tuning.seed
  std::optional<int> max_iterations;        // tuning.max_iterations
  std::optional<std::string> backend_kind;  // backend.kind
  std::optional<double> temperature;        // tuning.tuning_temperature
  bool zero_shot = false;  // tune: zero-shot mode; generate: paired comparison
};

void apply_overrides(RunConfig& cfg, const Overrides& overrides);

// The backend the config describes (mock vocabulary defaults to the dataset
// operator vocabulary).
backend::BackendSpec backend_spec_from(const RunConfig& cfg);

}  // namespace annoloop::cli
