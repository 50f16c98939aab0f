#include "annoloop/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

#include "annoloop/errors.hpp"

namespace annoloop::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& message) {
  throw ConfigError(field + ": " + message);
}

std::string joined(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

const json* find(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void check_object(const json& value, const std::string& field) {
  if (!value.is_object()) fail(field, "must be an object");
}

// Unknown keys are almost always typos; refuse them loudly.
void check_known_keys(const json& obj, const std::string& field,
                      std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known =
        std::any_of(allowed.begin(), allowed.end(),
                    [&](const char* k) { return it.key() == k; });
    if (!known) fail(joined(field, it.key()), "unknown key");
  }
}

std::string get_string(const json& obj, const std::string& field,
                       const char* key, const char* fallback = nullptr) {
  const json* v = find(obj, key);
  if (v == nullptr) {
    if (fallback != nullptr) return fallback;
    fail(joined(field, key), "is required");
  }
  if (!v->is_string()) fail(joined(field, key), "must be a string");
  return v->get<std::string>();
}

double get_double(const json& obj, const std::string& field, const char* key,
                  double fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) fail(joined(field, key), "must be a number");
  return v->get<double>();
}

int get_int(const json& obj, const std::string& field, const char* key,
            int fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) fail(joined(field, key), "must be an integer");
  return v->get<int>();
}

std::uint64_t get_uint64(const json& obj, const std::string& field,
                         const char* key, std::uint64_t fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer() ||
      (v->is_number_integer() && !v->is_number_unsigned() &&
       v->get<std::int64_t>() < 0)) {
    fail(joined(field, key), "must be a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

std::vector<std::string> get_string_list(const json& obj,
                                         const std::string& field,
                                         const char* key) {
  const json* v = find(obj, key);
  if (v == nullptr) return {};
  if (!v->is_array()) fail(joined(field, key), "must be an array of strings");
  std::vector<std::string> out;
  for (const json& item : *v) {
    if (!item.is_string()) {
      fail(joined(field, key), "must be an array of strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

// Resolve a path from the config against the config file's directory.
std::string resolve_path(const fs::path& base, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (base / p).lexically_normal().string();
}

metrics::MetricConfig parse_metrics_section(const json& obj,
                                            const std::string& field) {
  check_object(obj, field);
  check_known_keys(obj, field,
                   {"enabled", "weights", "tokenizer", "bleu_max_n",
                    "rouge_beta"});
  metrics::MetricConfig cfg;
  if (const json* enabled = find(obj, "enabled")) {
    if (!enabled->is_array()) {
      fail(joined(field, "enabled"), "must be an array of metric names");
    }
    cfg.enabled.clear();
    for (const json& name : *enabled) {
      if (!name.is_string()) {
        fail(joined(field, "enabled"), "must be an array of metric names");
      }
      cfg.enabled.push_back(metrics::parse_metric_name(name.get<std::string>()));
    }
  }
  if (const json* weights = find(obj, "weights")) {
    check_object(*weights, joined(field, "weights"));
    for (auto it = weights->begin(); it != weights->end(); ++it) {
      if (!it.value().is_number()) {
        fail(joined(field, "weights") + "." + it.key(), "must be a number");
      }
      cfg.weights[it.key()] = it.value().get<double>();
    }
  }
  cfg.tokenizer = metrics::parse_tokenizer_name(
      get_string(obj, field, "tokenizer", "whitespace"));
  const int max_n = get_int(obj, field, "bleu_max_n", 4);
  if (max_n < 1) fail(joined(field, "bleu_max_n"), "must be at least 1");
  cfg.bleu_max_n = static_cast<std::size_t>(max_n);
  cfg.rouge_beta = get_double(obj, field, "rouge_beta", 1.0);
  return cfg;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_object(root, "config");
  check_known_keys(root, "",
                   {"dataset", "instructions", "backend", "tuning",
                    "generation", "metrics", "initial_template",
                    "external_scorer", "ablation", "output_dir"});

  const fs::path base = fs::path(path).parent_path();
  RunConfig cfg;

  // dataset
  {
    const json* section = find(root, "dataset");
    if (section == nullptr) fail("dataset", "is required");
    check_object(*section, "dataset");
    check_known_keys(*section, "dataset",
                     {"path", "format", "operator_vocabulary", "split"});
    cfg.dataset.path =
        resolve_path(base, get_string(*section, "dataset", "path"));
    cfg.dataset.format = dataset::parse_record_format(
        get_string(*section, "dataset", "format", "cellgraph"));
    cfg.dataset.operator_vocabulary =
        get_string_list(*section, "dataset", "operator_vocabulary");
    if (cfg.dataset.operator_vocabulary.empty() &&
        cfg.dataset.format == dataset::RecordFormat::cellgraph) {
      cfg.dataset.operator_vocabulary = dataset::default_operator_vocabulary(5);
    }
    if (const json* split = find(*section, "split")) {
      check_object(*split, "dataset.split");
      check_known_keys(*split, "dataset.split",
                       {"support_n", "validation_n", "seed"});
      const int support = get_int(*split, "dataset.split", "support_n", 50);
      const int validation =
          get_int(*split, "dataset.split", "validation_n", 50);
      if (support < 0 || validation < 0) {
        fail("dataset.split", "sizes must be non-negative");
      }
      cfg.dataset.split.support_n = static_cast<std::size_t>(support);
      cfg.dataset.split.validation_n = static_cast<std::size_t>(validation);
      cfg.dataset.split.seed = get_uint64(*split, "dataset.split", "seed", 0);
    }
  }

  // instructions
  {
    const json* section = find(root, "instructions");
    if (section == nullptr) fail("instructions", "is required");
    check_object(*section, "instructions");
    check_known_keys(*section, "instructions", {"encode_path", "decode_path"});
    cfg.instructions.encode_path =
        resolve_path(base, get_string(*section, "instructions", "encode_path"));
    cfg.instructions.decode_path =
        resolve_path(base, get_string(*section, "instructions", "decode_path"));
  }

  // backend
  if (const json* section = find(root, "backend")) {
    check_object(*section, "backend");
    check_known_keys(*section, "backend",
                     {"kind", "base_url", "auth_env", "model", "embed_model",
                      "cache_path", "mock"});
    cfg.backend.kind = backend::parse_backend_kind(
        get_string(*section, "backend", "kind", "mock"));
    cfg.backend.base_url = get_string(*section, "backend", "base_url", "");
    cfg.backend.auth_env =
        get_string(*section, "backend", "auth_env", "ANNOLOOP_API_KEY");
    cfg.backend.model = get_string(*section, "backend", "model", "mock-cell");
    cfg.backend.embed_model =
        get_string(*section, "backend", "embed_model", "");
    cfg.backend.cache_path =
        resolve_path(base, get_string(*section, "backend", "cache_path", ""));
    if (const json* mock = find(*section, "mock")) {
      check_object(*mock, "backend.mock");
      check_known_keys(*mock, "backend.mock",
                       {"fidelity", "template_bonus", "seed"});
      cfg.backend.mock.fidelity =
          get_double(*mock, "backend.mock", "fidelity", 1.0);
      cfg.backend.mock.template_bonus =
          get_double(*mock, "backend.mock", "template_bonus", 0.0);
      cfg.backend.mock.seed = get_uint64(*mock, "backend.mock", "seed", 0);
    }
  } else {
    cfg.backend.model = "mock-cell";
  }

  // tuning
  if (const json* section = find(root, "tuning")) {
    check_object(*section, "tuning");
    check_known_keys(*section, "tuning",
                     {"max_iterations", "tuning_temperature",
                      "generation_max_tokens", "recovery_max_tokens",
                      "validation_temperature", "patience", "seed", "mode"});
    cfg.tuning.max_iterations =
        get_int(*section, "tuning", "max_iterations", 10);
    cfg.tuning.tuning_temperature =
        get_double(*section, "tuning", "tuning_temperature", 1.0);
    cfg.tuning.generation_max_tokens =
        get_int(*section, "tuning", "generation_max_tokens", 350);
    cfg.tuning.recovery_max_tokens =
        get_int(*section, "tuning", "recovery_max_tokens", 500);
    cfg.tuning.validation_temperature =
        get_double(*section, "tuning", "validation_temperature", 0.0);
    if (find(*section, "patience") != nullptr) {
      cfg.tuning.patience = get_int(*section, "tuning", "patience", 0);
    }
    cfg.tuning.seed = get_uint64(*section, "tuning", "seed", 0);
    cfg.tuning.mode =
        tuning::parse_mode_name(get_string(*section, "tuning", "mode",
                                           "one_shot"));
  }

  // generation
  if (const json* section = find(root, "generation")) {
    check_object(*section, "generation");
    check_known_keys(*section, "generation",
                     {"temperature", "max_tokens", "folds", "concurrency"});
    cfg.generation.temperature =
        get_double(*section, "generation", "temperature", 0.0);
    cfg.generation.max_tokens =
        get_int(*section, "generation", "max_tokens", 350);
    cfg.generation.folds = get_int(*section, "generation", "folds", 5);
    cfg.generation.concurrency =
        get_int(*section, "generation", "concurrency", 4);
  }

  // metrics
  if (const json* section = find(root, "metrics")) {
    cfg.metrics = parse_metrics_section(*section, "metrics");
  }
  cfg.tuning.metric = cfg.metrics;

  // initial_template
  {
    const json* section = find(root, "initial_template");
    if (section == nullptr) fail("initial_template", "is required");
    check_object(*section, "initial_template");
    check_known_keys(*section, "initial_template",
                     {"record_path", "summary_path"});
    cfg.initial_template.record_path = resolve_path(
        base, get_string(*section, "initial_template", "record_path"));
    cfg.initial_template.summary_path = resolve_path(
        base, get_string(*section, "initial_template", "summary_path"));
  }

  // external_scorer
  if (const json* section = find(root, "external_scorer")) {
    check_object(*section, "external_scorer");
    check_known_keys(*section, "external_scorer", {"name", "url"});
    ExternalScorerSection scorer;
    scorer.name = get_string(*section, "external_scorer", "name");
    scorer.url = get_string(*section, "external_scorer", "url");
    cfg.external_scorer = std::move(scorer);
  }

  // ablation
  if (const json* section = find(root, "ablation")) {
    check_object(*section, "ablation");
    check_known_keys(*section, "ablation",
                     {"metrics", "temperatures", "initial_templates"});
    if (const json* grids = find(*section, "metrics")) {
      if (!grids->is_array()) {
        fail("ablation.metrics", "must be an array of metric-name arrays");
      }
      for (const json& subset : *grids) {
        if (!subset.is_array()) {
          fail("ablation.metrics", "must be an array of metric-name arrays");
        }
        std::vector<std::string> names;
        for (const json& name : subset) {
          if (!name.is_string()) {
            fail("ablation.metrics", "must be an array of metric-name arrays");
          }
          names.push_back(name.get<std::string>());
        }
        cfg.ablation.metrics.push_back(std::move(names));
      }
    }
    if (const json* temps = find(*section, "temperatures")) {
      if (!temps->is_array()) {
        fail("ablation.temperatures", "must be an array of numbers");
      }
      for (const json& t : *temps) {
        if (!t.is_number()) {
          fail("ablation.temperatures", "must be an array of numbers");
        }
        cfg.ablation.temperatures.push_back(t.get<double>());
      }
    }
    if (const json* variants = find(*section, "initial_templates")) {
      if (!variants->is_array()) {
        fail("ablation.initial_templates", "must be an array of objects");
      }
      for (const json& v : *variants) {
        check_object(v, "ablation.initial_templates");
        check_known_keys(v, "ablation.initial_templates",
                         {"label", "record_path", "summary_path"});
        TemplateVariant variant;
        variant.label = get_string(v, "ablation.initial_templates", "label");
        variant.paths.record_path = resolve_path(
            base, get_string(v, "ablation.initial_templates", "record_path"));
        variant.paths.summary_path = resolve_path(
            base, get_string(v, "ablation.initial_templates", "summary_path"));
        cfg.ablation.initial_templates.push_back(std::move(variant));
      }
    }
  }

  // output_dir
  cfg.output_dir = resolve_path(base, get_string(root, "", "output_dir"));
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json root;
  root["dataset"] = {
      {"path", cfg.dataset.path},
      {"format", std::string(dataset::record_format_name(cfg.dataset.format))},
      {"operator_vocabulary", cfg.dataset.operator_vocabulary},
      {"split",
       {{"support_n", cfg.dataset.split.support_n},
        {"validation_n", cfg.dataset.split.validation_n},
        {"seed", cfg.dataset.split.seed}}}};
  root["instructions"] = {{"encode_path", cfg.instructions.encode_path},
                          {"decode_path", cfg.instructions.decode_path}};
  json backend_section = {
      {"kind", std::string(backend::backend_kind_name(cfg.backend.kind))},
      {"auth_env", cfg.backend.auth_env},
      {"model", cfg.backend.model},
      {"mock",
       {{"fidelity", cfg.backend.mock.fidelity},
        {"template_bonus", cfg.backend.mock.template_bonus},
        {"seed", cfg.backend.mock.seed}}}};
  if (!cfg.backend.base_url.empty()) {
    backend_section["base_url"] = cfg.backend.base_url;
  }
  if (!cfg.backend.embed_model.empty()) {
    backend_section["embed_model"] = cfg.backend.embed_model;
  }
  if (!cfg.backend.cache_path.empty()) {
    backend_section["cache_path"] = cfg.backend.cache_path;
  }
  root["backend"] = std::move(backend_section);
  json tuning_section = {
      {"max_iterations", cfg.tuning.max_iterations},
      {"tuning_temperature", cfg.tuning.tuning_temperature},
      {"generation_max_tokens", cfg.tuning.generation_max_tokens},
      {"recovery_max_tokens", cfg.tuning.recovery_max_tokens},
      {"validation_temperature", cfg.tuning.validation_temperature},
      {"seed", cfg.tuning.seed},
      {"mode", std::string(tuning::mode_name(cfg.tuning.mode))}};
  if (cfg.tuning.patience) tuning_section["patience"] = *cfg.tuning.patience;
  root["tuning"] = std::move(tuning_section);
  root["generation"] = {{"temperature", cfg.generation.temperature},
                        {"max_tokens", cfg.generation.max_tokens},
                        {"folds", cfg.generation.folds},
                        {"concurrency", cfg.generation.concurrency}};
  json enabled = json::array();
  for (metrics::MetricKind kind : cfg.metrics.enabled) {
    enabled.push_back(std::string(metrics::metric_name(kind)));
  }
  root["metrics"] = {
      {"enabled", std::move(enabled)},
      {"weights", cfg.metrics.weights},
      {"tokenizer", std::string(metrics::tokenizer_name(cfg.metrics.tokenizer))},
      {"bleu_max_n", cfg.metrics.bleu_max_n},
      {"rouge_beta", cfg.metrics.rouge_beta}};
  root["initial_template"] = {
      {"record_path", cfg.initial_template.record_path},
      {"summary_path", cfg.initial_template.summary_path}};
  if (cfg.external_scorer) {
    root["external_scorer"] = {{"name", cfg.external_scorer->name},
                               {"url", cfg.external_scorer->url}};
  }
  root["output_dir"] = cfg.output_dir;
  return root.dump(2);
}

std::vector<Diagnostic> validate_run_config(const RunConfig& cfg) {
  std::vector<Diagnostic> diags;
  const auto check = [&](bool ok, const std::string& field,
                         const std::string& message) {
    if (!ok) diags.push_back({field, message});
  };
  const auto check_file = [&](const std::string& path,
                              const std::string& field) {
    if (path.empty()) {
      diags.push_back({field, "is required"});
    } else if (!fs::exists(path)) {
      diags.push_back({field, "file does not exist: " + path});
    }
  };

  check_file(cfg.dataset.path, "dataset.path");
  check(cfg.dataset.split.support_n >= 1, "dataset.split.support_n",
        "must be at least 1");
  check(cfg.dataset.split.validation_n >= 1, "dataset.split.validation_n",
        "must be at least 1");
  check_file(cfg.instructions.encode_path, "instructions.encode_path");
  check_file(cfg.instructions.decode_path, "instructions.decode_path");
  check_file(cfg.initial_template.record_path, "initial_template.record_path");
  check_file(cfg.initial_template.summary_path,
             "initial_template.summary_path");
  check(!cfg.output_dir.empty(), "output_dir", "is required");

  if (cfg.backend.kind == backend::BackendKind::http) {
    const char* env = std::getenv("ANNOLOOP_BASE_URL");
    check(!cfg.backend.base_url.empty() || (env != nullptr && *env != '\0'),
          "backend.base_url",
          "is required for the http backend (or set ANNOLOOP_BASE_URL)");
  }
  if (cfg.backend.kind == backend::BackendKind::replay) {
    check(!cfg.backend.cache_path.empty(), "backend.cache_path",
          "is required for the replay backend");
  }
  check(cfg.backend.mock.fidelity >= 0.0 && cfg.backend.mock.fidelity <= 1.0,
        "backend.mock.fidelity", "must be in [0, 1]");
  check(cfg.backend.mock.template_bonus >= 0.0 &&
            cfg.backend.mock.template_bonus <= 1.0,
        "backend.mock.template_bonus", "must be in [0, 1]");
  check(cfg.backend.mock.fidelity + cfg.backend.mock.template_bonus <= 1.0,
        "backend.mock", "fidelity + template_bonus must be at most 1");

  check(cfg.tuning.max_iterations >= 0, "tuning.max_iterations",
        "must be non-negative");
  check(cfg.tuning.tuning_temperature >= 0.0 &&
            cfg.tuning.tuning_temperature <= 2.0,
        "tuning.tuning_temperature", "must be in [0, 2]");
  check(cfg.tuning.validation_temperature >= 0.0 &&
            cfg.tuning.validation_temperature <= 2.0,
        "tuning.validation_temperature", "must be in [0, 2]");
  check(cfg.tuning.generation_max_tokens >= 1, "tuning.generation_max_tokens",
        "must be at least 1");
  check(cfg.tuning.recovery_max_tokens >= 1, "tuning.recovery_max_tokens",
        "must be at least 1");
  if (cfg.tuning.patience) {
    check(*cfg.tuning.patience >= 1, "tuning.patience", "must be at least 1");
    check(*cfg.tuning.patience <= cfg.tuning.max_iterations, "tuning.patience",
          "must not exceed tuning.max_iterations");
  }

  check(cfg.generation.temperature >= 0.0 && cfg.generation.temperature <= 2.0,
        "generation.temperature", "must be in [0, 2]");
  check(cfg.generation.max_tokens >= 1, "generation.max_tokens",
        "must be at least 1");
  check(cfg.generation.folds >= 2, "generation.folds", "must be at least 2");
  check(cfg.generation.concurrency >= 1, "generation.concurrency",
        "must be at least 1");

  try {
    metrics::normalized_weights(cfg.metrics);
  } catch (const ConfigError& e) {
    diags.push_back({"metrics", e.what()});
  }
  check(cfg.metrics.rouge_beta > 0.0, "metrics.rouge_beta",
        "must be positive");

  if (cfg.external_scorer) {
    check(!cfg.external_scorer->name.empty(), "external_scorer.name",
          "is required");
    check(!cfg.external_scorer->url.empty(), "external_scorer.url",
          "is required");
  }
  return diags;
}

void apply_overrides(RunConfig& cfg, const Overrides& overrides) {
  if (overrides.seed) cfg.tuning.seed = *overrides.seed;
  if (overrides.max_iterations) {
    cfg.tuning.max_iterations = *overrides.max_iterations;
  }
  if (overrides.backend_kind) {
    cfg.backend.kind = backend::parse_backend_kind(*overrides.backend_kind);
  }
  if (overrides.temperature) {
    cfg.tuning.tuning_temperature = *overrides.temperature;
  }
  if (overrides.zero_shot) cfg.tuning.mode = tuning::Mode::zero_shot;
}

backend::BackendSpec backend_spec_from(const RunConfig& cfg) {
  backend::BackendSpec spec;
  spec.kind = cfg.backend.kind;
  spec.base_url = cfg.backend.base_url;
  spec.auth_env = cfg.backend.auth_env;
  spec.embed_model = cfg.backend.embed_model;
  spec.cache_path = cfg.backend.cache_path;
  spec.mock.fidelity = cfg.backend.mock.fidelity;
  spec.mock.template_bonus = cfg.backend.mock.template_bonus;
  spec.mock.seed = cfg.backend.mock.seed;
  spec.mock.vocabulary = cfg.dataset.operator_vocabulary;
  return spec;
}

}  // namespace annoloop::cli
