#include "annoloop/commands.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"
#include "annoloop/errors.hpp"
#include "annoloop/generation.hpp"
#include "annoloop/metrics.hpp"
#include "annoloop/prompting.hpp"
#include "annoloop/tuning.hpp"

namespace annoloop::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Shortest round-trip decimal form, so output files are reproducible.
std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(),
                                       value);
  return std::string(buf.data(), ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

json score_to_json(const metrics::CompositeScore& score) {
  return json{{"composite", score.composite},
              {"per_metric", score.per_metric},
              {"weights", score.weights}};
}

json iteration_to_json(const tuning::IterationRecord& rec) {
  json j;
  j["iteration"] = rec.iteration;
  j["sampled_record_id"] = rec.sampled_record_id;
  j["summary"] = rec.summary;
  j["recovered"] = rec.recovered;
  j["support_score"] = score_to_json(rec.support_score);
  if (rec.validation_score) j["validation_score"] = *rec.validation_score;
  j["gate_support"] = rec.gate_support;
  if (rec.gate_validation) j["gate_validation"] = *rec.gate_validation;
  j["template_updated"] = rec.template_updated;
  j["chat_calls_support"] = rec.chat_calls_support;
  j["chat_calls_validation"] = rec.chat_calls_validation;
  j["best_support_after"] = rec.best_support_after;
  j["best_validation_after"] = rec.best_validation_after;
  j["timestamps"] = {{"started", rec.timestamps.started},
                     {"finished", rec.timestamps.finished}};
  if (rec.error) j["error"] = *rec.error;
  return j;
}

json template_to_json(const prompting::Template& t) {
  json origin;
  if (t.origin.kind == prompting::TemplateOrigin::Kind::iteration) {
    origin = {{"kind", "iteration"}, {"iteration", t.origin.iteration}};
  } else {
    origin = {{"kind", "human_seed"}};
  }
  return json{{"record_text", t.record_text},
              {"summary_text", t.summary_text},
              {"origin", std::move(origin)}};
}

json fold_stats_to_json(const generation::FoldStats& stats) {
  return json{{"fold", stats.fold},
              {"n", stats.n},
              {"mean", stats.mean},
              {"std_error", stats.std_error}};
}

json report_to_json(const generation::Report& report) {
  json j;
  j["config"] = report.config_echo.empty() ? json(nullptr)
                                           : json::parse(report.config_echo);
  json per_fold = json::array();
  for (const auto& f : report.per_fold) per_fold.push_back(fold_stats_to_json(f));
  j["per_fold"] = std::move(per_fold);
  j["overall"] = fold_stats_to_json(report.overall);
  if (!report.external.empty()) {
    json ext = json::object();
    for (const auto& [name, stats] : report.external) {
      json rows = json::array();
      for (const auto& f : stats) rows.push_back(fold_stats_to_json(f));
      ext[name] = std::move(rows);
    }
    j["external"] = std::move(ext);
  }
  return j;
}

std::string report_to_csv(const generation::Report& report) {
  std::string csv = "fold,metric,n,mean,std_error\n";
  const auto add_rows = [&csv](const std::string& fold_label,
                               const generation::FoldStats& stats) {
    for (const auto& [metric, mean] : stats.mean) {
      csv += fold_label;
      csv += ',';
      csv += csv_escape(metric);
      csv += ',';
      csv += std::to_string(stats.n);
      csv += ',';
      csv += format_double(mean);
      csv += ',';
      const auto se = stats.std_error.find(metric);
      if (se != stats.std_error.end()) csv += format_double(se->second);
      csv += '\n';
    }
  };
  for (const auto& f : report.per_fold) add_rows(std::to_string(f.fold), f);
  add_rows("overall", report.overall);
  for (const auto& [name, stats] : report.external) {
    for (const auto& f : stats) {
      add_rows(f.fold < 0 ? std::string("overall") : std::to_string(f.fold), f);
    }
  }
  return csv;
}

json backend_stats_json(const backend::Backend& b) {
  return json{{"chat_calls", b.chat_calls()},
              {"embed_calls", b.embed_calls()},
              {"upstream_chat_calls", b.upstream_chat_calls()},
              {"upstream_embed_calls", b.upstream_embed_calls()}};
}

void fill_stats(RunStats* stats, const backend::Backend* b) {
  if (stats == nullptr || b == nullptr) return;
  stats->chat_calls = b->chat_calls();
  stats->embed_calls = b->embed_calls();
  stats->upstream_chat_calls = b->upstream_chat_calls();
  stats->upstream_embed_calls = b->upstream_embed_calls();
}

void accumulate_stats(RunStats* stats, const backend::Backend& b) {
  if (stats == nullptr) return;
  stats->chat_calls += b.chat_calls();
  stats->embed_calls += b.embed_calls();
  stats->upstream_chat_calls += b.upstream_chat_calls();
  stats->upstream_embed_calls += b.upstream_embed_calls();
}

bool wants_embedding(const metrics::MetricConfig& cfg) {
  return std::any_of(cfg.enabled.begin(), cfg.enabled.end(),
                     metrics::is_embedding_metric);
}

metrics::Embedder make_embedder(backend::Backend* b,
                                const metrics::MetricConfig& cfg) {
  if (!wants_embedding(cfg)) return {};
  return [b](const std::vector<std::string>& texts) { return b->embed(texts); };
}

// Everything a command needs, loaded once from the config.
struct Pipeline {
  std::vector<dataset::Record> records;
  dataset::DatasetSplit split;
  prompting::InstructionSet instructions;
  prompting::Template initial_template;
  std::unique_ptr<backend::Backend> backend;
  metrics::Embedder embedder;
};

Pipeline build_pipeline(const RunConfig& cfg) {
  Pipeline p;
  p.records = dataset::load_records(cfg.dataset.path, cfg.dataset.format,
                                    cfg.dataset.operator_vocabulary);
  p.split = dataset::split_dataset(p.records, cfg.dataset.split.support_n,
                                   cfg.dataset.split.validation_n,
                                   cfg.dataset.split.seed);
  p.instructions = prompting::load_instructions(cfg.instructions.encode_path,
                                                cfg.instructions.decode_path);
  p.initial_template = prompting::load_template(
      cfg.initial_template.record_path, cfg.initial_template.summary_path);
  p.backend = backend::make_backend(backend_spec_from(cfg));
  p.embedder = make_embedder(p.backend.get(), cfg.metrics);
  return p;
}

// Advisory token-budget warnings for the prompts this run will build.
void print_budget_warnings(const Pipeline& p, const RunConfig& cfg,
                           std::ostream& out) {
  if (p.split.support.empty()) return;
  std::optional<prompting::Template> exemplar;
  if (cfg.tuning.mode == tuning::Mode::one_shot) exemplar = p.initial_template;
  std::set<std::string> seen;
  try {
    for (const auto& w : prompting::check_budget(prompting::build_generation_prompt(
             p.instructions, exemplar, p.split.support.front()))) {
      seen.insert(w);
    }
    for (const auto& w : prompting::check_budget(prompting::build_recovery_prompt(
             p.instructions, exemplar, p.initial_template.summary_text))) {
      seen.insert(w);
    }
  } catch (const Error&) {
    // Prompt assembly problems surface with full context once the run starts.
  }
  for (const auto& w : seen) out << "warning: " << w << "\n";
}

// Parse the config and run the invariant checks; on failure print the
// diagnostics and return an exit code.
std::optional<RunConfig> load_checked(const std::string& config_path,
                                      const Overrides& overrides,
                                      std::ostream& out, int& exit_code) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    apply_overrides(cfg, overrides);
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    exit_code = kExitConfig;
    return std::nullopt;
  }
  const std::vector<Diagnostic> diags = validate_run_config(cfg);
  if (!diags.empty()) {
    for (const auto& d : diags) out << d.field << ": " << d.message << "\n";
    exit_code = kExitConfig;
    return std::nullopt;
  }
  return cfg;
}

std::optional<int> last_update_iteration(const tuning::TuningState& state) {
  std::optional<int> last;
  for (const auto& rec : state.trace) {
    if (rec.template_updated) last = rec.iteration;
  }
  return last;
}

prompting::Template template_from_result(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tuning result: " + path.string());
  try {
    const json j = json::parse(in);
    const json& t = j.at("best_template");
    prompting::Template result;
    result.record_text = t.at("record_text").get<std::string>();
    result.summary_text = t.at("summary_text").get<std::string>();
    const json& origin = t.at("origin");
    if (origin.at("kind").get<std::string>() == "iteration") {
      result.origin.kind = prompting::TemplateOrigin::Kind::iteration;
      result.origin.iteration = origin.value("iteration", 0);
    }
    return result;
  } catch (const json::exception& e) {
    throw IoError("corrupt tuning result " + path.string() + ": " + e.what());
  }
}

// Write the per-record and aggregate files for one annotation run.  A
// non-empty tag (e.g. "one_shot") is folded into the file names.
void write_run_files(const fs::path& dir, const std::string& tag,
                     const generation::AnnotationRun& run,
                     const generation::Report& report) {
  const auto file = [&](const char* stem, const char* ext) {
    std::string name = stem;
    if (!tag.empty()) name += "_" + tag;
    name += ext;
    return dir / name;
  };
  std::string summaries;
  std::string recovered;
  for (const auto& record : run.records) {
    const auto s = run.summaries.find(record.id);
    if (s == run.summaries.end()) continue;
    summaries += json{{"id", record.id}, {"summary", s->second}}.dump();
    summaries += '\n';
    const auto r = run.recovered.find(record.id);
    const auto sc = run.scores.find(record.id);
    if (r == run.recovered.end() || sc == run.scores.end()) continue;
    recovered += json{{"id", record.id},
                      {"recovered", r->second},
                      {"scores", score_to_json(sc->second)}}
                     .dump();
    recovered += '\n';
  }
  write_text_file(file("summaries", ".jsonl"), summaries);
  write_text_file(file("recovered", ".jsonl"), recovered);
  write_text_file(file("report", ".json"), report_to_json(report).dump(2) + "\n");
  write_text_file(file("report", ".csv"), report_to_csv(report));
}

}  // namespace

int cmd_validate(const std::string& config_path, std::ostream& out) {
  try {
    const RunConfig cfg = load_run_config(config_path);
    const std::vector<Diagnostic> diags = validate_run_config(cfg);
    if (!diags.empty()) {
      for (const auto& d : diags) out << d.field << ": " << d.message << "\n";
      out << "invalid: " << diags.size() << " problem"
          << (diags.size() == 1 ? "" : "s") << "\n";
      return kExitConfig;
    }
    out << "ok\n";
    return kExitOk;
  } catch (const Error& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_tune(const std::string& config_path, const Overrides& overrides,
             std::ostream& out, RunStats* stats) {
  int exit_code = kExitOk;
  const std::optional<RunConfig> loaded =
      load_checked(config_path, overrides, out, exit_code);
  if (!loaded) return exit_code;
  const RunConfig& cfg = *loaded;

  std::optional<Pipeline> pipe;
  try {
    pipe.emplace(build_pipeline(cfg));
    Pipeline& p = *pipe;
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    print_budget_warnings(p, cfg, out);

    std::ofstream trace_out(dir / "trace.jsonl",
                            std::ios::binary | std::ios::trunc);
    if (!trace_out) {
      throw IoError("cannot open for writing: " + (dir / "trace.jsonl").string());
    }

    tuning::LogicalClock clock;
    tuning::TuningDeps deps;
    deps.instructions = &p.instructions;
    deps.backend = p.backend.get();
    deps.embedder = p.embedder;
    deps.model = cfg.backend.model;
    deps.clock = &clock;
    deps.on_iteration = [&trace_out](const tuning::IterationRecord& rec) {
      trace_out << iteration_to_json(rec).dump() << "\n";
      trace_out.flush();
    };

    const tuning::TuningState state =
        tuning::run_tuning(cfg.tuning, p.split, p.initial_template, deps);

    std::string csv = "iteration,support_score,validation_score,updated\n";
    for (const auto& rec : state.trace) {
      csv += std::to_string(rec.iteration);
      csv += ',';
      csv += format_double(rec.support_score.composite);
      csv += ',';
      if (rec.validation_score) csv += format_double(*rec.validation_score);
      csv += ',';
      csv += rec.template_updated ? '1' : '0';
      csv += '\n';
    }
    write_text_file(dir / "trace.csv", csv);

    json result;
    result["backend_calls"] = {{"chat", p.backend->chat_calls()},
                               {"embed", p.backend->embed_calls()}};
    result["best_support_score"] = state.best_support_score;
    result["best_validation_score"] = state.best_validation_score;
    result["best_template"] = template_to_json(state.best_template);
    result["config"] = json::parse(run_config_to_json(cfg));
    result["iterations_run"] = state.trace.size();
    const std::optional<int> last_update = last_update_iteration(state);
    if (last_update) {
      result["last_update_iteration"] = *last_update;
    } else {
      result["last_update_iteration"] = nullptr;
    }
    write_text_file(dir / "tuning_result.json", result.dump(2) + "\n");
    write_text_file(dir / "backend_stats.json",
                    backend_stats_json(*p.backend).dump(2) + "\n");
    fill_stats(stats, p.backend.get());

    out << "iterations run: " << state.trace.size() << "\n";
    out << "best support score: " << format_double(state.best_support_score)
        << "\n";
    out << "best validation score: "
        << format_double(state.best_validation_score) << "\n";
    out << "results in " << dir.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    fill_stats(stats, pipe ? pipe->backend.get() : nullptr);
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    fill_stats(stats, pipe ? pipe->backend.get() : nullptr);
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_generate(const std::string& config_path, const Overrides& overrides,
                 std::ostream& out, RunStats* stats) {
  int exit_code = kExitOk;
  const std::optional<RunConfig> loaded =
      load_checked(config_path, overrides, out, exit_code);
  if (!loaded) return exit_code;
  const RunConfig& cfg = *loaded;

  std::optional<Pipeline> pipe;
  try {
    pipe.emplace(build_pipeline(cfg));
    Pipeline& p = *pipe;
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);

    prompting::Template exemplar = p.initial_template;
    const fs::path tuned_path = dir / "tuning_result.json";
    if (fs::exists(tuned_path)) {
      exemplar = template_from_result(tuned_path);
      out << "using tuned template from " << tuned_path.string() << "\n";
    }

    const std::vector<dataset::Record>& records = p.split.generation;
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);
    dataset::FoldAssignment folds;
    if (ids.empty()) {
      folds.k = cfg.generation.folds;
    } else {
      folds = dataset::kfold_split(ids, cfg.generation.folds,
                                   cfg.dataset.split.seed);
    }

    generation::PipelineOptions opts;
    opts.params = {cfg.generation.temperature, cfg.generation.max_tokens,
                   cfg.backend.model};
    opts.recovery_max_tokens = cfg.tuning.recovery_max_tokens;
    opts.concurrency = cfg.generation.concurrency;
    opts.metric = cfg.metrics;
    opts.embedder = p.embedder;

    if (overrides.zero_shot) {
      generation::ModeComparison cmp = generation::compare_modes(
          records, folds, exemplar, p.instructions, *p.backend, opts);
      const std::string echo = run_config_to_json(cfg);
      cmp.one_shot.config_echo = echo;
      cmp.zero_shot.config_echo = echo;
      write_run_files(dir, "one_shot", cmp.one_shot_run, cmp.one_shot);
      write_run_files(dir, "zero_shot", cmp.zero_shot_run, cmp.zero_shot);

      json compare;
      compare["delta"] = cmp.delta;
      compare["one_shot"] = {{"n", cmp.one_shot.overall.n},
                             {"mean", cmp.one_shot.overall.mean}};
      compare["zero_shot"] = {{"n", cmp.zero_shot.overall.n},
                              {"mean", cmp.zero_shot.overall.mean}};
      write_text_file(dir / "compare.json", compare.dump(2) + "\n");

      json stats_json = backend_stats_json(*p.backend);
      stats_json["errors"] = {{"one_shot", cmp.one_shot_run.errors},
                              {"zero_shot", cmp.zero_shot_run.errors}};
      write_text_file(dir / "backend_stats.json", stats_json.dump(2) + "\n");
      fill_stats(stats, p.backend.get());

      for (const auto& [name, delta] : cmp.delta) {
        out << "delta " << name
            << " (one_shot - zero_shot): " << format_double(delta) << "\n";
      }
      out << "results in " << dir.string() << "\n";
      return kExitOk;
    }

    generation::AnnotationRun run =
        generation::annotate(records, exemplar, p.instructions, *p.backend,
                             opts);
    generation::evaluate_recovery(run, p.instructions, *p.backend, opts);
    generation::Report report = generation::aggregate(run, folds);
    report.config_echo = run_config_to_json(cfg);

    if (cfg.external_scorer) {
      try {
        const std::map<std::string, double> values =
            generation::external_score(run, cfg.external_scorer->url);
        generation::attach_external_scores(report, cfg.external_scorer->name,
                                           values, folds);
      } catch (const ScorerUnavailable& e) {
        out << "external scorer unavailable, continuing without it: "
            << e.what() << "\n";
      }
    }

    write_run_files(dir, "", run, report);
    json stats_json = backend_stats_json(*p.backend);
    stats_json["errors"] = run.errors;
    write_text_file(dir / "backend_stats.json", stats_json.dump(2) + "\n");
    fill_stats(stats, p.backend.get());

    out << "annotated " << run.summaries.size() << " of " << records.size()
        << " records";
    if (!run.errors.empty()) out << " (" << run.errors.size() << " failed)";
    out << "\n";
    const auto composite = report.overall.mean.find("composite");
    if (composite != report.overall.mean.end()) {
      out << "overall composite mean: " << format_double(composite->second)
          << "\n";
    }
    out << "results in " << dir.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    fill_stats(stats, pipe ? pipe->backend.get() : nullptr);
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    fill_stats(stats, pipe ? pipe->backend.get() : nullptr);
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_ablate(const std::string& config_path, const std::string& axis,
               const Overrides& overrides, std::ostream& out,
               RunStats* stats) {
  int exit_code = kExitOk;
  const std::optional<RunConfig> loaded =
      load_checked(config_path, overrides, out, exit_code);
  if (!loaded) return exit_code;
  const RunConfig& cfg = *loaded;

  // Each grid point: a label plus the tweak it applies to a config copy.
  struct GridPoint {
    std::string label;
    std::function<void(RunConfig&)> apply;
  };
  std::vector<GridPoint> grid;

  if (axis == "metrics") {
    if (cfg.ablation.metrics.empty()) {
      out << "ablation.metrics: no grid configured for axis 'metrics'\n";
      return kExitConfig;
    }
    for (const auto& names : cfg.ablation.metrics) {
      if (names.empty()) {
        out << "ablation.metrics: a metric subset must not be empty\n";
        return kExitConfig;
      }
      std::vector<metrics::MetricKind> kinds;
      try {
        for (const auto& name : names) {
          kinds.push_back(metrics::parse_metric_name(name));
        }
      } catch (const Error& e) {
        out << "ablation.metrics: " << e.what() << "\n";
        return kExitConfig;
      }
      std::string label;
      for (const auto& name : names) {
        if (!label.empty()) label += '+';
        label += name;
      }
      grid.push_back({std::move(label), [kinds](RunConfig& c) {
                        c.metrics.enabled = kinds;
                        c.metrics.weights.clear();  // equal over the subset
                      }});
    }
  } else if (axis == "temperature") {
    if (cfg.ablation.temperatures.empty()) {
      out << "ablation.temperatures: no grid configured for axis "
             "'temperature'\n";
      return kExitConfig;
    }
    for (double t : cfg.ablation.temperatures) {
      if (t < 0.0 || t > 2.0) {
        out << "ablation.temperatures: " << format_double(t)
            << " is outside [0, 2]\n";
        return kExitConfig;
      }
      grid.push_back({"T=" + format_double(t),
                      [t](RunConfig& c) { c.tuning.tuning_temperature = t; }});
    }
  } else if (axis == "initial_template") {
    if (cfg.ablation.initial_templates.empty()) {
      out << "ablation.initial_templates: no grid configured for axis "
             "'initial_template'\n";
      return kExitConfig;
    }
    for (const auto& variant : cfg.ablation.initial_templates) {
      for (const std::string& path :
           {variant.paths.record_path, variant.paths.summary_path}) {
        if (!fs::exists(path)) {
          out << "ablation.initial_templates: file does not exist: " << path
              << "\n";
          return kExitConfig;
        }
      }
      const TemplatePaths paths = variant.paths;
      grid.push_back({variant.label, [paths](RunConfig& c) {
                        c.initial_template = paths;
                      }});
    }
  } else {
    out << "unknown ablation axis: " << axis
        << " (expected metrics, temperature, or initial_template)\n";
    return kExitConfig;
  }

  try {
    const Pipeline base = build_pipeline(cfg);
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);

    std::string csv =
        "axis,label,iterations_run,last_update_iteration,best_support_score,"
        "best_validation_score\n";
    std::uint64_t total_chat = 0;
    std::uint64_t total_embed = 0;
    std::uint64_t total_upstream_chat = 0;
    std::uint64_t total_upstream_embed = 0;

    for (const GridPoint& point : grid) {
      RunConfig run_cfg = cfg;
      point.apply(run_cfg);
      run_cfg.tuning.metric = run_cfg.metrics;

      const std::unique_ptr<backend::Backend> b =
          backend::make_backend(backend_spec_from(run_cfg));
      prompting::Template initial = base.initial_template;
      if (axis == "initial_template") {
        initial = prompting::load_template(run_cfg.initial_template.record_path,
                                           run_cfg.initial_template.summary_path);
      }

      tuning::LogicalClock clock;
      tuning::TuningDeps deps;
      deps.instructions = &base.instructions;
      deps.backend = b.get();
      deps.embedder = make_embedder(b.get(), run_cfg.metrics);
      deps.model = run_cfg.backend.model;
      deps.clock = &clock;

      const tuning::TuningState state =
          tuning::run_tuning(run_cfg.tuning, base.split, initial, deps);
      const std::optional<int> last_update = last_update_iteration(state);

      csv += axis;
      csv += ',';
      csv += csv_escape(point.label);
      csv += ',';
      csv += std::to_string(state.trace.size());
      csv += ',';
      if (last_update) csv += std::to_string(*last_update);
      csv += ',';
      csv += format_double(state.best_support_score);
      csv += ',';
      csv += format_double(state.best_validation_score);
      csv += '\n';

      total_chat += b->chat_calls();
      total_embed += b->embed_calls();
      total_upstream_chat += b->upstream_chat_calls();
      total_upstream_embed += b->upstream_embed_calls();
      accumulate_stats(stats, *b);

      out << axis << " " << point.label
          << ": best support " << format_double(state.best_support_score)
          << ", best validation "
          << format_double(state.best_validation_score) << "\n";
    }

    write_text_file(dir / "ablation.csv", csv);
    write_text_file(dir / "backend_stats.json",
                    json{{"chat_calls", total_chat},
                         {"embed_calls", total_embed},
                         {"upstream_chat_calls", total_upstream_chat},
                         {"upstream_embed_calls", total_upstream_embed}}
                            .dump(2) +
                        "\n");
    out << "results in " << dir.string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    out << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace annoloop::cli
