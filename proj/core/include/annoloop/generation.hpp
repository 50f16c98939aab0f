#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"
#include "annoloop/metrics.hpp"
#include "annoloop/prompting.hpp"

namespace annoloop::generation {

// Shared knobs for the annotate/recover/score pipeline.
struct PipelineOptions {
  backend::GenerationParams params{0.0, 350, ""};  // summary generation
  int recovery_max_tokens = 500;
  int concurrency = 4;  // in-flight backend calls
  metrics::MetricConfig metric;
  metrics::Embedder embedder;  // empty = offline lexical embedding
};

// Corpus-wide annotation state.  The three id-keyed maps share one key set
// once recovery completes; records that failed either phase end up in
// `errors` instead.
struct AnnotationRun {
  std::optional<prompting::Template> exemplar;  // absent in zero-shot mode
  std::vector<dataset::Record> records;
  std::map<std::string, std::string> summaries;
  std::map<std::string, std::string> recovered;
  std::map<std::string, metrics::CompositeScore> scores;
  std::map<std::string, std::string> errors;  // record id -> failure message
  backend::GenerationParams params;
};

// Per-fold (or overall, fold = -1) statistics keyed by metric name plus
// "composite".  std_error = sample std (n-1 denominator) / sqrt(n), present
// only when n >= 2; means are absent when n = 0.
struct FoldStats {
  int fold = -1;
  std::size_t n = 0;
  std::map<std::string, double> mean;
  std::map<std::string, double> std_error;
};

struct Report {
  std::vector<FoldStats> per_fold;  // one entry per fold, ascending
  FoldStats overall;
  // scorer name -> per-fold stats (overall appended as fold -1).
  std::map<std::string, std::vector<FoldStats>> external;
  std::string config_echo;  // JSON text, attached by the caller
};

// Summarize every record once at opts.params (temperature 0 by default).
// Per-record failures are recorded and skipped; the run only fails (throws
// AnnotationFailed) when more than half the records error out.
AnnotationRun annotate(std::vector<dataset::Record> records,
                       std::optional<prompting::Template> exemplar,
                       const prompting::InstructionSet& instr,
                       backend::Backend& backend, const PipelineOptions& opts);

// Recover every summarized record and score the reconstruction against the
// record's canonical text.  Failure policy as annotate; a record that fails
// recovery is dropped from all three maps and lands in errors.
void evaluate_recovery(AnnotationRun& run,
                       const prompting::InstructionSet& instr,
                       backend::Backend& backend, const PipelineOptions& opts);

// Pure aggregation of run.scores by fold.  Throws MissingFold when a scored
// id has no fold assignment.
Report aggregate(const AnnotationRun& run, const dataset::FoldAssignment& folds);

// POST [{"data": record canonical text, "summary": ...}, ...] to the scorer
// and map the returned scalars back to record ids.  Throws ScorerUnavailable
// on transport failure, non-2xx status, or count mismatch.
std::map<std::string, double> external_score(const AnnotationRun& run,
                                             const std::string& url);

// Compute per-fold stats of external scalars and attach them to the report
// under `name` (overall appended as fold -1).
void attach_external_scores(Report& report, const std::string& name,
                            const std::map<std::string, double>& values,
                            const dataset::FoldAssignment& folds);

struct ModeComparison {
  AnnotationRun one_shot_run;
  AnnotationRun zero_shot_run;
  Report one_shot;
  Report zero_shot;
  std::map<std::string, double> delta;  // one_shot minus zero_shot overall mean
};

// Paired one-shot vs zero-shot comparison over identical records and folds.
ModeComparison compare_modes(const std::vector<dataset::Record>& records,
                             const dataset::FoldAssignment& folds,
                             const prompting::Template& exemplar,
                             const prompting::InstructionSet& instr,
                             backend::Backend& backend,
                             const PipelineOptions& opts);

}  // namespace annoloop::generation
