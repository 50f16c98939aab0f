#include "annoloop/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "annoloop/errors.hpp"
#include "annoloop/tuning.hpp"

namespace annoloop::generation {

using nlohmann::json;

namespace {

// Run fn(0..n-1) across up to `workers` threads pulling from a shared index.
// Record-level failures are the callback's business; anything that escapes
// it is rethrown here after all workers drain.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t thread_count =
      std::min<std::size_t>(std::max(workers, 1), n);
  if (thread_count == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(thread_count);
  for (std::size_t w = 0; w < thread_count; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!first_failure) first_failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_failure) std::rethrow_exception(first_failure);
}

void check_failure_budget(std::size_t failed, std::size_t total,
                          const char* phase) {
  if (total > 0 && failed * 2 > total) {
    throw AnnotationFailed(std::to_string(failed) + " of " +
                           std::to_string(total) + " records failed " + phase);
  }
}

}  // namespace

AnnotationRun annotate(std::vector<dataset::Record> records,
                       std::optional<prompting::Template> exemplar,
                       const prompting::InstructionSet& instr,
                       backend::Backend& backend, const PipelineOptions& opts) {
  AnnotationRun run;
  run.exemplar = std::move(exemplar);
  run.records = std::move(records);
  run.params = opts.params;

  const std::size_t n = run.records.size();
  std::vector<std::optional<std::string>> results(n);
  std::vector<std::string> failures(n);
  parallel_for(n, opts.concurrency, [&](std::size_t i) {
    try {
      results[i] = tuning::generate_summary(run.records[i], run.exemplar,
                                            instr, backend, opts.params);
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });

  std::size_t failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = run.records[i].id;
    if (results[i]) {
      run.summaries.emplace(id, std::move(*results[i]));
    } else {
      run.errors.emplace(id, failures[i]);
      ++failed;
    }
  }
  check_failure_budget(failed, n, "annotation");
  return run;
}

void evaluate_recovery(AnnotationRun& run,
                       const prompting::InstructionSet& instr,
                       backend::Backend& backend, const PipelineOptions& opts) {
  std::map<std::string, const dataset::Record*> by_id;
  for (const dataset::Record& r : run.records) by_id.emplace(r.id, &r);

  std::vector<const std::string*> ids;
  ids.reserve(run.summaries.size());
  for (const auto& [id, summary] : run.summaries) ids.push_back(&id);

  backend::GenerationParams recovery_params = opts.params;
  recovery_params.max_tokens = opts.recovery_max_tokens;

  struct Slot {
    std::string recovered;
    std::optional<metrics::CompositeScore> score;
    std::string failure;
  };
  std::vector<Slot> slots(ids.size());

  parallel_for(ids.size(), opts.concurrency, [&](std::size_t i) {
    const std::string& id = *ids[i];
    try {
      const std::string recovered =
          tuning::recover_record(run.summaries.at(id), run.exemplar, instr,
                                 backend, recovery_params);
      slots[i].score = metrics::score(*by_id.at(id), recovered, opts.metric,
                                      opts.embedder);
      slots[i].recovered = recovered;
    } catch (const Error& e) {
      slots[i].failure = e.what();
    }
  });

  std::size_t failed = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string id = *ids[i];
    if (slots[i].score) {
      run.recovered.emplace(id, std::move(slots[i].recovered));
      run.scores.emplace(id, std::move(*slots[i].score));
    } else {
      run.summaries.erase(id);  // keep the three maps on one key set
      run.errors[id] = slots[i].failure;
      ++failed;
    }
  }
  check_failure_budget(failed, ids.size(), "recovery");
}

namespace {

// Mean and standard error per metric over the given samples.
FoldStats compute_stats(
    int fold, const std::vector<std::map<std::string, double>>& samples) {
  FoldStats stats;
  stats.fold = fold;
  stats.n = samples.size();
  if (samples.empty()) return stats;

  std::map<std::string, double> sums;
  for (const auto& sample : samples) {
    for (const auto& [name, value] : sample) sums[name] += value;
  }
  for (const auto& [name, sum] : sums) {
    stats.mean[name] = sum / static_cast<double>(stats.n);
  }
  if (stats.n >= 2) {
    std::map<std::string, double> sq_dev;
    for (const auto& sample : samples) {
      for (const auto& [name, value] : sample) {
        const double d = value - stats.mean.at(name);
        sq_dev[name] += d * d;
      }
    }
    for (const auto& [name, sq] : sq_dev) {
      const double sample_std = std::sqrt(sq / static_cast<double>(stats.n - 1));
      stats.std_error[name] = sample_std / std::sqrt(static_cast<double>(stats.n));
    }
  }
  return stats;
}

std::map<std::string, double> score_values(const metrics::CompositeScore& s) {
  std::map<std::string, double> values = s.per_metric;
  values["composite"] = s.composite;
  return values;
}

}  // namespace

Report aggregate(const AnnotationRun& run, const dataset::FoldAssignment& folds) {
  std::vector<std::vector<std::map<std::string, double>>> per_fold_samples(
      std::max(folds.k, 0));
  std::vector<std::map<std::string, double>> all_samples;

  for (const auto& [id, score] : run.scores) {
    const auto it = folds.fold_of.find(id);
    if (it == folds.fold_of.end()) throw MissingFold(id);
    auto values = score_values(score);
    per_fold_samples[it->second].push_back(values);
    all_samples.push_back(std::move(values));
  }

  Report report;
  for (int f = 0; f < folds.k; ++f) {
    report.per_fold.push_back(compute_stats(f, per_fold_samples[f]));
  }
  report.overall = compute_stats(-1, all_samples);
  return report;
}

std::map<std::string, double> external_score(const AnnotationRun& run,
                                             const std::string& url) {
  json request = json::array();
  std::vector<std::string> ids;
  for (const auto& [id, summary] : run.summaries) {
    const auto record =
        std::find_if(run.records.begin(), run.records.end(),
                     [&](const dataset::Record& r) { return r.id == id; });
    if (record == run.records.end()) continue;
    request.push_back(
        {{"data", record->canonical_text}, {"summary", summary}});
    ids.push_back(id);
  }

  const auto [origin, prefix] = backend::split_url(url);
  httplib::Client client(origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(std::chrono::seconds(120));
  httplib::Result result = client.Post(prefix.empty() ? "/" : prefix,
                                       request.dump(), "application/json");
  if (!result) {
    throw ScorerUnavailable("scorer unreachable at " + url + ": " +
                            httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw ScorerUnavailable("scorer at " + url + " returned status " +
                            std::to_string(result->status));
  }

  std::vector<double> scalars;
  try {
    scalars = json::parse(result->body).get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ScorerUnavailable(std::string("scorer response is not a list of "
                                        "numbers: ") + e.what());
  }
  if (scalars.size() != ids.size()) {
    throw ScorerUnavailable("scorer returned " +
                            std::to_string(scalars.size()) + " scores for " +
                            std::to_string(ids.size()) + " pairs");
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], scalars[i]);
  return out;
}

void attach_external_scores(Report& report, const std::string& name,
                            const std::map<std::string, double>& values,
                            const dataset::FoldAssignment& folds) {
  std::vector<std::vector<std::map<std::string, double>>> per_fold_samples(
      std::max(folds.k, 0));
  std::vector<std::map<std::string, double>> all_samples;
  for (const auto& [id, value] : values) {
    const auto it = folds.fold_of.find(id);
    if (it == folds.fold_of.end()) throw MissingFold(id);
    std::map<std::string, double> sample{{name, value}};
    per_fold_samples[it->second].push_back(sample);
    all_samples.push_back(std::move(sample));
  }
  std::vector<FoldStats> stats;
  for (int f = 0; f < folds.k; ++f) {
    stats.push_back(compute_stats(f, per_fold_samples[f]));
  }
  stats.push_back(compute_stats(-1, all_samples));
  report.external[name] = std::move(stats);
}

ModeComparison compare_modes(const std::vector<dataset::Record>& records,
                             const dataset::FoldAssignment& folds,
                             const prompting::Template& exemplar,
                             const prompting::InstructionSet& instr,
                             backend::Backend& backend,
                             const PipelineOptions& opts) {
  ModeComparison out;
  out.one_shot_run = annotate(records, exemplar, instr, backend, opts);
  evaluate_recovery(out.one_shot_run, instr, backend, opts);
  out.one_shot = aggregate(out.one_shot_run, folds);

  out.zero_shot_run = annotate(records, std::nullopt, instr, backend, opts);
  evaluate_recovery(out.zero_shot_run, instr, backend, opts);
  out.zero_shot = aggregate(out.zero_shot_run, folds);

  for (const auto& [name, one_mean] : out.one_shot.overall.mean) {
    const auto it = out.zero_shot.overall.mean.find(name);
    if (it != out.zero_shot.overall.mean.end()) {
      out.delta[name] = one_mean - it->second;
    }
  }
  return out;
}

}  // namespace annoloop::generation
