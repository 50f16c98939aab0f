#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"
#include "annoloop/metrics.hpp"
#include "annoloop/prompting.hpp"

namespace annoloop::tuning {

enum class Mode { one_shot, zero_shot };

std::string_view mode_name(Mode mode);
Mode parse_mode_name(std::string_view name);

struct TuningConfig {
  int max_iterations = 10;
  double tuning_temperature = 1.0;     // candidate generation
  int generation_max_tokens = 350;
  int recovery_max_tokens = 500;
  double validation_temperature = 0.0; // stable gate decisions
  std::optional<int> patience;         // early stop; absent = fixed loop
  metrics::MetricConfig metric;
  std::uint64_t seed = 0;              // support sampling order
  Mode mode = Mode::one_shot;
};

// Opaque monotone tick source for trace timestamps.  The default logical
// clock keeps traces byte-identical across reruns.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now() = 0;
};

class LogicalClock : public Clock {
 public:
  std::int64_t now() override { return next_.fetch_add(1); }

 private:
  std::atomic<std::int64_t> next_{0};
};

struct Timestamps {
  std::int64_t started = 0;
  std::int64_t finished = 0;
};

// Everything one iteration did, enough to audit the two-level gate from the
// persisted trace alone.  chat_calls_* are served-request counts split by
// phase so the validation short-circuit is mechanically checkable.
struct IterationRecord {
  int iteration = 0;  // 1-based
  std::string sampled_record_id;
  std::string summary;
  std::string recovered;
  metrics::CompositeScore support_score;
  std::optional<double> validation_score;  // present iff gate_support passed
  bool gate_support = false;
  std::optional<bool> gate_validation;
  bool template_updated = false;
  std::uint64_t chat_calls_support = 0;
  std::uint64_t chat_calls_validation = 0;
  double best_support_after = 0.0;
  double best_validation_after = 0.0;
  Timestamps timestamps;
  std::optional<std::string> error;  // iteration failed; gates not evaluated
};

struct TuningState {
  int iteration = 0;
  prompting::Template best_template;
  double best_support_score = 0.0;
  double best_validation_score = 0.0;
  std::vector<IterationRecord> trace;
};

// Collaborators the loop calls out to; non-owning.
struct TuningDeps {
  const prompting::InstructionSet* instructions = nullptr;
  backend::Backend* backend = nullptr;
  metrics::Embedder embedder;  // empty = offline lexical embedding
  std::string model;           // provider model identifier for every call
  Clock* clock = nullptr;      // null = timestamps stay 0
  std::function<void(const IterationRecord&)> on_iteration;  // trace sink
};

// One chat round trip each; completions come back trimmed.  The template is
// absent in zero-shot mode.
std::string generate_summary(const dataset::Record& x,
                             const std::optional<prompting::Template>& t,
                             const prompting::InstructionSet& instr,
                             backend::Backend& backend,
                             const backend::GenerationParams& params);
std::string recover_record(std::string_view summary,
                           const std::optional<prompting::Template>& t,
                           const prompting::InstructionSet& instr,
                           backend::Backend& backend,
                           const backend::GenerationParams& params);

// Mean composite recovery score of `candidate` over the validation set at
// cfg.validation_temperature.  Requires a non-empty validation set.
double evaluate_validation(const prompting::Template& candidate,
                           std::span<const dataset::Record> validation,
                           const TuningConfig& cfg, const TuningDeps& deps);

// One Algorithm-1 step: generate, recover, score; on strict support
// improvement evaluate the candidate on the validation set; on strict
// validation improvement promote it.  Backend failures mark the iteration
// failed and leave the best state untouched.
IterationRecord tuning_step(TuningState& state, const dataset::Record& x,
                            std::span<const dataset::Record> validation,
                            const TuningConfig& cfg, const TuningDeps& deps);

// The full loop: seeded epoch-shuffled sampling over the support set,
// max_iterations steps, optional patience early stop.  Throws BackendError
// after three consecutive failed iterations (the trace seen so far has
// already been delivered to deps.on_iteration).
TuningState run_tuning(const TuningConfig& cfg,
                       const dataset::DatasetSplit& split,
                       const prompting::Template& initial,
                       const TuningDeps& deps);

}  // namespace annoloop::tuning
