#include "annoloop/tuning.hpp"

#include <numeric>
#include <stdexcept>

#include "annoloop/errors.hpp"
#include "annoloop/rng.hpp"
#include "text_util.hpp"

namespace annoloop::tuning {

std::string_view mode_name(Mode mode) {
  return mode == Mode::one_shot ? "one_shot" : "zero_shot";
}

Mode parse_mode_name(std::string_view name) {
  if (name == "one_shot") return Mode::one_shot;
  if (name == "zero_shot") return Mode::zero_shot;
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected one_shot or zero_shot)");
}

std::string generate_summary(const dataset::Record& x,
                             const std::optional<prompting::Template>& t,
                             const prompting::InstructionSet& instr,
                             backend::Backend& backend,
                             const backend::GenerationParams& params) {
  const prompting::Prompt prompt =
      prompting::build_generation_prompt(instr, t, x);
  return detail::trim_copy(backend.chat(prompt, params));
}

std::string recover_record(std::string_view summary,
                           const std::optional<prompting::Template>& t,
                           const prompting::InstructionSet& instr,
                           backend::Backend& backend,
                           const backend::GenerationParams& params) {
  const prompting::Prompt prompt =
      prompting::build_recovery_prompt(instr, t, summary);
  return detail::trim_copy(backend.chat(prompt, params));
}

namespace {

std::int64_t tick(Clock* clock) { return clock ? clock->now() : 0; }

backend::GenerationParams make_params(const TuningDeps& deps,
                                      double temperature, int max_tokens) {
  return {temperature, max_tokens, deps.model};
}

// The exemplar the prompts carry: the given template in one_shot mode,
// nothing in zero_shot mode.
std::optional<prompting::Template> prompt_template(
    const TuningConfig& cfg, const prompting::Template& t) {
  if (cfg.mode == Mode::zero_shot) return std::nullopt;
  return t;
}

}  // namespace

double evaluate_validation(const prompting::Template& candidate,
                           std::span<const dataset::Record> validation,
                           const TuningConfig& cfg, const TuningDeps& deps) {
  if (validation.empty()) {
    throw std::invalid_argument("validation set must not be empty");
  }
  const auto gen_params = make_params(deps, cfg.validation_temperature,
                                      cfg.generation_max_tokens);
  const auto rec_params = make_params(deps, cfg.validation_temperature,
                                      cfg.recovery_max_tokens);
  const std::optional<prompting::Template> t = prompt_template(cfg, candidate);

  double sum = 0.0;
  for (const dataset::Record& x : validation) {
    const std::string summary =
        generate_summary(x, t, *deps.instructions, *deps.backend, gen_params);
    const std::string recovered =
        recover_record(summary, t, *deps.instructions, *deps.backend,
                       rec_params);
    sum += metrics::score(x, recovered, cfg.metric, deps.embedder).composite;
  }
  return sum / static_cast<double>(validation.size());
}

IterationRecord tuning_step(TuningState& state, const dataset::Record& x,
                            std::span<const dataset::Record> validation,
                            const TuningConfig& cfg, const TuningDeps& deps) {
  IterationRecord rec;
  rec.iteration = state.iteration + 1;
  rec.sampled_record_id = x.id;
  rec.timestamps.started = tick(deps.clock);

  backend::Backend& be = *deps.backend;
  const std::uint64_t calls_before = be.chat_calls();
  try {
    const auto t = prompt_template(cfg, state.best_template);
    rec.summary = generate_summary(
        x, t, *deps.instructions, be,
        make_params(deps, cfg.tuning_temperature, cfg.generation_max_tokens));
    rec.recovered = recover_record(
        rec.summary, t, *deps.instructions, be,
        make_params(deps, cfg.tuning_temperature, cfg.recovery_max_tokens));
    rec.support_score = metrics::score(x, rec.recovered, cfg.metric,
                                       deps.embedder);
    rec.chat_calls_support = be.chat_calls() - calls_before;

    rec.gate_support = rec.support_score.composite > state.best_support_score;
    if (rec.gate_support) {
      prompting::Template candidate{
          x.canonical_text, rec.summary,
          {prompting::TemplateOrigin::Kind::iteration, rec.iteration}};
      const std::uint64_t validation_before = be.chat_calls();
      const double v = evaluate_validation(candidate, validation, cfg, deps);
      rec.chat_calls_validation = be.chat_calls() - validation_before;
      rec.validation_score = v;
      rec.gate_validation = v > state.best_validation_score;
      if (*rec.gate_validation) {
        state.best_template = std::move(candidate);
        state.best_support_score = rec.support_score.composite;
        state.best_validation_score = v;
        rec.template_updated = true;
      }
    }
  } catch (const Error& e) {
    // The iteration is spent; the best state must not move.
    rec.error = e.what();
    rec.chat_calls_support = be.chat_calls() - calls_before;
  }

  state.iteration = rec.iteration;
  rec.best_support_after = state.best_support_score;
  rec.best_validation_after = state.best_validation_score;
  rec.timestamps.finished = tick(deps.clock);

  state.trace.push_back(rec);
  if (deps.on_iteration) deps.on_iteration(rec);
  return rec;
}

TuningState run_tuning(const TuningConfig& cfg,
                       const dataset::DatasetSplit& split,
                       const prompting::Template& initial,
                       const TuningDeps& deps) {
  if (split.support.empty()) {
    throw std::invalid_argument("support set must not be empty");
  }
  if (split.validation.empty()) {
    throw std::invalid_argument("validation set must not be empty");
  }
  if (deps.instructions == nullptr || deps.backend == nullptr) {
    throw std::invalid_argument("tuning needs instructions and a backend");
  }

  TuningState state;
  state.best_template = initial;

  Rng sampler(cfg.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  int without_update = 0;
  int consecutive_failures = 0;

  for (int i = 0; i < cfg.max_iterations; ++i) {
    if (cursor == order.size()) {
      order.resize(split.support.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      sampler.shuffle(order);
      cursor = 0;
    }
    const dataset::Record& x = split.support[order[cursor++]];
    const IterationRecord rec =
        tuning_step(state, x, split.validation, cfg, deps);

    if (rec.error) {
      if (++consecutive_failures >= 3) {
        throw BackendError("tuning aborted at iteration " +
                           std::to_string(rec.iteration) +
                           " after 3 consecutive failed iterations; last: " +
                           *rec.error);
      }
    } else {
      consecutive_failures = 0;
    }

    without_update = rec.template_updated ? 0 : without_update + 1;
    if (cfg.patience && without_update >= *cfg.patience) break;
  }
  return state;
}

}  // namespace annoloop::tuning
