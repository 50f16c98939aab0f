#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "doctest.h"

#include "annoloop/backend.hpp"
#include "annoloop/dataset.hpp"
#include "annoloop/errors.hpp"
#include "annoloop/metrics.hpp"
#include "annoloop/prompting.hpp"
#include "annoloop/tuning.hpp"
#include "scripted_backend.hpp"

using namespace annoloop;
using namespace annoloop::tuning;
using testutil::ScriptedBackend;
using testutil::text_record;

namespace {

const prompting::InstructionSet kInstr{
    "Write a short summary of the record.",
    "Reconstruct the record from the summary."};

const prompting::Template kSeed{"tpl record", "tpl summary", {}};

TuningDeps deps_for(backend::Backend& b, Clock* clock = nullptr) {
  TuningDeps d;
  d.instructions = &kInstr;
  d.backend = &b;
  d.model = "scripted";
  d.clock = clock;
  return d;
}

// support recovers perfectly; validation recovers perfectly too.
std::map<std::string, std::string> promoting_replies() {
  return {{"aa bb", "asum"},
          {"asum", "aa bb"},
          {"hello world", "vsum"},
          {"vsum", "hello world"}};
}

dataset::DatasetSplit one_one_split() {
  dataset::DatasetSplit split;
  split.support = {text_record("s1", "aa bb")};
  split.validation = {text_record("v1", "hello world")};
  return split;
}

}  // namespace

TEST_CASE("round-trip helpers trim completions and assemble prompts") {
  ScriptedBackend b({{"aa bb", "  the summary \n"},
                     {"the summary", " aa bb "}});
  const auto record = text_record("r1", "aa bb");
  const backend::GenerationParams params{0.0, 64, "scripted"};

  const std::string summary =
      generate_summary(record, kSeed, kInstr, b, params);
  CHECK(summary == "the summary");
  REQUIRE(b.seen.size() == 1);
  REQUIRE(b.seen[0].size() == 4);
  CHECK(b.seen[0][0].content == kInstr.encoding);
  CHECK(b.seen[0][1].content == "tpl record");
  CHECK(b.seen[0][2].content == "tpl summary");
  CHECK(b.seen[0][3].content == "aa bb");

  const std::string recovered =
      recover_record(summary, kSeed, kInstr, b, params);
  CHECK(recovered == "aa bb");
  REQUIRE(b.seen.size() == 2);
  REQUIRE(b.seen[1].size() == 4);
  CHECK(b.seen[1][0].content == kInstr.decoding);
  CHECK(b.seen[1][1].content == "tpl summary");  // exemplar order reversed
  CHECK(b.seen[1][2].content == "tpl record");
  CHECK(b.seen[1][3].content == "the summary");

  generate_summary(record, std::nullopt, kInstr, b, params);
  REQUIRE(b.seen.size() == 3);
  CHECK(b.seen[2].size() == 2);  // zero-shot drops the exemplar
}

TEST_CASE("a support win must also win on validation before promotion") {
  // Support recovers perfectly; validation recovery is garbage.
  ScriptedBackend b({{"aa bb", "asum"},
                     {"asum", "aa bb"},
                     {"hello world", "vsum"},
                     {"vsum", "zz qq"}});
  TuningConfig cfg;
  cfg.max_iterations = 2;

  const TuningState state =
      run_tuning(cfg, one_one_split(), kSeed, deps_for(b));
  REQUIRE(state.trace.size() == 2);
  for (const IterationRecord& rec : state.trace) {
    CHECK(rec.gate_support);  // 1.0 beats a best that never moved off 0
    REQUIRE(rec.validation_score.has_value());
    CHECK(*rec.validation_score == doctest::Approx(0.0));
    REQUIRE(rec.gate_validation.has_value());
    CHECK_FALSE(*rec.gate_validation);
    CHECK_FALSE(rec.template_updated);
    CHECK(rec.best_support_after == 0.0);
    CHECK(rec.best_validation_after == 0.0);
    CHECK(rec.chat_calls_support == 2);
    CHECK(rec.chat_calls_validation == 2);
  }
  CHECK(state.best_template == kSeed);
  CHECK(state.best_template.origin.kind ==
        prompting::TemplateOrigin::Kind::human_seed);
}

TEST_CASE("promotion installs the candidate and future prompts carry it") {
  ScriptedBackend b(promoting_replies());
  TuningConfig cfg;
  cfg.max_iterations = 3;
  LogicalClock clock;

  const TuningState state =
      run_tuning(cfg, one_one_split(), kSeed, deps_for(b, &clock));
  REQUIRE(state.trace.size() == 3);

  const IterationRecord& first = state.trace[0];
  CHECK(first.gate_support);
  CHECK(first.validation_score == doctest::Approx(1.0));
  CHECK(first.gate_validation.has_value());
  CHECK(first.template_updated);
  CHECK(first.support_score.composite == doctest::Approx(1.0));
  CHECK(first.best_support_after == doctest::Approx(1.0));
  CHECK(first.best_validation_after == doctest::Approx(1.0));
  CHECK(first.timestamps.started == 0);
  CHECK(first.timestamps.finished == 1);

  // Strict gate: an equal score is not an improvement.
  for (std::size_t i = 1; i < 3; ++i) {
    const IterationRecord& rec = state.trace[i];
    CHECK_FALSE(rec.gate_support);
    CHECK_FALSE(rec.validation_score.has_value());
    CHECK_FALSE(rec.gate_validation.has_value());
    CHECK_FALSE(rec.template_updated);
    CHECK(rec.chat_calls_validation == 0);  // validation short-circuits
    CHECK(rec.best_support_after == doctest::Approx(1.0));
  }

  CHECK(state.best_template.record_text == "aa bb");
  CHECK(state.best_template.summary_text == "asum");
  CHECK(state.best_template.origin.kind ==
        prompting::TemplateOrigin::Kind::iteration);
  CHECK(state.best_template.origin.iteration == 1);

  // Iteration 2's generation prompt embeds the freshly promoted exemplar.
  REQUIRE(b.seen.size() == 8);  // 4 calls in iteration 1, 2 each after
  REQUIRE(b.seen[4].size() == 4);
  CHECK(b.seen[4][1].content == "aa bb");
  CHECK(b.seen[4][2].content == "asum");
}

TEST_CASE("patience stops the loop after consecutive non-updates") {
  ScriptedBackend b(promoting_replies());
  TuningConfig cfg;
  cfg.max_iterations = 10;
  cfg.patience = 2;

  const TuningState state =
      run_tuning(cfg, one_one_split(), kSeed, deps_for(b));
  // Update at 1, then two stalls trip the patience stop.
  CHECK(state.trace.size() == 3);
  CHECK(state.iteration == 3);
}

TEST_CASE("a losing support score skips validation entirely") {
  // Recovery gets one token wrong: bleu 1/2, rouge 1/2, composite 1/2.
  ScriptedBackend b({{"aa bb", "asum"}, {"asum", "aa zz"}});
  TuningConfig cfg;

  TuningState state;
  state.best_template = kSeed;
  state.best_support_score = 0.9;
  state.best_validation_score = 0.9;

  const auto validation = std::vector<dataset::Record>{
      text_record("v1", "hello world")};
  const IterationRecord rec = tuning_step(
      state, text_record("s1", "aa bb"), validation, cfg, deps_for(b));

  CHECK(rec.support_score.composite == doctest::Approx(0.5));
  CHECK_FALSE(rec.gate_support);
  CHECK_FALSE(rec.validation_score.has_value());
  CHECK(rec.chat_calls_support == 2);
  CHECK(rec.chat_calls_validation == 0);
  CHECK(rec.best_support_after == doctest::Approx(0.9));
  CHECK(b.seen.size() == 2);  // no validation traffic at all
  CHECK(state.best_template == kSeed);
}

TEST_CASE("evaluate_validation averages the composite over the set") {
  ScriptedBackend b({{"hello world", "v1s"},
                     {"v1s", "hello world"},
                     {"foo bar", "v2s"},
                     {"v2s", "zz qq"}});
  TuningConfig cfg;
  const std::vector<dataset::Record> validation = {
      text_record("v1", "hello world"), text_record("v2", "foo bar")};

  const double mean = evaluate_validation(kSeed, validation, cfg, deps_for(b));
  CHECK(mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(
      evaluate_validation(kSeed, {}, cfg, deps_for(b)),
      std::invalid_argument);
}

TEST_CASE("failed iterations leave the best state alone") {
  ScriptedBackend b(promoting_replies());
  int support_generations = 0;
  b.before_reply = [&](const std::string& user) {
    if (user == "aa bb" && ++support_generations == 2) {
      throw HttpError(500, "flaky");
    }
  };
  TuningConfig cfg;
  cfg.max_iterations = 3;

  const TuningState state =
      run_tuning(cfg, one_one_split(), kSeed, deps_for(b));
  REQUIRE(state.trace.size() == 3);
  CHECK(state.trace[0].template_updated);

  const IterationRecord& failed = state.trace[1];
  REQUIRE(failed.error.has_value());
  CHECK(failed.error->find("http status 500") != std::string::npos);
  CHECK_FALSE(failed.gate_support);
  CHECK_FALSE(failed.validation_score.has_value());
  CHECK(failed.chat_calls_support == 1);  // died on the generate call
  CHECK(failed.best_support_after == doctest::Approx(1.0));

  CHECK_FALSE(state.trace[2].error.has_value());
  CHECK(state.best_template.origin.iteration == 1);
}

TEST_CASE("three consecutive failures abort the run") {
  ScriptedBackend b({});  // every call raises
  TuningConfig cfg;
  cfg.max_iterations = 10;

  std::vector<IterationRecord> delivered;
  TuningDeps deps = deps_for(b);
  deps.on_iteration = [&](const IterationRecord& rec) {
    delivered.push_back(rec);
  };

  try {
    run_tuning(cfg, one_one_split(), kSeed, deps);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(std::string(e.what()).find("3 consecutive failed iterations") !=
          std::string::npos);
  }
  REQUIRE(delivered.size() == 3);  // the trace so far was still delivered
  for (const IterationRecord& rec : delivered) {
    CHECK(rec.error.has_value());
    CHECK(rec.best_support_after == 0.0);
  }
}

TEST_CASE("support sampling covers the set once per epoch, seeded") {
  dataset::DatasetSplit split;
  for (int i = 0; i < 12; ++i) {
    split.support.push_back(
        text_record("s" + std::to_string(i), "w" + std::to_string(i)));
  }
  split.validation = {text_record("v1", "hello world")};

  const auto sampled_ids = [&](std::uint64_t seed, int iterations) {
    ScriptedBackend b({}, std::string("ok"));  // scores 0, gate never opens
    TuningConfig cfg;
    cfg.max_iterations = iterations;
    cfg.seed = seed;
    const TuningState state = run_tuning(cfg, split, kSeed, deps_for(b));
    std::vector<std::string> ids;
    for (const IterationRecord& rec : state.trace) {
      ids.push_back(rec.sampled_record_id);
    }
    return ids;
  };

  const auto one_epoch = sampled_ids(5, 12);
  auto sorted = one_epoch;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> expect;
  for (const auto& r : split.support) expect.push_back(r.id);
  std::sort(expect.begin(), expect.end());
  CHECK(sorted == expect);  // every record exactly once per epoch

  CHECK(sampled_ids(5, 12) == one_epoch);   // seed-stable
  CHECK(sampled_ids(6, 12) != one_epoch);   // seed-sensitive

  const auto two_epochs = sampled_ids(5, 24);
  for (const auto& id : expect) {
    CHECK(std::count(two_epochs.begin(), two_epochs.end(), id) == 2);
  }
}

TEST_CASE("zero-shot tuning keeps every prompt exemplar-free") {
  ScriptedBackend b(promoting_replies());
  TuningConfig cfg;
  cfg.max_iterations = 2;
  cfg.mode = Mode::zero_shot;

  const TuningState state =
      run_tuning(cfg, one_one_split(), kSeed, deps_for(b));
  for (const prompting::Prompt& prompt : b.seen) {
    CHECK(prompt.size() == 2);
  }
  // The candidate is still tracked even though prompts never carry it.
  CHECK(state.trace[0].template_updated);
  CHECK(state.best_template.origin.kind ==
        prompting::TemplateOrigin::Kind::iteration);
}
