#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "annoloop/config.hpp"

namespace annoloop::cli {

// Exit codes shared by every command: 0 success, 1 runtime failure,
// 2 configuration error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Backend activity observed during a command; written to
// {output_dir}/backend_stats.json and exposed here for callers that want to
// assert on it (kept out of report.json, which must be byte-stable across
// cache-warm reruns).
struct RunStats {
  std::uint64_t chat_calls = 0;
  std::uint64_t embed_calls = 0;
  std::uint64_t upstream_chat_calls = 0;   // calls that reached a model
  std::uint64_t upstream_embed_calls = 0;
};

// Parse + invariant-check the config; prints one line per problem.
int cmd_validate(const std::string& config_path, std::ostream& out);

// Run the tuning loop; writes trace.jsonl (flushed per iteration),
// trace.csv, and tuning_result.json under output_dir.
int cmd_tune(const std::string& config_path, const Overrides& overrides,
             std::ostream& out, RunStats* stats = nullptr);

// Annotate the generation split with the tuned (or configured) template,
// evaluate recovery, aggregate by fold; writes summaries.jsonl,
// recovered.jsonl, report.json, report.csv.  With overrides.zero_shot, runs
// the paired one-shot/zero-shot comparison instead and writes per-arm files
// plus compare.json.
int cmd_generate(const std::string& config_path, const Overrides& overrides,
                 std::ostream& out, RunStats* stats = nullptr);

// Re-run tuning across a config-supplied grid on one axis
// (metrics | temperature | initial_template); writes ablation.csv.
int cmd_ablate(const std::string& config_path, const std::string& axis,
               const Overrides& overrides, std::ostream& out,
               RunStats* stats = nullptr);

}  // namespace annoloop::cli
