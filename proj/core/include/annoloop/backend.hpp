#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "annoloop/rng.hpp"

namespace annoloop::backend {

enum class Role { system, assistant, user };

std::string_view role_name(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct GenerationParams {
  double temperature = 0.0;  // in [0, 2]
  int max_tokens = 1;        // >= 1
  std::string model;         // opaque provider identifier
};

// Hex SHA-256 over the canonical serialization of
// (model, temperature, max_tokens, roles, contents); the replay cache key.
std::string cache_key(const std::vector<ChatMessage>& messages,
                      const GenerationParams& params);
std::string embed_cache_key(const std::vector<std::string>& texts);

// Split "scheme://host:port/prefix" into (origin, path prefix); the prefix
// may be empty.  Throws ConfigError when the scheme is missing.
std::pair<std::string, std::string> split_url(const std::string& url);

// Chat-completion + embedding service.  chat/embed validate arguments and
// count calls, then dispatch to the concrete transport.  Both are safe to
// call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  // Returns the completion text.  Requires a non-empty message list whose
  // first message has role system, non-empty contents, temperature in [0, 2]
  // and max_tokens >= 1.  Throws BackendError subtypes on transport trouble.
  std::string chat(const std::vector<ChatMessage>& messages,
                   const GenerationParams& params);

  // One vector per text, all the same dimension.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

  // Requests served by this object.
  std::uint64_t chat_calls() const { return chat_calls_.load(); }
  std::uint64_t embed_calls() const { return embed_calls_.load(); }

  // Requests that actually reached a model (differs from the served counts
  // only for the replay backend, which answers warmed requests itself).
  virtual std::uint64_t upstream_chat_calls() const { return chat_calls(); }
  virtual std::uint64_t upstream_embed_calls() const { return embed_calls(); }

 protected:
  virtual std::string do_chat(const std::vector<ChatMessage>& messages,
                              const GenerationParams& params) = 0;
  virtual std::vector<std::vector<double>> do_embed(
      const std::vector<std::string>& texts) = 0;

 private:
  std::atomic<std::uint64_t> chat_calls_{0};
  std::atomic<std::uint64_t> embed_calls_{0};
};

// --- deterministic mock -------------------------------------------------------

struct MockOptions {
  double fidelity = 1.0;        // probability an edge clause survives intact
  double template_bonus = 0.0;  // fidelity boost when the prompt carries a template
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;  // cell operators; >= 2 entries to corrupt
};

// Render a cell as prose: "Cell with {N} intermediate nodes: " followed by
// one clause "node {t} applies {op} to node {s}" per edge, joined by "; ".
// Each clause's operator is independently replaced by a different vocabulary
// member with probability 1 - min(1, fidelity + (has_template ? bonus : 0)).
// Unparseable input yields the fixed sentence "unparseable input".
std::string mock_summarize(std::string_view cell_text,
                           const std::vector<std::string>& vocabulary,
                           double fidelity, double template_bonus,
                           bool has_template, Rng& rng);

// Parse the clause pattern back into a canonical cell string.  Clauses that
// do not match the pattern are dropped; nodes short of two in-edges are
// filled with (op_a, 0); an empty or clause-free summary gives the minimal cell
// "n2{(op_a,0),(op_a,0)}".
std::string mock_recover(std::string_view summary);

// Deterministic model over the cell DSL.  A request whose final user message
// parses as a cell is summarized; anything else is treated as a summary to
// recover.  Output is a pure function of (messages, params, seed) plus the
// request ordinal when temperature > 0, so temperature-0 calls repeat exactly.
class MockBackend : public Backend {
 public:
  explicit MockBackend(MockOptions options);

  const MockOptions& options() const { return options_; }

 protected:
  std::string do_chat(const std::vector<ChatMessage>& messages,
                      const GenerationParams& params) override;
  std::vector<std::vector<double>> do_embed(
      const std::vector<std::string>& texts) override;

 private:
  MockOptions options_;
  std::atomic<std::uint64_t> next_ordinal_{0};
};

// --- live HTTP client -----------------------------------------------------------

struct HttpOptions {
  std::string base_url;                     // e.g. https://api.openai.com/v1
  std::string auth_env = "ANNOLOOP_API_KEY";  // bearer token variable
  std::string embed_model;                  // optional /embeddings model field
  // Retry schedule for 429/5xx/transport errors: one delay per retry.
  std::vector<std::chrono::milliseconds> retry_delays{
      std::chrono::milliseconds(1000), std::chrono::milliseconds(2000),
      std::chrono::milliseconds(4000)};
  // Test seam; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleeper;
};

// OpenAI-compatible client: POST {base_url}/chat/completions and
// {base_url}/embeddings with bearer auth read from the environment at call
// time.  Retries only 429, 5xx and transport failures, then gives up with
// HttpError.  Other 4xx fail immediately.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);

 protected:
  std::string do_chat(const std::vector<ChatMessage>& messages,
                      const GenerationParams& params) override;
  std::vector<std::vector<double>> do_embed(
      const std::vector<std::string>& texts) override;

 private:
  std::string post_json(const std::string& path, const std::string& body);

  HttpOptions options_;
};

// --- record/replay cache ---------------------------------------------------------

// Answers from an append-only JSON-lines cache keyed by request digest.  On
// a miss it asks the fallback (if any), appends the fresh entry, and flushes;
// without a fallback a miss is a CacheMiss error.  Reads never mutate the
// file.  Entries: {"key":…, "request":…, "response":…, "timestamp":…}.
class ReplayBackend : public Backend {
 public:
  ReplayBackend(std::string cache_path, std::unique_ptr<Backend> fallback);

  std::uint64_t upstream_chat_calls() const override;
  std::uint64_t upstream_embed_calls() const override;

 protected:
  std::string do_chat(const std::vector<ChatMessage>& messages,
                      const GenerationParams& params) override;
  std::vector<std::vector<double>> do_embed(
      const std::vector<std::string>& texts) override;

 private:
  std::string lookup_or_fill(const std::string& key,
                             const std::string& request_json,
                             const std::function<std::string()>& produce);

  std::string cache_path_;
  std::unique_ptr<Backend> fallback_;
  std::mutex mutex_;
  std::map<std::string, std::string> entries_;  // key -> response payload JSON
};

// --- factory ------------------------------------------------------------------

enum class BackendKind { mock, http, replay };

std::string_view backend_kind_name(BackendKind kind);
BackendKind parse_backend_kind(std::string_view name);

struct BackendSpec {
  BackendKind kind = BackendKind::mock;
  std::string base_url;    // http; falls back to $ANNOLOOP_BASE_URL
  std::string auth_env = "ANNOLOOP_API_KEY";
  std::string embed_model;
  MockOptions mock;
  std::string cache_path;  // replay: required; mock/http: optional write-through
};

// Build the configured backend.  kind=replay gives a pure replay of
// cache_path (a miss is an error); kind=mock/http with cache_path set gives
// a replay cache with that backend as fallback.
std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

}  // namespace annoloop::backend
