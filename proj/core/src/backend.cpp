#include "annoloop/backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <regex>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "annoloop/dataset.hpp"
#include "annoloop/errors.hpp"
#include "annoloop/metrics.hpp"
#include "text_util.hpp"

namespace annoloop::backend {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::assistant:
      return "assistant";
    case Role::user:
      return "user";
  }
  return "unknown";
}

namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw BackendError("SHA-256 digest failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// Canonical request serializations: nlohmann objects keep keys sorted, so
// dump() is a stable byte string for hashing and cache storage.
json chat_request_json(const std::vector<ChatMessage>& messages,
                       const GenerationParams& params) {
  json msgs = json::array();
  for (const ChatMessage& m : messages) {
    msgs.push_back(json::array({std::string(role_name(m.role)), m.content}));
  }
  return json{{"kind", "chat"},
              {"max_tokens", params.max_tokens},
              {"messages", std::move(msgs)},
              {"model", params.model},
              {"temperature", params.temperature}};
}

json embed_request_json(const std::vector<std::string>& texts) {
  return json{{"kind", "embed"}, {"texts", texts}};
}

}  // namespace

std::string cache_key(const std::vector<ChatMessage>& messages,
                      const GenerationParams& params) {
  return sha256_hex(chat_request_json(messages, params).dump());
}

std::string embed_cache_key(const std::vector<std::string>& texts) {
  return sha256_hex(embed_request_json(texts).dump());
}

std::string Backend::chat(const std::vector<ChatMessage>& messages,
                          const GenerationParams& params) {
  if (messages.empty()) {
    throw std::invalid_argument("chat requires at least one message");
  }
  if (messages.front().role != Role::system) {
    throw std::invalid_argument("first chat message must have role system");
  }
  for (const ChatMessage& m : messages) {
    if (m.content.empty()) {
      throw std::invalid_argument("chat message content must not be empty");
    }
  }
  if (params.temperature < 0.0 || params.temperature > 2.0) {
    throw std::invalid_argument("temperature must be in [0, 2]");
  }
  if (params.max_tokens < 1) {
    throw std::invalid_argument("max_tokens must be at least 1");
  }
  chat_calls_.fetch_add(1);
  return do_chat(messages, params);
}

std::vector<std::vector<double>> Backend::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) {
    throw std::invalid_argument("embed requires at least one text");
  }
  embed_calls_.fetch_add(1);
  return do_embed(texts);
}

// --- mock ----------------------------------------------------------------------

std::string mock_summarize(std::string_view cell_text,
                           const std::vector<std::string>& vocabulary,
                           double fidelity, double template_bonus,
                           bool has_template, Rng& rng) {
  dataset::CellGraph graph;
  try {
    graph = dataset::parse_cell_graph(cell_text, vocabulary);
  } catch (const Error&) {
    return "unparseable input";
  }

  const double keep_probability =
      std::min(1.0, fidelity + (has_template ? template_bonus : 0.0));

  std::string out = "Cell with " +
                    std::to_string(graph.num_intermediate_nodes) +
                    " intermediate nodes: ";
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const dataset::CellEdge& edge = graph.edges[i];
    std::string op = edge.op;
    if (rng.uniform01() >= keep_probability && vocabulary.size() >= 2) {
      // Replace with a uniformly chosen different operator.
      const auto self = std::find(vocabulary.begin(), vocabulary.end(), op);
      if (self != vocabulary.end()) {
        std::size_t pick = rng.uniform_below(vocabulary.size() - 1);
        const auto self_index =
            static_cast<std::size_t>(self - vocabulary.begin());
        if (pick >= self_index) ++pick;
        op = vocabulary[pick];
      } else {
        op = vocabulary[rng.uniform_below(vocabulary.size())];
      }
    }
    if (i) out += "; ";
    out += "node " + std::to_string(edge.target) + " applies " + op +
           " to node " + std::to_string(edge.source);
  }
  return out;
}

std::string mock_recover(std::string_view summary) {
  static const std::regex clause_pattern(
      R"(node\s+(\d+)\s+applies\s+(\S+)\s+to\s+node\s+(\d+))");
  constexpr int kMaxTarget = 1000;  // ignore absurd node indices in junk text

  std::map<int, std::vector<dataset::CellEdge>> by_target;
  int max_target = 1;

  const std::string text(summary);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), clause_pattern);
       it != std::sregex_iterator(); ++it) {
    const std::string target_digits = (*it)[1].str();
    const std::string source_digits = (*it)[3].str();
    if (target_digits.size() > 4 || source_digits.size() > 4) continue;
    const int target = std::stoi(target_digits);
    const int source = std::stoi(source_digits);
    if (target < 2 || target > kMaxTarget || source < 0 || source >= target) {
      continue;  // clause violates the DAG shape: drop it
    }
    auto& edges = by_target[target];
    if (edges.size() >= 2) continue;  // keep the first two per node
    edges.push_back({target, source, (*it)[2].str()});
    max_target = std::max(max_target, target);
  }

  dataset::CellGraph graph;
  graph.num_intermediate_nodes = std::max(1, max_target - 1);
  for (int target = 2; target <= graph.num_intermediate_nodes + 1; ++target) {
    auto& edges = by_target[target];
    while (edges.size() < 2) edges.push_back({target, 0, "op_a"});
    graph.edges.insert(graph.edges.end(), edges.begin(), edges.end());
  }
  std::sort(graph.edges.begin(), graph.edges.end());
  return dataset::serialize_cell_graph(graph);
}

MockBackend::MockBackend(MockOptions options) : options_(std::move(options)) {
  if (options_.fidelity < 0.0 || options_.fidelity > 1.0) {
    throw ConfigError("mock fidelity must be in [0, 1]");
  }
  if (options_.template_bonus < 0.0 || options_.template_bonus > 1.0) {
    throw ConfigError("mock template_bonus must be in [0, 1]");
  }
  if (options_.fidelity + options_.template_bonus > 1.0) {
    throw ConfigError("mock fidelity + template_bonus must be at most 1");
  }
  if (options_.vocabulary.empty()) {
    options_.vocabulary = dataset::default_operator_vocabulary(5);
  }
}

std::string MockBackend::do_chat(const std::vector<ChatMessage>& messages,
                                 const GenerationParams& params) {
  // Ordinal is assigned at submission so concurrent sampling stays ordered;
  // it enters the seed only above temperature 0, which keeps deterministic
  // decoding independent of request order.
  const std::uint64_t ordinal = next_ordinal_.fetch_add(1);
  std::uint64_t seed = mix_seed(
      options_.seed, fnv1a64(chat_request_json(messages, params).dump()));
  if (params.temperature > 0.0) seed = mix_seed(seed, ordinal);
  Rng rng(seed);

  const std::string& query = messages.back().content;
  const bool has_template = messages.size() > 2;

  bool is_cell = true;
  try {
    dataset::parse_cell_graph(query, options_.vocabulary);
  } catch (const Error&) {
    is_cell = false;
  }
  if (is_cell) {
    return mock_summarize(query, options_.vocabulary, options_.fidelity,
                          options_.template_bonus, has_template, rng);
  }
  return mock_recover(query);
}

std::vector<std::vector<double>> MockBackend::do_embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) out.push_back(metrics::lexical_embed(t));
  return out;
}

// --- http ----------------------------------------------------------------------

std::pair<std::string, std::string> split_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("URL must include a scheme: " + url);
  }
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, ""};
  std::string origin = url.substr(0, slash);
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {std::move(origin), std::move(prefix)};
}

namespace {

bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status <= 599);
}

}  // namespace

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) {
    if (const char* env = std::getenv("ANNOLOOP_BASE_URL")) {
      options_.base_url = env;
    }
  }
  if (options_.base_url.empty()) {
    throw ConfigError(
        "http backend needs base_url in config or ANNOLOOP_BASE_URL set");
  }
  split_url(options_.base_url);  // validate the shape up front
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) {
      std::this_thread::sleep_for(d);
    };
  }
}

std::string HttpBackend::post_json(const std::string& path,
                                   const std::string& body) {
  const char* token = std::getenv(options_.auth_env.c_str());
  if (token == nullptr || *token == '\0') throw AuthMissing(options_.auth_env);

  const auto [origin, prefix] = split_url(options_.base_url);
  const std::string full_path = prefix + path;
  const httplib::Headers headers{
      {"Authorization", std::string("Bearer ") + token}};

  const std::size_t attempts = options_.retry_delays.size() + 1;
  std::string last_error;
  int last_status = 0;
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) options_.sleeper(options_.retry_delays[attempt - 1]);
    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(120));
    httplib::Result result =
        client.Post(full_path, headers, body, "application/json");
    if (!result) {
      last_status = 0;
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;  // connection-level failures are retryable
    }
    if (result->status >= 200 && result->status < 300) return result->body;
    if (!retryable_status(result->status)) {
      throw HttpError(result->status, result->body);
    }
    last_status = result->status;
    last_error = result->body;
  }
  throw HttpError(last_status, last_error);
}

std::string HttpBackend::do_chat(const std::vector<ChatMessage>& messages,
                                 const GenerationParams& params) {
  json msgs = json::array();
  for (const ChatMessage& m : messages) {
    msgs.push_back(
        {{"role", std::string(role_name(m.role))}, {"content", m.content}});
  }
  const json body{{"model", params.model},
                  {"messages", std::move(msgs)},
                  {"temperature", params.temperature},
                  {"max_tokens", params.max_tokens}};
  const std::string response = post_json("/chat/completions", body.dump());
  try {
    const json parsed = json::parse(response);
    return parsed.at("choices").at(0).at("message").at("content")
        .get<std::string>();
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("bad chat completion payload: ") +
                            e.what());
  }
}

std::vector<std::vector<double>> HttpBackend::do_embed(
    const std::vector<std::string>& texts) {
  json body{{"input", texts}};
  if (!options_.embed_model.empty()) body["model"] = options_.embed_model;
  const std::string response = post_json("/embeddings", body.dump());
  std::vector<std::vector<double>> vectors;
  try {
    const json parsed = json::parse(response);
    for (const json& item : parsed.at("data")) {
      vectors.push_back(item.at("embedding").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("bad embeddings payload: ") + e.what());
  }
  if (vectors.size() != texts.size()) {
    throw MalformedResponse("embeddings response has " +
                            std::to_string(vectors.size()) + " vectors for " +
                            std::to_string(texts.size()) + " texts");
  }
  return vectors;
}

// --- replay --------------------------------------------------------------------

ReplayBackend::ReplayBackend(std::string cache_path,
                             std::unique_ptr<Backend> fallback)
    : cache_path_(std::move(cache_path)), fallback_(std::move(fallback)) {
  std::ifstream in(cache_path_);
  if (!in) return;  // nothing cached yet; file appears on first write
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_view(line).empty()) continue;
    try {
      json entry = json::parse(line);
      entries_[entry.at("key").get<std::string>()] =
          entry.at("response").dump();
    } catch (const json::exception& e) {
      throw IoError("corrupt cache entry at " + cache_path_ + ":" +
                    std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::uint64_t ReplayBackend::upstream_chat_calls() const {
  return fallback_ ? fallback_->upstream_chat_calls() : 0;
}

std::uint64_t ReplayBackend::upstream_embed_calls() const {
  return fallback_ ? fallback_->upstream_embed_calls() : 0;
}

std::string ReplayBackend::lookup_or_fill(
    const std::string& key, const std::string& request_json,
    const std::function<std::string()>& produce) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  if (!fallback_) throw CacheMiss(key);
  // Fetch outside the lock so concurrent misses overlap.
  std::string payload = produce();

  std::lock_guard<std::mutex> lock(mutex_);
  const auto [it, inserted] = entries_.emplace(key, std::move(payload));
  if (inserted) {
    json entry{{"key", key},
               {"request", json::parse(request_json)},
               {"response", json::parse(it->second)},
               {"timestamp", static_cast<std::int64_t>(std::time(nullptr))}};
    std::ofstream out(cache_path_, std::ios::app);
    if (!out) throw IoError("cannot append to cache file: " + cache_path_);
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw IoError("failed writing cache file: " + cache_path_);
  }
  return it->second;
}

std::string ReplayBackend::do_chat(const std::vector<ChatMessage>& messages,
                                   const GenerationParams& params) {
  const json request = chat_request_json(messages, params);
  const std::string payload = lookup_or_fill(
      cache_key(messages, params), request.dump(),
      [&] { return json(fallback_->chat(messages, params)).dump(); });
  try {
    return json::parse(payload).get<std::string>();
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("cached chat entry is not a string: ") +
                            e.what());
  }
}

std::vector<std::vector<double>> ReplayBackend::do_embed(
    const std::vector<std::string>& texts) {
  const json request = embed_request_json(texts);
  const std::string payload =
      lookup_or_fill(embed_cache_key(texts), request.dump(),
                     [&] { return json(fallback_->embed(texts)).dump(); });
  try {
    return json::parse(payload).get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw MalformedResponse(
        std::string("cached embed entry is not a vector list: ") + e.what());
  }
}

// --- factory -------------------------------------------------------------------

std::string_view backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::mock:
      return "mock";
    case BackendKind::http:
      return "http";
    case BackendKind::replay:
      return "replay";
  }
  return "unknown";
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "mock") return BackendKind::mock;
  if (name == "http") return BackendKind::http;
  if (name == "replay") return BackendKind::replay;
  throw ConfigError("unknown backend kind '" + std::string(name) +
                    "' (expected mock, http, or replay)");
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  std::unique_ptr<Backend> inner;
  switch (spec.kind) {
    case BackendKind::mock:
      inner = std::make_unique<MockBackend>(spec.mock);
      break;
    case BackendKind::http: {
      HttpOptions options;
      options.base_url = spec.base_url;
      options.auth_env = spec.auth_env;
      options.embed_model = spec.embed_model;
      inner = std::make_unique<HttpBackend>(std::move(options));
      break;
    }
    case BackendKind::replay:
      if (spec.cache_path.empty()) {
        throw ConfigError("backend.cache_path is required for kind replay");
      }
      return std::make_unique<ReplayBackend>(spec.cache_path, nullptr);
  }
  if (!spec.cache_path.empty()) {
    return std::make_unique<ReplayBackend>(spec.cache_path, std::move(inner));
  }
  return inner;
}

}  // namespace annoloop::backend
