#include "annoloop/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "annoloop/errors.hpp"
#include "annoloop/rng.hpp"
#include "text_util.hpp"

namespace annoloop::metrics {

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      cur[j + 1] = a[i] == b[j] ? prev[j] + 1 : std::max(prev[j + 1], cur[j]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> candidate,
               std::span<const std::string> reference, double beta) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / static_cast<double>(candidate.size());
  const double recall = lcs / static_cast<double>(reference.size());
  const double beta2 = beta * beta;
  return (1.0 + beta2) * precision * recall / (recall + beta2 * precision);
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(
    std::span<const std::string> tokens, std::size_t n) {
  if (n < 1) throw SemanticError("n-gram order must be at least 1");
  std::map<std::vector<std::string>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string> gram(tokens.begin() + i, tokens.begin() + i + n);
    ++counts[std::move(gram)];
  }
  return counts;
}

double bleu_smoothed(std::span<const std::string> candidate,
                     std::span<const std::string> reference,
                     std::size_t max_n) {
  if (max_n < 1) throw SemanticError("bleu max_n must be at least 1");
  if (candidate.empty()) return 0.0;

  double log_sum = 0.0;
  std::size_t included_orders = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (candidate.size() < n) continue;  // no candidate n-grams at this order
    const std::size_t total = candidate.size() - n + 1;
    const auto cand_counts = ngram_counts(candidate, n);
    const auto ref_counts = ngram_counts(reference, n);
    std::size_t matches = 0;
    for (const auto& [gram, count] : cand_counts) {
      const auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(count, it->second);
    }
    double precision;
    if (n == 1) {
      if (matches == 0) return 0.0;  // unigram precision is never smoothed
      precision = static_cast<double>(matches) / static_cast<double>(total);
    } else if (matches == 0) {
      precision = 1.0 / static_cast<double>(total + 1);  // add-one smoothing
    } else {
      precision = static_cast<double>(matches) / static_cast<double>(total);
    }
    log_sum += std::log(precision);
    ++included_orders;
  }

  const double geo_mean = std::exp(log_sum / static_cast<double>(included_orders));
  const double brevity =
      std::min(1.0, std::exp(1.0 - static_cast<double>(reference.size()) /
                                       static_cast<double>(candidate.size())));
  return geo_mean * brevity;
}

std::vector<double> lexical_embed(std::string_view text) {
  constexpr std::size_t kBuckets = 4096;
  std::vector<double> v(kBuckets, 0.0);
  if (text.size() < 3) return v;  // zero vector
  for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
    v[fnv1a64(text.substr(i, 3)) % kBuckets] += 1.0;
  }
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  for (double& x : v) x /= norm;
  return v;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionMismatch(u.size(), v.size());
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::string_view metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::bleu:
      return "bleu";
    case MetricKind::rouge_l:
      return "rouge_l";
    case MetricKind::sts_cosine:
      return "sts_cosine";
    case MetricKind::bert_cosine:
      return "bert_cosine";
  }
  return "unknown";
}

MetricKind parse_metric_name(std::string_view name) {
  if (name == "bleu") return MetricKind::bleu;
  if (name == "rouge_l") return MetricKind::rouge_l;
  if (name == "sts_cosine") return MetricKind::sts_cosine;
  if (name == "bert_cosine") return MetricKind::bert_cosine;
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (expected bleu, rouge_l, sts_cosine, or bert_cosine)");
}

bool is_embedding_metric(MetricKind kind) {
  return kind == MetricKind::sts_cosine || kind == MetricKind::bert_cosine;
}

std::string_view tokenizer_name(Tokenizer t) {
  switch (t) {
    case Tokenizer::whitespace:
      return "whitespace";
    case Tokenizer::smiles:
      return "smiles";
    case Tokenizer::chars:
      return "char";
  }
  return "unknown";
}

Tokenizer parse_tokenizer_name(std::string_view name) {
  if (name == "whitespace") return Tokenizer::whitespace;
  if (name == "smiles") return Tokenizer::smiles;
  if (name == "char") return Tokenizer::chars;
  throw ConfigError("unknown tokenizer '" + std::string(name) +
                    "' (expected whitespace, smiles, or char)");
}

namespace {

// Like tokenize_smiles but never throws: an unclosed bracket group runs to
// the end of the piece and becomes a single token.  Candidate texts come
// from a language model, so scoring must absorb arbitrary junk.
void tokenize_smiles_lenient(std::string_view text,
                             std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '[') {
      const std::size_t close = text.find(']', i);
      const std::size_t end = close == std::string_view::npos ? text.size()
                                                              : close + 1;
      out.emplace_back(text.substr(i, end - i));
      i = end;
    } else if (c == 'C' && i + 1 < text.size() && text[i + 1] == 'l') {
      out.emplace_back("Cl");
      i += 2;
    } else if (c == 'B' && i + 1 < text.size() && text[i + 1] == 'r') {
      out.emplace_back("Br");
      i += 2;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, Tokenizer t) {
  switch (t) {
    case Tokenizer::whitespace:
      return detail::split_whitespace(text);
    case Tokenizer::smiles: {
      std::vector<std::string> out;
      for (const std::string& piece : detail::split_whitespace(text)) {
        tokenize_smiles_lenient(piece, out);
      }
      return out;
    }
    case Tokenizer::chars: {
      std::vector<std::string> out;
      for (char c : text) {
        if (!detail::is_space(c)) out.emplace_back(1, c);
      }
      return out;
    }
  }
  return {};
}

std::map<std::string, double> normalized_weights(const MetricConfig& cfg) {
  if (cfg.enabled.empty()) {
    throw ConfigError("at least one metric must be enabled");
  }
  std::map<std::string, double> weights;
  for (MetricKind kind : cfg.enabled) {
    weights.emplace(std::string(metric_name(kind)), 1.0);
  }
  if (weights.size() != cfg.enabled.size()) {
    throw ConfigError("enabled metrics must be distinct");
  }
  if (!cfg.weights.empty()) {
    for (const auto& [name, value] : cfg.weights) {
      if (!weights.contains(name)) {
        throw ConfigError("weight given for metric '" + name +
                          "' which is not enabled");
      }
      if (value < 0.0) {
        throw ConfigError("weight for metric '" + name +
                          "' must be non-negative");
      }
    }
    for (auto& [name, value] : weights) {
      const auto it = cfg.weights.find(name);
      value = it == cfg.weights.end() ? 0.0 : it->second;
    }
  }
  double sum = 0.0;
  for (const auto& [name, value] : weights) sum += value;
  if (sum <= 0.0) throw ConfigError("metric weights must not all be zero");
  for (auto& [name, value] : weights) value /= sum;
  return weights;
}

double embedding_similarity(std::string_view a, std::string_view b,
                            const Embedder& embedder) {
  std::vector<std::vector<double>> vecs;
  if (embedder) {
    vecs = embedder({std::string(a), std::string(b)});
    if (vecs.size() != 2) {
      throw MalformedResponse("embedder returned " +
                              std::to_string(vecs.size()) +
                              " vectors for 2 texts");
    }
  } else {
    vecs.push_back(lexical_embed(a));
    vecs.push_back(lexical_embed(b));
  }
  const auto is_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  if (is_zero(vecs[0]) || is_zero(vecs[1])) return a == b ? 1.0 : 0.0;
  return cosine_similarity(vecs[0], vecs[1]);
}

CompositeScore score(const dataset::Record& original,
                     std::string_view recovered_text, const MetricConfig& cfg,
                     const Embedder& embedder) {
  CompositeScore result;
  result.weights = normalized_weights(cfg);

  std::vector<std::string> candidate;
  std::vector<std::string> reference;
  const bool needs_tokens =
      std::any_of(cfg.enabled.begin(), cfg.enabled.end(),
                  [](MetricKind k) { return !is_embedding_metric(k); });
  if (needs_tokens) {
    candidate = tokenize(recovered_text, cfg.tokenizer);
    reference = tokenize(original.canonical_text, cfg.tokenizer);
  }

  for (MetricKind kind : cfg.enabled) {
    double value = 0.0;
    switch (kind) {
      case MetricKind::bleu:
        value = bleu_smoothed(candidate, reference, cfg.bleu_max_n);
        break;
      case MetricKind::rouge_l:
        value = rouge_l(candidate, reference, cfg.rouge_beta);
        break;
      case MetricKind::sts_cosine:
      case MetricKind::bert_cosine:
        value = std::max(
            0.0, embedding_similarity(recovered_text, original.canonical_text,
                                      embedder));
        break;
    }
    result.per_metric.emplace(std::string(metric_name(kind)), value);
  }

  double composite = 0.0;
  for (const auto& [name, value] : result.per_metric) {
    composite += result.weights.at(name) * value;
  }
  result.composite = std::clamp(composite, 0.0, 1.0);
  return result;
}

}  // namespace annoloop::metrics
