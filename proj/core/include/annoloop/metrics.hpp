#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "annoloop/dataset.hpp"

namespace annoloop::metrics {

// --- primitive scores --------------------------------------------------------

// Longest common subsequence length over token sequences.
std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b);

// LCS-based F-measure: F = (1 + beta^2) P R / (R + beta^2 P) with
// P = LCS/|candidate|, R = LCS/|reference|.  0 when either side is empty or
// there is no common subsequence.
double rouge_l(std::span<const std::string> candidate,
               std::span<const std::string> reference, double beta = 1.0);

// Multiset of n-grams (n >= 1).
std::map<std::vector<std::string>, std::size_t> ngram_counts(
    std::span<const std::string> tokens, std::size_t n);

// Sentence BLEU with brevity penalty and clipped n-gram precision for
// n = 1..max_n.  p_1 is unsmoothed; higher orders use add-one smoothing only
// when they have zero matches; orders with no candidate n-grams are left out
// of the geometric mean.  0 when the candidate is empty or p_1 = 0.
double bleu_smoothed(std::span<const std::string> candidate,
                     std::span<const std::string> reference,
                     std::size_t max_n = 4);

// L2-normalized character-trigram counts hashed into 4096 buckets (FNV-1a).
// Text shorter than 3 bytes gives the zero vector.
std::vector<double> lexical_embed(std::string_view text);

// Cosine in [-1, 1]; 0 when either vector is zero.  Throws DimensionMismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// --- composite scoring ---------------------------------------------------------

enum class MetricKind { bleu, rouge_l, sts_cosine, bert_cosine };

std::string_view metric_name(MetricKind kind);
MetricKind parse_metric_name(std::string_view name);
bool is_embedding_metric(MetricKind kind);

enum class Tokenizer { whitespace, smiles, chars };

std::string_view tokenizer_name(Tokenizer t);
Tokenizer parse_tokenizer_name(std::string_view name);

// Split text for the n-gram metrics.  `smiles` splits on whitespace first and
// then tokenizes each piece leniently (an unclosed bracket group becomes one
// token instead of an error); `chars` makes each non-space byte a token.
std::vector<std::string> tokenize(std::string_view text, Tokenizer t);

// Batch text embedder: one input string per output vector, all vectors the
// same dimension.  An empty function means the built-in lexical_embed.
using Embedder =
    std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

struct MetricConfig {
  std::vector<MetricKind> enabled = {MetricKind::bleu, MetricKind::rouge_l};
  std::map<std::string, double> weights;  // by metric name; empty = equal
  Tokenizer tokenizer = Tokenizer::whitespace;
  std::size_t bleu_max_n = 4;
  double rouge_beta = 1.0;
};

// Weights normalized to sum 1 over the enabled metrics.  Throws ConfigError
// when no metric is enabled, a weight names a disabled metric, a weight is
// negative, or all weights are zero.
std::map<std::string, double> normalized_weights(const MetricConfig& cfg);

struct CompositeScore {
  std::map<std::string, double> per_metric;  // metric name -> value in [0, 1]
  std::map<std::string, double> weights;     // normalized weights used
  double composite = 0.0;                    // weighted sum, clamped to [0, 1]
};

// Similarity of two texts under an embedder (lexical_embed when empty).
// Zero-vector rule: if either embedding is the zero vector, the result is 1
// when the texts are byte-equal and 0 otherwise.  Negative cosine is kept
// here; score() clamps it to 0 before weighting.
double embedding_similarity(std::string_view a, std::string_view b,
                            const Embedder& embedder = {});

// Score a recovered text against the record it should reconstruct.  The
// candidate is the recovered text, the reference is the record's canonical
// text.  Embedding metrics are mapped to [0, 1] via max(0, cosine).
CompositeScore score(const dataset::Record& original,
                     std::string_view recovered_text, const MetricConfig& cfg,
                     const Embedder& embedder = {});

}  // namespace annoloop::metrics
