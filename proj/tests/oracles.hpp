#pragma once

// Brute-force reference implementations used to check the library's scoring
// code.  Written directly from the definitions and kept deliberately naive:
// string-keyed maps, recursive LCS, long-double accumulation.  Do not
// "optimize" these or sync them with the library -- their value is that they
// were derived independently.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// n-grams of `toks` as single strings with an unlikely separator.
inline std::vector<std::string> ngrams(const std::vector<std::string>& toks,
                                       std::size_t n) {
  std::vector<std::string> out;
  if (n == 0 || toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g;
    for (std::size_t j = 0; j < n; ++j) {
      if (j > 0) g += '\x1f';
      g += toks[i + j];
    }
    out.push_back(g);
  }
  return out;
}

// Clipped n-gram matches: each candidate n-gram may match at most as many
// times as it appears in the reference.
inline std::pair<long, long> clipped(const std::vector<std::string>& cand,
                                     const std::vector<std::string>& ref,
                                     std::size_t n) {
  const std::vector<std::string> c = ngrams(cand, n);
  const std::vector<std::string> r = ngrams(ref, n);
  std::map<std::string, long> available;
  for (const std::string& g : r) available[g] += 1;
  long matches = 0;
  for (const std::string& g : c) {
    if (available[g] > 0) {
      available[g] -= 1;
      matches += 1;
    }
  }
  return {matches, static_cast<long>(c.size())};
}

// Sentence BLEU: geometric mean of clipped precisions for n = 1..max_n times
// a brevity penalty.  p_1 unsmoothed (no unigram matches means 0); higher
// orders get add-one smoothing only when their match count is 0; orders where
// the candidate has no n-grams at all contribute nothing to the mean.
inline double bleu(const std::vector<std::string>& cand,
                   const std::vector<std::string>& ref, std::size_t max_n) {
  if (cand.empty()) return 0.0;
  std::vector<long double> log_precisions;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto [matches, total] = clipped(cand, ref, n);
    if (total == 0) continue;
    long double p;
    if (n == 1) {
      if (matches == 0) return 0.0;
      p = static_cast<long double>(matches) / total;
    } else if (matches == 0) {
      p = 1.0L / (total + 1);
    } else {
      p = static_cast<long double>(matches) / total;
    }
    log_precisions.push_back(std::log(p));
  }
  if (log_precisions.empty()) return 0.0;
  long double sum = 0.0L;
  for (long double lp : log_precisions) sum += lp;
  const long double mean = sum / static_cast<long double>(log_precisions.size());
  long double bp = 1.0L;
  if (cand.size() < ref.size()) {
    bp = std::exp(1.0L - static_cast<long double>(ref.size()) / cand.size());
  }
  return static_cast<double>(bp * std::exp(mean));
}

// LCS length by memoized recursion on (i, j) prefixes.
inline std::size_t lcs(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  const std::function<std::size_t(std::size_t, std::size_t)> go =
      [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0 || j == 0) return 0;
    const auto key = std::make_pair(i, j);
    const auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    std::size_t value;
    if (a[i - 1] == b[j - 1]) {
      value = go(i - 1, j - 1) + 1;
    } else {
      value = std::max(go(i - 1, j), go(i, j - 1));
    }
    memo[key] = value;
    return value;
  };
  return go(a.size(), b.size());
}

// LCS F-measure: F = (1 + beta^2) P R / (R + beta^2 P).
inline double rouge_l(const std::vector<std::string>& cand,
                      const std::vector<std::string>& ref, double beta) {
  if (cand.empty() || ref.empty()) return 0.0;
  const long double l = static_cast<long double>(lcs(cand, ref));
  if (l == 0.0L) return 0.0;
  const long double p = l / cand.size();
  const long double r = l / ref.size();
  const long double b2 = static_cast<long double>(beta) * beta;
  return static_cast<double>((1.0L + b2) * p * r / (r + b2 * p));
}

// Character-trigram embedding: FNV-1a of each 3-byte window mod 4096, counts
// L2-normalized.  Shorter than 3 bytes gives all zeros.
inline std::vector<long double> trigram_embed(const std::string& text) {
  std::vector<long double> v(4096, 0.0L);
  if (text.size() < 3) return v;
  for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t j = 0; j < 3; ++j) {
      h ^= static_cast<unsigned char>(text[i + j]);
      h *= 1099511628211ULL;
    }
    v[h % 4096] += 1.0L;
  }
  long double norm_sq = 0.0L;
  for (long double x : v) norm_sq += x * x;
  const long double norm = std::sqrt(norm_sq);
  if (norm > 0.0L) {
    for (long double& x : v) x /= norm;
  }
  return v;
}

inline double trigram_cosine(const std::string& a, const std::string& b) {
  const std::vector<long double> u = trigram_embed(a);
  const std::vector<long double> v = trigram_embed(b);
  long double dot = 0.0L, nu = 0.0L, nv = 0.0L;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0L || nv == 0.0L) return 0.0;
  return static_cast<double>(dot / (std::sqrt(nu) * std::sqrt(nv)));
}

// Mean and standard error of a sample (SE = sample std dev / sqrt(n)).
struct MeanSe {
  double mean = 0.0;
  bool has_se = false;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  long double sum = 0.0L;
  for (double x : xs) sum += x;
  out.mean = static_cast<double>(sum / xs.size());
  if (xs.size() >= 2) {
    long double sq = 0.0L;
    for (double x : xs) {
      const long double d = x - out.mean;
      sq += d * d;
    }
    const long double stdev = std::sqrt(sq / (xs.size() - 1));
    out.has_se = true;
    out.se = static_cast<double>(stdev / std::sqrt(static_cast<long double>(xs.size())));
  }
  return out;
}

}  // namespace oracle
