#pragma once

// ROUGE-1/2/L and alignment-based consistency/relevance.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sumebr/corpus.hpp"
#include "sumebr/error.hpp"

namespace sumebr {

enum class MetricKind { R1, R2, RL, Consistency, Relevance, ConsPlusRel };
enum class AlignerKind { Exact, SoftChar };

inline std::string to_string(MetricKind k) {
  switch (k) {
    case MetricKind::R1: return "R1";
    case MetricKind::R2: return "R2";
    case MetricKind::RL: return "RL";
    case MetricKind::Consistency: return "Cons";
    case MetricKind::Relevance: return "Rel";
    case MetricKind::ConsPlusRel: return "Cons+Rel";
  }
  return "?";
}

inline MetricKind parse_metric_kind(std::string_view s) {
  if (s == "R1") return MetricKind::R1;
  if (s == "R2") return MetricKind::R2;
  if (s == "RL") return MetricKind::RL;
  if (s == "Cons" || s == "Consistency") return MetricKind::Consistency;
  if (s == "Rel" || s == "Relevance") return MetricKind::Relevance;
  if (s == "Cons+Rel" || s == "ConsPlusRel") return MetricKind::ConsPlusRel;
  throw ContractError("unknown metric kind: " + std::string(s));
}

inline std::string to_string(AlignerKind k) { return k == AlignerKind::Exact ? "Exact" : "SoftChar"; }

inline AlignerKind parse_aligner_kind(std::string_view s) {
  if (s == "Exact") return AlignerKind::Exact;
  if (s == "SoftChar") return AlignerKind::SoftChar;
  throw ContractError("unknown aligner kind: " + std::string(s));
}

inline bool is_reference_free(MetricKind k) { return k == MetricKind::Consistency; }

struct MetricScore {
  double value = 0.0;
  MetricKind kind = MetricKind::R1;
};

using AlignmentVector = std::vector<double>;

namespace detail {

inline std::map<std::vector<std::string_view>, int> ngram_counts(const TokenSeq& seq, std::size_t n) {
  std::map<std::vector<std::string_view>, int> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::vector<std::string_view> g(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                    seq.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[g];
  }
  return counts;
}

inline double f1(double overlap, double n_cand, double n_ref) {
  if (overlap <= 0 || n_cand <= 0 || n_ref <= 0) return 0.0;
  const double p = overlap / n_cand;
  const double r = overlap / n_ref;
  return 2 * p * r / (p + r);
}

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::vector<std::string_view> char_grams(std::string_view tok, std::size_t n) {
  std::vector<std::string_view> grams;
  if (tok.size() < n) return grams;
  for (std::size_t i = 0; i + n <= tok.size(); ++i) grams.push_back(tok.substr(i, n));
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

inline double jaccard(const std::vector<std::string_view>& a, const std::vector<std::string_view>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) {
      ++inter;
      ++i;
      ++j;
    } else if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace detail

// Similarity of two tokens under the SoftChar aligner: character 4-gram
// Jaccard, or for tokens shorter than 4 characters exact match (1) else
// character bigram Jaccard.
inline double softchar_similarity(std::string_view a, std::string_view b) {
  if (a == b) return 1.0;
  if (a.size() < 4 || b.size() < 4)
    return detail::jaccard(detail::char_grams(a, 2), detail::char_grams(b, 2));
  return detail::jaccard(detail::char_grams(a, 4), detail::char_grams(b, 4));
}

inline MetricScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n) {
  require(n == 1 || n == 2, "rouge_n: n must be 1 or 2");
  const MetricKind kind = n == 1 ? MetricKind::R1 : MetricKind::R2;
  const auto nn = static_cast<std::size_t>(n);
  if (candidate.size() < nn || reference.size() < nn) return {0.0, kind};
  const auto c = detail::ngram_counts(candidate, nn);
  const auto r = detail::ngram_counts(reference, nn);
  double overlap = 0;
  for (const auto& [g, cnt] : c) {
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(cnt, it->second);
  }
  return {detail::f1(overlap, static_cast<double>(candidate.size() - nn + 1),
                     static_cast<double>(reference.size() - nn + 1)),
          kind};
}

inline MetricScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() || reference.empty()) return {0.0, MetricKind::RL};
  const auto lcs = static_cast<double>(detail::lcs_length(candidate, reference));
  return {detail::f1(lcs, static_cast<double>(candidate.size()), static_cast<double>(reference.size())),
          MetricKind::RL};
}

// Per-token confidence that a[i] is grounded in b. Repeated tokens are
// scored independently.
inline AlignmentVector align(const TokenSeq& a, const TokenSeq& b, AlignerKind aligner) {
  AlignmentVector out;
  out.reserve(a.size());
  if (a.empty()) return out;
  std::unordered_set<std::string_view> types(b.begin(), b.end());
  if (aligner == AlignerKind::Exact) {
    for (const auto& t : a) out.push_back(types.count(t) ? 1.0 : 0.0);
    return out;
  }
  std::unordered_map<std::string_view, double> memo;
  for (const auto& t : a) {
    if (types.count(t)) {
      out.push_back(1.0);
      continue;
    }
    auto it = memo.find(t);
    if (it == memo.end()) {
      double best = 0.0;
      for (std::string_view u : types) best = std::max(best, softchar_similarity(t, u));
      it = memo.emplace(t, best).first;
    }
    out.push_back(it->second);
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline MetricScore consistency(const TokenSeq& x, const TokenSeq& candidate, AlignerKind aligner) {
  if (candidate.empty()) return {0.0, MetricKind::Consistency};
  return {mean(align(candidate, x, aligner)), MetricKind::Consistency};
}

inline MetricScore relevance(const TokenSeq& x, const TokenSeq& reference, const TokenSeq& candidate,
                             AlignerKind aligner) {
  if (x.empty() || reference.empty() || candidate.empty()) return {0.0, MetricKind::Relevance};
  return {mean(align(candidate, x, aligner)) * mean(align(reference, candidate, aligner)),
          MetricKind::Relevance};
}

// Reference is optional only for reference-free kinds.
inline MetricScore score(MetricKind kind, const TokenSeq& x, const std::optional<TokenSeq>& reference,
                         const TokenSeq& candidate, AlignerKind aligner) {
  if (!is_reference_free(kind) && !reference)
    throw ContractError("metric " + to_string(kind) + " needs a reference");
  switch (kind) {
    case MetricKind::R1: return rouge_n(candidate, *reference, 1);
    case MetricKind::R2: return rouge_n(candidate, *reference, 2);
    case MetricKind::RL: return rouge_l(candidate, *reference);
    case MetricKind::Consistency: return consistency(x, candidate, aligner);
    case MetricKind::Relevance: return relevance(x, *reference, candidate, aligner);
    case MetricKind::ConsPlusRel:
      return {consistency(x, candidate, aligner).value + relevance(x, *reference, candidate, aligner).value,
              MetricKind::ConsPlusRel};
  }
  throw ContractError("unknown metric kind");
}

}  // namespace sumebr
