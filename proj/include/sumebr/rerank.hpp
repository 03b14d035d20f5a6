#pragma once

// Candidate selection at inference time.

#include <optional>
#include <string>
#include <vector>

#include "sumebr/ebr.hpp"
#include "sumebr/generator.hpp"
#include "sumebr/metrics.hpp"
#include "sumebr/rng.hpp"

namespace sumebr {

struct RerankResult {
  std::string doc_id;
  std::string method;  // EBR[kind], Oracle[kind], RefFree[kind], TopBeam, Random(seed)
  std::size_t chosen_index = 0;
  Hypothesis chosen;
  std::vector<double> scores;  // energies for EBR, metric values otherwise
};

namespace detail {

// Best index under `better(score_a, score_b)`, ties broken by generator
// logprob descending, then index ascending.
template <typename Better>
std::size_t select_index(const std::vector<double>& scores, const CandidateSet& set, Better better) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (better(scores[i], scores[best])) {
      best = i;
    } else if (scores[i] == scores[best] &&
               set.candidates[i].logprob > set.candidates[best].logprob) {
      best = i;
    }
  }
  return best;
}

inline RerankResult make_result(const CandidateSet& set, std::string method, std::size_t idx,
                                std::vector<double> scores) {
  return {set.doc_id, std::move(method), idx, set.candidates[idx], std::move(scores)};
}

}  // namespace detail

// Argmin energy over precomputed energies (one per candidate).
inline RerankResult rerank_by_energies(const CandidateSet& set, std::vector<double> energies,
                                       const std::string& method = "EBR") {
  require(!set.candidates.empty(), "rerank: empty candidate set");
  require(energies.size() == set.candidates.size(), "rerank: one energy per candidate required");
  const std::size_t idx = detail::select_index(energies, set, [](double a, double b) { return a < b; });
  return detail::make_result(set, method, idx, std::move(energies));
}

// The reference never reaches this function.
inline RerankResult rerank_ebr(const EnergyModel& model, const TokenSeq& x, const CandidateSet& set,
                               const ConditionalLM& lm, int max_len, const std::string& method = "EBR") {
  require(!set.candidates.empty(), "rerank_ebr: empty candidate set");
  std::vector<double> e;
  e.reserve(set.candidates.size());
  for (const auto& h : set.candidates) e.push_back(energy(model, extract_features(x, h, lm, max_len)));
  return rerank_by_energies(set, std::move(e), method);
}

inline RerankResult rerank_by_scores(const CandidateSet& set, std::vector<double> scores, const std::string& method) {
  require(!set.candidates.empty(), "rerank: empty candidate set");
  require(scores.size() == set.candidates.size(), "rerank: one score per candidate required");
  const std::size_t idx = detail::select_index(scores, set, [](double a, double b) { return a > b; });
  return detail::make_result(set, method, idx, std::move(scores));
}

inline std::vector<double> metric_scores(MetricKind kind, const TokenSeq& x, const std::optional<TokenSeq>& reference,
                                         const CandidateSet& set, AlignerKind aligner) {
  std::vector<double> s;
  s.reserve(set.candidates.size());
  for (const auto& h : set.candidates) s.push_back(score(kind, x, reference, h.tokens, aligner).value);
  return s;
}

inline RerankResult rerank_oracle(MetricKind kind, const TokenSeq& x, const std::optional<TokenSeq>& reference,
                                  const CandidateSet& set, AlignerKind aligner) {
  require(!set.candidates.empty(), "rerank_oracle: empty candidate set");
  if (!is_reference_free(kind) && !reference)
    throw ContractError("rerank_oracle: metric " + to_string(kind) + " needs a reference");
  return rerank_by_scores(set, metric_scores(kind, x, reference, set, aligner), "Oracle[" + to_string(kind) + "]");
}

inline RerankResult rerank_reference_free(MetricKind kind, const TokenSeq& x, const CandidateSet& set,
                                          AlignerKind aligner) {
  if (!is_reference_free(kind))
    throw ContractError("rerank_reference_free: metric " + to_string(kind) + " is reference-dependent");
  require(!set.candidates.empty(), "rerank_reference_free: empty candidate set");
  return rerank_by_scores(set, metric_scores(kind, x, std::nullopt, set, aligner),
                          "RefFree[" + to_string(kind) + "]");
}

inline RerankResult rerank_top_beam(const CandidateSet& set) {
  require(!set.candidates.empty(), "rerank_top_beam: empty candidate set");
  return detail::make_result(set, "TopBeam", 0, {});
}

inline RerankResult rerank_random(const CandidateSet& set, Rng& rng, std::uint64_t seed) {
  require(!set.candidates.empty(), "rerank_random: empty candidate set");
  const auto idx = static_cast<std::size_t>(uniform_index(rng, set.candidates.size()));
  return detail::make_result(set, "Random(" + std::to_string(seed) + ")", idx, {});
}

}  // namespace sumebr
