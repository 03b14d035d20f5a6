#pragma once

// Experiment harness: system reports, paired permutation tests, sweeps,
// cross-model transfer, energy histograms and scorer timing.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sumebr/corpus.hpp"
#include "sumebr/ebr.hpp"
#include "sumebr/generator.hpp"
#include "sumebr/metrics.hpp"
#include "sumebr/rerank.hpp"

namespace sumebr {

struct SystemReport {
  std::string name;
  std::vector<MetricKind> kinds;
  std::vector<double> means;                   // one per kind
  std::vector<std::vector<double>> per_doc;    // [kind][doc], corpus order
  std::vector<std::string> doc_ids;

  double mean_of(MetricKind k) const {
    for (std::size_t i = 0; i < kinds.size(); ++i)
      if (kinds[i] == k) return means[i];
    throw ContractError("report '" + name + "' has no column " + to_string(k));
  }
  const std::vector<double>& scores_of(MetricKind k) const {
    for (std::size_t i = 0; i < kinds.size(); ++i)
      if (kinds[i] == k) return per_doc[i];
    throw ContractError("report '" + name + "' has no column " + to_string(k));
  }
};

struct SignificanceResult {
  double p_value = 1.0;
  bool significant = false;
  std::uint64_t n_resamples = 0;
  bool exact = false;
};

inline const std::vector<MetricKind>& report_kinds() {
  static const std::vector<MetricKind> kinds{MetricKind::R1, MetricKind::R2, MetricKind::RL,
                                             MetricKind::Consistency, MetricKind::Relevance};
  return kinds;
}

// Scores one chosen summary per document of `corpus`.
inline SystemReport evaluate_system(const std::string& name, const std::map<std::string, TokenSeq>& choices,
                                    const Corpus& corpus, const std::vector<MetricKind>& kinds,
                                    AlignerKind aligner) {
  SystemReport r;
  r.name = name;
  r.kinds = kinds;
  r.per_doc.assign(kinds.size(), {});
  for (const auto& d : corpus.documents) {
    auto it = choices.find(d.id);
    if (it == choices.end()) throw ContractError("evaluate_system: no choice for document '" + d.id + "'");
    r.doc_ids.push_back(d.id);
    for (std::size_t k = 0; k < kinds.size(); ++k)
      r.per_doc[k].push_back(score(kinds[k], d.source, d.reference, it->second, aligner).value);
  }
  for (const auto& col : r.per_doc) r.means.push_back(mean(col));
  return r;
}

inline std::map<std::string, TokenSeq> choices_of(const std::vector<RerankResult>& results) {
  std::map<std::string, TokenSeq> out;
  for (const auto& r : results) out[r.doc_id] = r.chosen.tokens;
  return out;
}

// Paired two-sided sign-flip test on the mean difference. Exhaustive over
// all 2^n sign assignments when n <= exact_limit (at most 20), otherwise
// n_resamples seeded random flips with p = (c + 1) / (n_resamples + 1).
inline SignificanceResult permutation_test(const std::vector<double>& a, const std::vector<double>& b,
                                           std::uint64_t n_resamples, double alpha, std::uint64_t seed,
                                           std::size_t exact_limit = 20) {
  require(a.size() == b.size(), "permutation_test: length mismatch");
  require(a.size() >= 2, "permutation_test: need at least 2 pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    observed += d[i];
  }
  observed = std::abs(observed);
  // Relative slack so that permutations equal to the observed statistic up
  // to rounding count as at-least-as-extreme.
  double scale = 0;
  for (double x : d) scale += std::abs(x);
  const double threshold = observed - 1e-9 * std::max(scale, 1e-300);

  SignificanceResult r;
  if (n <= std::min<std::size_t>(exact_limit, 20)) {
    r.exact = true;
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t count = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1U) ? -d[i] : d[i];
      if (std::abs(s) >= threshold) ++count;
    }
    r.n_resamples = total;
    r.p_value = static_cast<double>(count) / static_cast<double>(total);
  } else {
    require(n_resamples >= 1, "permutation_test: n_resamples must be >= 1");
    Rng rng(mix_seed(seed, 0x9e57));
    std::uint64_t count = 0;
    for (std::uint64_t it = 0; it < n_resamples; ++it) {
      double s = 0;
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % 64 == 0) bits = rng();
        s += (bits & 1U) ? -d[i] : d[i];
        bits >>= 1;
      }
      if (std::abs(s) >= threshold) ++count;
    }
    r.n_resamples = n_resamples;
    r.p_value = static_cast<double>(count + 1) / static_cast<double>(n_resamples + 1);
  }
  if (observed == 0) r.p_value = 1.0;
  r.significant = r.p_value < alpha;
  return r;
}

// Kendall tau-b; NaN when either side is constant.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), "kendall_tau_b: size mismatch");
  double concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++ties_x;
      } else if (dy == 0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const double denom = std::sqrt((concordant + discordant + ties_x) * (concordant + discordant + ties_y));
  if (denom == 0) return std::numeric_limits<double>::quiet_NaN();
  return (concordant - discordant) / denom;
}

// Per-document energies, metric labels and generator logprobs of one
// candidate pool; the unit every selection rule below operates on.
struct ScoredPool {
  const Document* doc = nullptr;
  CandidateSet candidates;
  std::vector<double> energies;
  std::vector<double> target;  // target metric per candidate
};

inline ScoredPool score_pool(const EnergyModel& model, const ConditionalLM& lm, const Document& doc,
                             CandidateSet set, MetricKind target, AlignerKind aligner, int max_len) {
  ScoredPool p;
  p.doc = &doc;
  for (const auto& h : set.candidates) {
    p.energies.push_back(energy(model, extract_features(doc.source, h, lm, max_len)));
    p.target.push_back(score(target, doc.source, doc.reference, h.tokens, aligner).value);
  }
  p.candidates = std::move(set);
  return p;
}

// Restricts a pool to its first k candidates.
inline ScoredPool prefix(const ScoredPool& p, std::size_t k) {
  ScoredPool q;
  q.doc = p.doc;
  const std::size_t n = std::min(k, p.candidates.candidates.size());
  q.candidates.doc_id = p.candidates.doc_id;
  q.candidates.candidates.assign(p.candidates.candidates.begin(),
                                 p.candidates.candidates.begin() + static_cast<std::ptrdiff_t>(n));
  q.energies.assign(p.energies.begin(), p.energies.begin() + static_cast<std::ptrdiff_t>(n));
  q.target.assign(p.target.begin(), p.target.begin() + static_cast<std::ptrdiff_t>(n));
  return q;
}

inline double ebr_choice_score(const ScoredPool& p) {
  return p.target[rerank_by_energies(p.candidates, p.energies).chosen_index];
}
inline double oracle_choice_score(const ScoredPool& p) {
  return p.target[rerank_by_scores(p.candidates, p.target, "Oracle").chosen_index];
}

struct SelectionRow {
  std::string label;  // "k=8" or "w=0.8"
  double param = 0;
  std::vector<double> ebr, oracle, top_beam;  // per document
  double ebr_mean() const { return mean(ebr); }
  double oracle_mean() const { return mean(oracle); }
  double top_beam_mean() const { return mean(top_beam); }
};

// One beams = max(k) run per document; every k uses the first k candidates
// of that run, so the candidate pools are nested.
inline std::vector<SelectionRow> candidate_sweep(const EnergyModel& model, const ConditionalLM& lm,
                                                 const Corpus& test, const std::vector<int>& k_values,
                                                 MetricKind target, AlignerKind aligner, GenConfig cfg) {
  require(!k_values.empty(), "candidate_sweep: no k values");
  int k_max = 0;
  for (int k : k_values) {
    require(k >= 1, "candidate_sweep: k must be >= 1");
    require(k <= 32, "candidate_sweep: k must be <= 32");
    k_max = std::max(k_max, k);
  }
  cfg.beams = k_max;
  cfg.k = k_max;
  cfg.groups = 1;
  cfg.diversity_weight = 0.0;
  std::vector<ScoredPool> pools;
  for (const auto& d : test.documents)
    pools.push_back(score_pool(model, lm, d, generate(lm, d, cfg), target, aligner, cfg.max_len));
  std::vector<SelectionRow> rows;
  for (int k : k_values) {
    SelectionRow row;
    row.label = "k=" + std::to_string(k);
    row.param = k;
    for (const auto& p : pools) {
      const ScoredPool q = prefix(p, static_cast<std::size_t>(k));
      row.ebr.push_back(ebr_choice_score(q));
      row.oracle.push_back(oracle_choice_score(q));
      row.top_beam.push_back(q.target[0]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<SelectionRow> diversity_sweep(const ConditionalLM& lm, const Corpus& docs,
                                                 const std::vector<double>& weights, const EnergyModel& model,
                                                 MetricKind target, AlignerKind aligner, GenConfig cfg) {
  for (double w : weights) require(w >= 0, "diversity_sweep: negative diversity weight");
  std::vector<SelectionRow> rows;
  for (double w : weights) {
    cfg.diversity_weight = w;
    SelectionRow row;
    char buf[32];
    std::snprintf(buf, sizeof buf, "w=%g", w);
    row.label = buf;
    row.param = w;
    for (const auto& d : docs.documents) {
      const ScoredPool p = score_pool(model, lm, d, generate(lm, d, cfg), target, aligner, cfg.max_len);
      row.ebr.push_back(ebr_choice_score(p));
      row.oracle.push_back(oracle_choice_score(p));
      row.top_beam.push_back(p.target[0]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct CrossModelResult {
  SystemReport top_beam;  // generator B without re-ranking
  SystemReport ebr;       // model trained on A re-ranking B's candidates
  std::vector<RerankResult> ebr_choices;
};

inline bool same_generator(const ConditionalLM& a, const ConditionalLM& b) {
  return a.copy_weight == b.copy_weight && a.smoothing == b.smoothing && a.vocab.tokens == b.vocab.tokens &&
         a.successors == b.successors;
}

inline CrossModelResult cross_model_eval(const EnergyModel& model, const ConditionalLM& lm_a,
                                         const ConditionalLM& lm_b, const Corpus& test,
                                         const std::vector<MetricKind>& kinds, AlignerKind aligner,
                                         const GenConfig& cfg, const std::string& ebr_name = "EBR") {
  if (same_generator(lm_a, lm_b)) warn("cross_model_eval: generators A and B are identical");
  std::vector<RerankResult> top, ebr;
  for (const auto& d : test.documents) {
    const CandidateSet set = generate(lm_b, d, cfg);
    top.push_back(rerank_top_beam(set));
    // Features use the re-ranked candidates' own generator.
    ebr.push_back(rerank_ebr(model, d.source, set, lm_b, cfg.max_len, ebr_name));
  }
  CrossModelResult r;
  r.top_beam = evaluate_system("B:TopBeam", choices_of(top), test, kinds, aligner);
  r.ebr = evaluate_system("B:" + ebr_name, choices_of(ebr), test, kinds, aligner);
  r.ebr_choices = std::move(ebr);
  return r;
}

struct HistogramBin {
  double low, high;
  std::size_t count;
};

// Bin 0 is underflow (-inf, lo), the last bin is overflow [hi, inf); interior
// bins are [low, high) except that the last interior bin includes hi.
inline std::vector<HistogramBin> energy_histogram(const std::vector<double>& values, int n_bins, double lo,
                                                  double hi) {
  require(n_bins >= 1, "energy_histogram: n_bins must be >= 1");
  require(lo < hi, "energy_histogram: inverted or empty range");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<HistogramBin> bins;
  bins.push_back({-inf, lo, 0});
  const double width = (hi - lo) / n_bins;
  for (int i = 0; i < n_bins; ++i)
    bins.push_back({lo + width * i, i + 1 == n_bins ? hi : lo + width * (i + 1), 0});
  bins.push_back({hi, inf, 0});
  for (double v : values) {
    if (v < lo) {
      ++bins.front().count;
    } else if (v > hi) {
      ++bins.back().count;
    } else {
      int b = static_cast<int>((v - lo) / width);
      b = std::clamp(b, 0, n_bins - 1);
      ++bins[static_cast<std::size_t>(b) + 1].count;
    }
  }
  return bins;
}

struct TimingRow {
  std::string scorer;
  double seconds = 0;
  double relative = 0;  // seconds / EBR seconds
};

struct TimingPair {
  const TokenSeq* source;
  Hypothesis summary;
};

// Wall-clock of scoring each (document, summary) pair on its own, one pair
// at a time, normalized to the EBR scorer. Each scorer is timed `rounds`
// times and the fastest round is kept.
inline std::vector<TimingRow> timing_report(const EnergyModel& model, const ConditionalLM& lm,
                                            const std::vector<TimingPair>& pairs, int max_len, int rounds = 3) {
  require(!pairs.empty(), "timing_report: no pairs");
  using clock = std::chrono::steady_clock;
  volatile double sink = 0;
  auto time_it = [&](auto&& fn) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, rounds); ++r) {
      const auto t0 = clock::now();
      for (const auto& p : pairs) sink = sink + fn(p);
      best = std::min(best, std::chrono::duration<double>(clock::now() - t0).count());
    }
    return best;
  };
  std::vector<TimingRow> rows;
  rows.push_back({"EBR", time_it([&](const TimingPair& p) {
                    return energy(model, extract_features(*p.source, p.summary, lm, max_len));
                  }), 0});
  rows.push_back({"Cons[Exact]", time_it([&](const TimingPair& p) {
                    return consistency(*p.source, p.summary.tokens, AlignerKind::Exact).value;
                  }), 0});
  rows.push_back({"Cons[SoftChar]", time_it([&](const TimingPair& p) {
                    return consistency(*p.source, p.summary.tokens, AlignerKind::SoftChar).value;
                  }), 0});
  const double base = std::max(rows[0].seconds, 1e-12);
  for (auto& r : rows) {
    r.seconds = std::max(r.seconds, 1e-12);
    r.relative = r.seconds / base;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string fmt_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string report_csv(const std::vector<SystemReport>& systems) {
  std::ostringstream out;
  out << "system";
  if (!systems.empty())
    for (auto k : systems.front().kinds) out << ',' << to_string(k);
  out << '\n';
  for (const auto& s : systems) {
    out << s.name;
    for (double m : s.means) out << ',' << fmt_fixed(m);
    out << '\n';
  }
  return out.str();
}

// Scores as percentages, like the usual summarization tables.
inline std::string report_markdown(const std::vector<SystemReport>& systems) {
  std::ostringstream out;
  if (systems.empty()) return "";
  out << "| System |";
  for (auto k : systems.front().kinds) out << ' ' << to_string(k) << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < systems.front().kinds.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& s : systems) {
    out << "| " << s.name << " |";
    for (double m : s.means) out << ' ' << fmt_fixed(100.0 * m, 2) << " |";
    out << '\n';
  }
  return out.str();
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::ostringstream out;
  out << "bin_low,bin_high,count\n";
  for (const auto& b : bins) {
    auto edge = [](double v) { return std::isinf(v) ? std::string(v < 0 ? "-inf" : "inf") : fmt_fixed(v); };
    out << edge(b.low) << ',' << edge(b.high) << ',' << b.count << '\n';
  }
  return out.str();
}

inline std::string selection_csv(const std::string& param_name, const std::vector<SelectionRow>& rows) {
  std::ostringstream out;
  out << param_name << ",ebr,oracle,top_beam\n";
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", r.param);
    out << buf << ',' << fmt_fixed(r.ebr_mean()) << ',' << fmt_fixed(r.oracle_mean()) << ','
        << fmt_fixed(r.top_beam_mean()) << '\n';
  }
  return out.str();
}

inline std::string timing_csv(const std::vector<TimingRow>& rows, std::size_t n_pairs) {
  std::ostringstream out;
  out << "scorer,pairs,seconds,relative\n";
  for (const auto& r : rows)
    out << r.scorer << ',' << n_pairs << ',' << fmt_fixed(r.seconds, 6) << ',' << fmt_fixed(r.relative, 2) << '\n';
  return out.str();
}

}  // namespace sumebr
