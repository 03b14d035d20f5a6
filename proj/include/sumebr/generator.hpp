#pragma once

// Copy-mixture bigram summarizer and (diverse) beam search decoding.
//
// The next-token distribution mixes a copy distribution over the source
// document with an add-alpha smoothed bigram model estimated on reference
// summaries:
//
//   p(w | x, prefix) = lambda * p_copy(w | x, |prefix|) + (1 - lambda) * p_bigram(w | last)
//
// p_copy puts e = 0.5 * min(1, |prefix| / target_len) on EOS and spreads the
// remaining 1 - e over source tokens by relative frequency.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sumebr/corpus.hpp"
#include "sumebr/error.hpp"

namespace sumebr {

inline constexpr int kBos = 0;
inline constexpr int kEos = 1;
inline constexpr const char* kBosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";

struct Vocab {
  std::vector<std::string> tokens;  // id -> token; ids 0 and 1 are BOS/EOS
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(tokens.size()); }

  int find(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? -1 : it->second;
  }
};

struct ConditionalLM {
  Vocab vocab;
  // successors[prev] = (next id, count) pairs sorted by id.
  std::vector<std::vector<std::pair<int, double>>> successors;
  std::vector<double> context_total;
  double copy_weight = 0.5;
  double smoothing = 0.1;
  double target_len = 1.0;

  double bigram_count(int prev, int next) const {
    if (prev < 0 || prev >= static_cast<int>(successors.size())) return 0.0;
    const auto& row = successors[prev];
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(next, -1.0));
    return (it != row.end() && it->first == next) ? it->second : 0.0;
  }
};

struct Hypothesis {
  TokenSeq tokens;
  double logprob = 0.0;
  bool finished = false;

  bool operator==(const Hypothesis&) const = default;
};

struct GenConfig {
  int beams = 8;
  int groups = 1;
  double diversity_weight = 0.0;
  int max_len = 30;
  int k = 8;
  int min_len = 1;  // EOS is not expanded before this many tokens
};

struct CandidateSet {
  std::string doc_id;
  std::vector<Hypothesis> candidates;  // descending logprob; [0] is the top beam
};

inline void validate(const GenConfig& cfg) {
  require(cfg.beams >= 1, "GenConfig: beams must be >= 1");
  require(cfg.groups >= 1 && cfg.beams % cfg.groups == 0, "GenConfig: groups must divide beams");
  require(cfg.k >= 1 && cfg.k <= cfg.beams, "GenConfig: need 1 <= k <= beams");
  require(cfg.max_len >= 1, "GenConfig: max_len must be >= 1");
  require(cfg.min_len >= 1 && cfg.min_len <= cfg.max_len, "GenConfig: need 1 <= min_len <= max_len");
  require(cfg.diversity_weight >= 0 && std::isfinite(cfg.diversity_weight),
          "GenConfig: diversity_weight must be non-negative");
}

inline void validate(const ConditionalLM& lm) {
  require(lm.copy_weight >= 0.0 && lm.copy_weight <= 1.0, "ConditionalLM: copy weight outside [0,1]");
  require(lm.smoothing > 0.0, "ConditionalLM: smoothing must be > 0");
}

inline ConditionalLM train_lm(const Corpus& train, double copy_weight, double smoothing) {
  require(!train.empty(), "train_lm: empty corpus");
  require(copy_weight >= 0.0 && copy_weight <= 1.0, "train_lm: copy weight outside [0,1]");
  require(smoothing > 0.0, "train_lm: smoothing must be > 0");

  ConditionalLM lm;
  lm.copy_weight = copy_weight;
  lm.smoothing = smoothing;

  std::vector<std::string> words;
  for (const auto& d : train.documents) {
    for (const auto* seq : {&d.source, &d.reference})
      for (const auto& t : *seq) {
        require(t != kBosToken && t != kEosToken, "train_lm: corpus contains reserved token " + t);
        words.push_back(t);
      }
  }
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  lm.vocab.tokens = {kBosToken, kEosToken};
  lm.vocab.tokens.insert(lm.vocab.tokens.end(), words.begin(), words.end());
  for (int i = 0; i < lm.vocab.size(); ++i) lm.vocab.index.emplace(lm.vocab.tokens[i], i);

  std::vector<std::map<int, double>> counts(lm.vocab.size());
  double total_len = 0;
  for (const auto& d : train.documents) {
    int prev = kBos;
    for (const auto& t : d.reference) {
      const int id = lm.vocab.index.at(t);
      counts[prev][id] += 1;
      prev = id;
    }
    counts[prev][kEos] += 1;
    total_len += static_cast<double>(d.reference.size());
  }
  lm.target_len = std::max(1.0, total_len / static_cast<double>(train.size()));
  lm.successors.resize(lm.vocab.size());
  lm.context_total.assign(lm.vocab.size(), 0.0);
  for (int p = 0; p < lm.vocab.size(); ++p) {
    for (const auto& [id, c] : counts[p]) {
      lm.successors[p].emplace_back(id, c);
      lm.context_total[p] += c;
    }
  }
  return lm;
}

// A source document encoded against a model. Source tokens that are not in
// the model vocabulary get ids past the vocabulary; they can be copied but
// have no bigram mass.
class SourceContext {
 public:
  SourceContext(const ConditionalLM& lm, const TokenSeq& x) : lm_(&lm) {
    require(!x.empty(), "next_token_dist: empty source");
    std::map<int, double> freq;
    for (const auto& t : x) {
      int id = lm.vocab.find(t);
      if (id < 0) {
        auto it = oov_index_.find(t);
        if (it == oov_index_.end()) {
          id = lm.vocab.size() + static_cast<int>(oov_.size());
          oov_.push_back(t);
          oov_index_.emplace(t, id);
        } else {
          id = it->second;
        }
      }
      freq[id] += 1.0;
    }
    for (const auto& [id, c] : freq) copy_freq_.emplace_back(id, c / static_cast<double>(x.size()));
  }

  int size() const { return lm_->vocab.size() + static_cast<int>(oov_.size()); }

  const std::string& token(int id) const {
    return id < lm_->vocab.size() ? lm_->vocab.tokens[id] : oov_[id - lm_->vocab.size()];
  }

  int find(const std::string& tok) const {
    int id = lm_->vocab.find(tok);
    if (id >= 0) return id;
    auto it = oov_index_.find(tok);
    return it == oov_index_.end() ? -1 : it->second;
  }

  double copy_prob(int id) const {
    auto it = std::lower_bound(copy_freq_.begin(), copy_freq_.end(), std::make_pair(id, -1.0));
    return (it != copy_freq_.end() && it->first == id) ? it->second : 0.0;
  }

  // Writes p(. | x, prefix) into `out` (resized to size()). `prev` is the
  // last prefix id (kBos for an empty prefix, -1 for an unknown token).
  void step_probs(int prev, std::size_t prefix_len, std::vector<double>& out) const {
    const ConditionalLM& lm = *lm_;
    const int v = lm.vocab.size();
    out.assign(size(), 0.0);
    const double lambda = lm.copy_weight;
    if (lambda < 1.0) {
      const bool known = prev >= 0 && prev < v;
      const double total = known ? lm.context_total[prev] : 0.0;
      const double denom = total + lm.smoothing * static_cast<double>(v - 1);
      const double base = (1.0 - lambda) * lm.smoothing / denom;
      for (int id = 1; id < v; ++id) out[id] = base;
      if (known)
        for (const auto& [id, c] : lm.successors[prev]) out[id] += (1.0 - lambda) * c / denom;
    }
    if (lambda > 0.0) {
      const double eos = 0.5 * std::min(1.0, static_cast<double>(prefix_len) / lm.target_len);
      out[kEos] += lambda * eos;
      for (const auto& [id, f] : copy_freq_) out[id] += lambda * (1.0 - eos) * f;
    }
  }

 private:
  const ConditionalLM* lm_;
  std::vector<std::string> oov_;
  std::unordered_map<std::string, int> oov_index_;
  std::vector<std::pair<int, double>> copy_freq_;  // sorted by id
};

struct TokenDistribution {
  std::vector<std::string> tokens;  // EOS is kEosToken; BOS never carries mass
  std::vector<double> probs;

  double prob(const std::string& tok) const {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == tok) return probs[i];
    return 0.0;
  }
  double total() const {
    double s = 0;
    for (double p : probs) s += p;
    return s;
  }
};

inline TokenDistribution next_token_dist(const ConditionalLM& lm, const TokenSeq& x,
                                         const TokenSeq& prefix) {
  validate(lm);
  SourceContext ctx(lm, x);
  const int prev = prefix.empty() ? kBos : ctx.find(prefix.back());
  TokenDistribution dist;
  ctx.step_probs(prev, prefix.size(), dist.probs);
  dist.tokens.reserve(dist.probs.size());
  for (int id = 0; id < ctx.size(); ++id) dist.tokens.push_back(ctx.token(id));
  return dist;
}

namespace detail {

struct Beam {
  std::vector<int> ids;
  double logprob = 0.0;
  double score = 0.0;  // logprob minus accumulated diversity penalties
};

struct Extension {
  int parent;
  int id;
  double logprob;
  double score;
};

// Lexicographic order on token strings; shorter prefix first.
inline bool lex_less(const std::vector<int>& a, const std::vector<int>& b, const SourceContext& ctx) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      [&](int l, int r) { return ctx.token(l) < ctx.token(r); });
}

// Compares pa+[a] with pb+[b]; all beams of one step have equal length.
inline bool lex_less_ext(const std::vector<int>& pa, int a, const std::vector<int>& pb, int b,
                         const SourceContext& ctx) {
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i] != pb[i]) return ctx.token(pa[i]) < ctx.token(pb[i]);
  }
  return ctx.token(a) < ctx.token(b);
}

struct Finished {
  std::vector<int> ids;
  double logprob;
  bool finished;
};

inline void sort_pool(std::vector<Finished>& pool, const SourceContext& ctx) {
  std::sort(pool.begin(), pool.end(), [&](const Finished& a, const Finished& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return lex_less(a.ids, b.ids, ctx);
  });
  pool.erase(std::unique(pool.begin(), pool.end(),
                         [](const Finished& a, const Finished& b) { return a.ids == b.ids; }),
             pool.end());
}

// Group-wise beam search. With one group and zero weight this is plain beam
// search: all extensions of the live beams are ranked, the best `width`
// survive, and those ending in EOS retire to the pool. Each group is
// penalized by `weight` per earlier-group selection of the same token at the
// same step. Search stops once k distinct hypotheses are pooled and every
// live beam has lower logprob than the k-th pooled one.
inline CandidateSet grouped_search(const ConditionalLM& lm, const TokenSeq& x, const GenConfig& cfg,
                                   int groups, double weight) {
  SourceContext ctx(lm, x);
  const int width = cfg.beams / groups;
  std::vector<std::vector<Beam>> live(groups, std::vector<Beam>{Beam{}});
  std::vector<Finished> pool;
  std::vector<double> probs;
  std::vector<int> step_counts(ctx.size(), 0);
  std::vector<Extension> ext;

  for (int t = 0; t < cfg.max_len; ++t) {
    std::fill(step_counts.begin(), step_counts.end(), 0);
    for (int g = 0; g < groups; ++g) {
      auto& beams = live[g];
      if (beams.empty()) continue;
      ext.clear();
      for (int b = 0; b < static_cast<int>(beams.size()); ++b) {
        const Beam& parent = beams[b];
        ctx.step_probs(parent.ids.empty() ? kBos : parent.ids.back(), parent.ids.size(), probs);
        for (int id = 1; id < ctx.size(); ++id) {
          const double p = probs[id];
          if (p <= 0.0) continue;
          if (id == kEos && t < cfg.min_len) continue;
          const double lp = std::log(p);
          ext.push_back({b, id, parent.logprob + lp,
                         parent.score + lp - weight * static_cast<double>(step_counts[id])});
        }
      }
      const std::size_t keep = std::min<std::size_t>(width, ext.size());
      std::partial_sort(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(keep), ext.end(),
                        [&](const Extension& a, const Extension& b) {
                          if (a.score != b.score) return a.score > b.score;
                          return lex_less_ext(beams[a.parent].ids, a.id, beams[b.parent].ids, b.id, ctx);
                        });
      std::vector<Beam> next;
      for (std::size_t i = 0; i < keep; ++i) {
        const Extension& e = ext[i];
        ++step_counts[e.id];
        if (e.id == kEos) {
          pool.push_back({beams[e.parent].ids, e.logprob, true});
        } else {
          Beam nb{beams[e.parent].ids, e.logprob, e.score};
          nb.ids.push_back(e.id);
          next.push_back(std::move(nb));
        }
      }
      beams = std::move(next);
    }

    bool any_live = false;
    double best_live = -std::numeric_limits<double>::infinity();
    for (const auto& beams : live)
      for (const auto& b : beams) {
        any_live = true;
        best_live = std::max(best_live, b.logprob);
      }
    if (!any_live) break;
    sort_pool(pool, ctx);
    if (static_cast<int>(pool.size()) >= cfg.k && best_live < pool[cfg.k - 1].logprob) {
      for (auto& beams : live) beams.clear();
      break;
    }
  }
  for (const auto& beams : live)
    for (const auto& b : beams) pool.push_back({b.ids, b.logprob, false});  // length-capped
  sort_pool(pool, ctx);

  CandidateSet out;
  const std::size_t n = std::min<std::size_t>(cfg.k, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    Hypothesis h;
    h.logprob = pool[i].logprob;
    h.finished = pool[i].finished;
    for (int id : pool[i].ids) h.tokens.push_back(ctx.token(id));
    out.candidates.push_back(std::move(h));
  }
  return out;
}

}  // namespace detail

// Returns the top-k distinct hypotheses by logprob, ties broken by token
// sequence. Length-capped hypotheses (max_len tokens, no EOS) are
// unfinished. cfg.groups and cfg.diversity_weight are ignored.
inline CandidateSet beam_search(const ConditionalLM& lm, const TokenSeq& x, const GenConfig& cfg) {
  validate(lm);
  validate(cfg);
  return detail::grouped_search(lm, x, cfg, 1, 0.0);
}

// Diverse beam search with a Hamming diversity penalty between groups. A
// zero weight makes the groups indistinguishable, so the search collapses to
// a single group of cfg.beams beams, i.e. plain beam search.
inline CandidateSet diverse_beam_search(const ConditionalLM& lm, const TokenSeq& x,
                                        const GenConfig& cfg) {
  validate(lm);
  validate(cfg);
  if (cfg.diversity_weight == 0.0) return detail::grouped_search(lm, x, cfg, 1, 0.0);
  return detail::grouped_search(lm, x, cfg, cfg.groups, cfg.diversity_weight);
}

inline CandidateSet generate(const ConditionalLM& lm, const Document& doc, const GenConfig& cfg) {
  CandidateSet set = diverse_beam_search(lm, doc.source, cfg);
  set.doc_id = doc.id;
  return set;
}

// Sum of per-step log probabilities under next_token_dist (EOS included
// when finished). Used to replay decoder scores.
inline double sequence_logprob(const ConditionalLM& lm, const TokenSeq& x, const Hypothesis& h) {
  SourceContext ctx(lm, x);
  std::vector<double> probs;
  double lp = 0.0;
  int prev = kBos;
  for (std::size_t i = 0; i < h.tokens.size(); ++i) {
    ctx.step_probs(prev, i, probs);
    const int id = ctx.find(h.tokens[i]);
    if (id < 0) return -std::numeric_limits<double>::infinity();
    lp += std::log(probs[id]);
    prev = id;
  }
  if (h.finished) {
    ctx.step_probs(prev, h.tokens.size(), probs);
    lp += std::log(probs[kEos]);
  }
  return lp;
}

}  // namespace sumebr
