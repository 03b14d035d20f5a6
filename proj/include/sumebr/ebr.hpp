#pragma once

// Energy-based re-ranker: reference-free features, a 12-16-1 tanh energy
// network, ListMLE and max-margin objectives, NDCG model selection.
//
// Lower energy means a better candidate. For a list sorted best-first under
// the target metric, ListMLE maximizes the probability of that order under
// the cascade of softmaxes over -E/tau:
//
//   P(order) = prod_i exp(-E_i/tau) / sum_{j>=i} exp(-E_j/tau)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <unordered_set>
#include <vector>

#include "sumebr/corpus.hpp"
#include "sumebr/error.hpp"
#include "sumebr/generator.hpp"
#include "sumebr/metrics.hpp"
#include "sumebr/rng.hpp"

namespace sumebr {

inline constexpr std::size_t kNumFeatures = 12;
inline constexpr std::size_t kHidden = 16;
inline constexpr std::size_t kNumParams = kHidden * kNumFeatures + kHidden + kHidden + 1;
inline constexpr std::size_t kMaxSourceTokens = 512;

using FeatureVector = std::array<double, kNumFeatures>;

inline const std::array<const char*, kNumFeatures>& feature_names() {
  static const std::array<const char*, kNumFeatures> names{
      "unigram_precision", "bigram_precision",  "novel_unigram_frac", "novel_bigram_frac",
      "length_ratio",      "length_budget",     "mean_copy_prob",     "norm_loglik",
      "repeated_bigram_frac", "softchar_alignment", "source_coverage", "bias"};
  return names;
}

enum class LossKind { ListMLE, MaxMargin };

inline std::string to_string(LossKind k) { return k == LossKind::ListMLE ? "ListMLE" : "MaxMargin"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "ListMLE") return LossKind::ListMLE;
  if (s == "MaxMargin") return LossKind::MaxMargin;
  throw ContractError("unknown loss: " + s);
}

struct TrainConfig {
  double tau = 1.0;
  double learning_rate = 0.01;
  int epochs = 200;
  int batch_size = 24;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::ListMLE;
  double margin_scale = 1.0;
  int pairs_per_list = 4;
};

inline void validate(const TrainConfig& cfg) {
  require(cfg.tau > 0, "TrainConfig: tau must be > 0");
  require(cfg.learning_rate > 0, "TrainConfig: learning_rate must be > 0");
  require(cfg.epochs >= 0, "TrainConfig: epochs must be >= 0");
  require(cfg.batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  if (cfg.loss == LossKind::MaxMargin) {
    require(cfg.margin_scale >= 0, "TrainConfig: margin_scale must be >= 0");
    require(cfg.pairs_per_list >= 1, "TrainConfig: pairs_per_list must be >= 1");
  }
}

// Network weights, flattened: W1 (hidden x features, row-major), b1, w2, b2.
struct NetParams {
  std::array<double, kNumParams> theta{};

  double& w1(std::size_t h, std::size_t f) { return theta[h * kNumFeatures + f]; }
  double w1(std::size_t h, std::size_t f) const { return theta[h * kNumFeatures + f]; }
  double& b1(std::size_t h) { return theta[kHidden * kNumFeatures + h]; }
  double b1(std::size_t h) const { return theta[kHidden * kNumFeatures + h]; }
  double& w2(std::size_t h) { return theta[kHidden * kNumFeatures + kHidden + h]; }
  double w2(std::size_t h) const { return theta[kHidden * kNumFeatures + kHidden + h]; }
  double& b2() { return theta[kNumParams - 1]; }
  double b2() const { return theta[kNumParams - 1]; }

  bool operator==(const NetParams&) const = default;
};

struct EnergyModel {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> stddev = filled(1.0);
  NetParams net;
  TrainConfig config;

  static std::array<double, kNumFeatures> filled(double v) {
    std::array<double, kNumFeatures> a;
    a.fill(v);
    return a;
  }
};

struct RankedList {
  std::string doc_id;
  std::vector<FeatureVector> features;  // generator order
  std::vector<double> gains;            // target metric per candidate
  std::vector<double> logprobs;
  std::vector<std::size_t> target_order;  // best first
};

// ---------------------------------------------------------------------------
// Features

// Reference-free features of one candidate. Only the first 512 source
// tokens are used.
namespace detail {
using Bigram = std::pair<std::string_view, std::string_view>;
struct BigramHash {
  std::size_t operator()(const Bigram& b) const noexcept {
    const std::size_t h = std::hash<std::string_view>{}(b.first);
    return h ^ (std::hash<std::string_view>{}(b.second) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
};
}  // namespace detail

inline FeatureVector extract_features(const TokenSeq& source, const Hypothesis& candidate,
                                      const ConditionalLM& lm, int max_len) {
  require(!candidate.tokens.empty(), "extract_features: empty candidate");
  require(!source.empty(), "extract_features: empty source");
  require(max_len >= 1, "extract_features: max_len must be >= 1");
  const std::span<const std::string> x(source.data(), std::min(source.size(), kMaxSourceTokens));
  const TokenSeq& y = candidate.tokens;
  const double ny = static_cast<double>(y.size());
  const double nx = static_cast<double>(x.size());

  std::unordered_map<std::string_view, int> x_counts;
  for (const auto& t : x) ++x_counts[t];
  std::unordered_map<detail::Bigram, int, detail::BigramHash> x_bigrams;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) ++x_bigrams[{x[i], x[i + 1]}];

  FeatureVector f{};
  // Clipped unigram precision and novelty.
  {
    std::unordered_map<std::string_view, int> used;
    double clipped = 0, novel = 0;
    for (const auto& t : y) {
      auto it = x_counts.find(t);
      if (it == x_counts.end()) {
        ++novel;
      } else if (used[t]++ < it->second) {
        ++clipped;
      }
    }
    f[0] = clipped / ny;
    f[2] = novel / ny;
  }
  // Bigram precision, novelty and repetition.
  if (y.size() >= 2) {
    const double nb = ny - 1;
    std::unordered_map<detail::Bigram, int, detail::BigramHash> used;
    std::unordered_set<detail::Bigram, detail::BigramHash> distinct;
    double clipped = 0, novel = 0;
    for (std::size_t i = 0; i + 1 < y.size(); ++i) {
      const detail::Bigram bg{y[i], y[i + 1]};
      distinct.insert(bg);
      auto it = x_bigrams.find(bg);
      if (it == x_bigrams.end()) {
        ++novel;
      } else if (used[bg]++ < it->second) {
        ++clipped;
      }
    }
    f[1] = clipped / nb;
    f[3] = novel / nb;
    f[8] = 1.0 - static_cast<double>(distinct.size()) / nb;
  }
  f[4] = ny / nx;
  f[5] = ny / static_cast<double>(max_len);
  // Copy probability of each emitted token at its decoding step.
  {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      auto it = x_counts.find(y[i]);
      if (it == x_counts.end()) continue;
      const double eos = 0.5 * std::min(1.0, static_cast<double>(i) / lm.target_len);
      s += (1.0 - eos) * static_cast<double>(it->second) / nx;
    }
    f[6] = s / ny;
  }
  f[7] = candidate.logprob / (ny + (candidate.finished ? 1.0 : 0.0));
  f[9] = source.size() <= kMaxSourceTokens ? mean(align(y, source, AlignerKind::SoftChar))
                                           : mean(align(y, TokenSeq(x.begin(), x.end()), AlignerKind::SoftChar));
  {
    std::unordered_set<std::string_view> y_types(y.begin(), y.end());
    double covered = 0;
    for (const auto& t : x) covered += y_types.count(t) ? 1.0 : 0.0;
    f[10] = covered / nx;
  }
  f[11] = 1.0;
  for (double v : f) require(std::isfinite(v), "extract_features: non-finite feature");
  return f;
}

// ---------------------------------------------------------------------------
// Energy network

struct ForwardCache {
  std::array<double, kNumFeatures> z{};
  std::array<double, kHidden> h{};
  double energy = 0;
};

inline ForwardCache forward(const EnergyModel& model, const FeatureVector& f) {
  ForwardCache c;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    require(std::isfinite(f[i]), "energy: non-finite feature");
    c.z[i] = (f[i] - model.mean[i]) / model.stddev[i];
  }
  double e = model.net.b2();
  for (std::size_t h = 0; h < kHidden; ++h) {
    double a = model.net.b1(h);
    for (std::size_t i = 0; i < kNumFeatures; ++i) a += model.net.w1(h, i) * c.z[i];
    c.h[h] = std::tanh(a);
    e += model.net.w2(h) * c.h[h];
  }
  c.energy = e;
  return c;
}

inline double energy(const EnergyModel& model, const FeatureVector& f) { return forward(model, f).energy; }

// Accumulates dE/dtheta * d_energy into grad.
inline void backward(const EnergyModel& model, const ForwardCache& c, double d_energy, NetParams& grad) {
  grad.b2() += d_energy;
  for (std::size_t h = 0; h < kHidden; ++h) {
    grad.w2(h) += d_energy * c.h[h];
    const double da = d_energy * model.net.w2(h) * (1.0 - c.h[h] * c.h[h]);
    grad.b1(h) += da;
    for (std::size_t i = 0; i < kNumFeatures; ++i) grad.w1(h, i) += da * c.z[i];
  }
}

inline std::vector<double> energies(const EnergyModel& model, std::span<const FeatureVector> feats) {
  std::vector<double> out;
  out.reserve(feats.size());
  for (const auto& f : feats) out.push_back(energy(model, f));
  return out;
}

// Fits per-feature mean/stddev; zero-variance features get stddev 1.
inline void fit_standardization(EnergyModel& model, std::span<const RankedList> lists) {
  std::array<double, kNumFeatures> sum{}, sq{};
  double n = 0;
  for (const auto& l : lists)
    for (const auto& f : l.features) {
      for (std::size_t i = 0; i < kNumFeatures; ++i) sum[i] += f[i];
      n += 1;
    }
  model.mean.fill(0.0);
  model.stddev.fill(1.0);
  if (n == 0) return;
  for (std::size_t i = 0; i < kNumFeatures; ++i) model.mean[i] = sum[i] / n;
  for (const auto& l : lists)
    for (const auto& f : l.features)
      for (std::size_t i = 0; i < kNumFeatures; ++i) sq[i] += (f[i] - model.mean[i]) * (f[i] - model.mean[i]);
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const double sd = std::sqrt(sq[i] / n);
    model.stddev[i] = sd > 1e-12 ? sd : 1.0;
  }
}

// ---------------------------------------------------------------------------
// Ranking objectives

// Best-first order under the target metric: metric descending, then
// generator logprob descending, then index ascending.
inline std::vector<std::size_t> target_order(std::span<const double> gains, std::span<const double> logprobs) {
  require(gains.size() == logprobs.size(), "target_order: size mismatch");
  std::vector<std::size_t> order(gains.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (gains[a] != gains[b]) return gains[a] > gains[b];
    return logprobs[a] > logprobs[b];
  });
  return order;
}

inline RankedList make_ranked_list(std::string doc_id, std::vector<FeatureVector> features,
                                   std::vector<double> gains, std::vector<double> logprobs) {
  require(features.size() == gains.size() && gains.size() == logprobs.size(),
          "make_ranked_list: size mismatch");
  RankedList l;
  l.doc_id = std::move(doc_id);
  l.target_order = target_order(gains, logprobs);
  l.features = std::move(features);
  l.gains = std::move(gains);
  l.logprobs = std::move(logprobs);
  return l;
}

struct CascadeResult {
  double loss = 0;                 // -log P(order)
  std::vector<double> d_energy;    // dloss/dE_i, same order as the input
};

// Energies must be given in target order (best first).
inline CascadeResult listmle_cascade(std::span<const double> energies_in_order, double tau) {
  require(tau > 0, "permutation likelihood: tau must be > 0");
  require(!energies_in_order.empty(), "permutation likelihood: empty list");
  const std::size_t k = energies_in_order.size();
  std::vector<double> s(k), lse(k);
  for (std::size_t i = 0; i < k; ++i) s[i] = -energies_in_order[i] / tau;
  // lse[i] = log sum_{j >= i} exp(s_j), accumulated with max-subtraction.
  lse[k - 1] = s[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) {
    const double m = std::max(s[i], lse[i + 1]);
    lse[i] = m + std::log(std::exp(s[i] - m) + std::exp(lse[i + 1] - m));
  }
  CascadeResult r;
  r.d_energy.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) r.loss += lse[i] - s[i];
  // dloss/ds_m = -1 + sum_{i <= m} softmax_i(m)
  for (std::size_t m = 0; m < k; ++m) {
    double acc = 0;
    for (std::size_t i = 0; i <= m; ++i) acc += std::exp(s[m] - lse[i]);
    const double ds = -1.0 + acc;
    r.d_energy[m] = -ds / tau;
  }
  return r;
}

inline double permutation_likelihood(std::span<const double> energies_in_order, double tau) {
  return std::exp(-listmle_cascade(energies_in_order, tau).loss);
}

inline std::vector<double> energies_in_target_order(const EnergyModel& model, const RankedList& list) {
  std::vector<double> e;
  e.reserve(list.target_order.size());
  for (std::size_t idx : list.target_order) e.push_back(energy(model, list.features[idx]));
  return e;
}

inline double listmle_loss(const EnergyModel& model, const RankedList& list, double tau) {
  require(tau > 0, "listmle_loss: tau must be > 0");
  if (list.features.size() < 2) {
    warn("listmle_loss: list '" + list.doc_id + "' has fewer than 2 candidates; skipped");
    return 0.0;
  }
  return listmle_cascade(energies_in_target_order(model, list), tau).loss;
}

struct LossAndGrad {
  double loss = 0;
  NetParams grad;
};

inline LossAndGrad listmle_gradient(const EnergyModel& model, const RankedList& list, double tau) {
  require(tau > 0, "listmle_gradient: tau must be > 0");
  LossAndGrad out;
  if (list.features.size() < 2) {
    warn("listmle_gradient: list '" + list.doc_id + "' has fewer than 2 candidates; skipped");
    return out;
  }
  std::vector<ForwardCache> caches;
  std::vector<double> e;
  for (std::size_t idx : list.target_order) {
    caches.push_back(forward(model, list.features[idx]));
    e.push_back(caches.back().energy);
  }
  const CascadeResult c = listmle_cascade(e, tau);
  out.loss = c.loss;
  for (std::size_t i = 0; i < caches.size(); ++i) backward(model, caches[i], c.d_energy[i], out.grad);
  return out;
}

// (better, worse) index pairs with strictly different gains, sampled with
// replacement.
inline std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const RankedList& list, int n_pairs,
                                                                     Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> valid;
  for (std::size_t i = 0; i < list.gains.size(); ++i)
    for (std::size_t j = 0; j < list.gains.size(); ++j)
      if (list.gains[i] > list.gains[j]) valid.emplace_back(i, j);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (valid.empty()) return out;
  for (int p = 0; p < n_pairs; ++p) out.push_back(valid[uniform_index(rng, valid.size())]);
  return out;
}

inline LossAndGrad maxmargin_gradient(const EnergyModel& model, const RankedList& list,
                                      const TrainConfig& cfg, Rng& rng) {
  LossAndGrad out;
  if (list.features.size() < 2) {
    warn("maxmargin_loss: list '" + list.doc_id + "' has fewer than 2 candidates; skipped");
    return out;
  }
  const auto pairs = sample_pairs(list, cfg.pairs_per_list, rng);
  if (pairs.empty()) return out;
  std::vector<ForwardCache> caches;
  for (const auto& f : list.features) caches.push_back(forward(model, f));
  const double w = 1.0 / static_cast<double>(pairs.size());
  for (const auto& [better, worse] : pairs) {
    const double hinge = cfg.margin_scale * (list.gains[better] - list.gains[worse]) -
                         (caches[worse].energy - caches[better].energy);
    if (hinge <= 0) continue;
    out.loss += w * hinge;
    backward(model, caches[better], w, out.grad);
    backward(model, caches[worse], -w, out.grad);
  }
  return out;
}

// Mean over sampled pairs of max(0, margin_scale * (phi_i - phi_j) - (E_j - E_i)).
inline double maxmargin_loss(const EnergyModel& model, const RankedList& list, const TrainConfig& cfg,
                             Rng& rng) {
  return maxmargin_gradient(model, list, cfg, rng).loss;
}

// ---------------------------------------------------------------------------
// Model selection

// Order induced by energies: ascending energy, ties by logprob descending,
// then index.
inline std::vector<std::size_t> energy_order(std::span<const double> energies_, std::span<const double> logprobs) {
  std::vector<std::size_t> order(energies_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (energies_[a] != energies_[b]) return energies_[a] < energies_[b];
    if (!logprobs.empty() && logprobs[a] != logprobs[b]) return logprobs[a] > logprobs[b];
    return false;
  });
  return order;
}

inline double ndcg(std::span<const std::size_t> predicted_order, std::span<const double> gains) {
  require(predicted_order.size() == gains.size(), "ndcg: order/gain size mismatch");
  for (double g : gains) require(g >= 0, "ndcg: negative gain");
  auto dcg = [&](std::span<const std::size_t> order) {
    double s = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos)
      s += gains[order[pos]] / std::log2(static_cast<double>(pos) + 2.0);
    return s;
  };
  std::vector<std::size_t> ideal(gains.size());
  std::iota(ideal.begin(), ideal.end(), std::size_t{0});
  std::stable_sort(ideal.begin(), ideal.end(), [&](std::size_t a, std::size_t b) { return gains[a] > gains[b]; });
  const double idcg = dcg(ideal);
  if (idcg <= 0) return 1.0;
  return dcg(predicted_order) / idcg;
}

inline double mean_ndcg(const EnergyModel& model, std::span<const RankedList> lists) {
  if (lists.empty()) return 0.0;
  double s = 0;
  for (const auto& l : lists) {
    const auto e = energies(model, l.features);
    s += ndcg(energy_order(e, l.logprobs), l.gains);
  }
  return s / static_cast<double>(lists.size());
}

struct TrainResult {
  EnergyModel model;
  std::vector<double> val_ndcg;  // one entry per epoch
  int best_epoch = -1;           // 0-based; -1 when epochs == 0
};

inline EnergyModel init_model(const TrainConfig& cfg) {
  EnergyModel m;
  m.config = cfg;
  Rng rng(mix_seed(cfg.seed, 0x1417));
  for (double& t : m.net.theta) t = uniform(rng, -0.1, 0.1);
  return m;
}

namespace detail {

struct Adam {
  std::array<double, kNumParams> m{}, v{};
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  void apply(NetParams& params, const NetParams& grad, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const double g = grad.theta[i];
      m[i] = beta1 * m[i] + (1 - beta1) * g;
      v[i] = beta2 * v[i] + (1 - beta2) * g * g;
      params.theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace detail

// Mini-batch training with Adam. Standardization is fitted on the training
// lists; after every epoch the model is scored by mean NDCG on the
// validation lists (training lists when none are given) and the best epoch
// is returned. Deterministic in cfg.seed.
inline TrainResult train(std::span<const RankedList> train_lists, std::span<const RankedList> val_lists,
                         const TrainConfig& cfg) {
  validate(cfg);
  require(!train_lists.empty(), "train: no training lists");
  std::vector<const RankedList*> usable;
  for (const auto& l : train_lists) {
    if (l.features.size() >= 2)
      usable.push_back(&l);
    else
      warn("train: list '" + l.doc_id + "' has fewer than 2 candidates; skipped");
  }
  TrainResult result;
  result.model = init_model(cfg);
  fit_standardization(result.model, train_lists);
  if (cfg.epochs == 0 || usable.empty()) return result;

  const std::span<const RankedList> select = val_lists.empty() ? train_lists : val_lists;
  EnergyModel current = result.model;
  detail::Adam adam;
  Rng order_rng(mix_seed(cfg.seed, 0x0bde));
  Rng pair_rng(mix_seed(cfg.seed, 0x9a15));
  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best = -1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      NetParams grad;
      for (std::size_t b = start; b < end; ++b) {
        const RankedList& l = *usable[order[b]];
        const LossAndGrad lg = cfg.loss == LossKind::ListMLE ? listmle_gradient(current, l, cfg.tau)
                                                             : maxmargin_gradient(current, l, cfg, pair_rng);
        for (std::size_t i = 0; i < kNumParams; ++i) grad.theta[i] += lg.grad.theta[i];
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad.theta) g *= inv;
      adam.apply(current.net, grad, cfg.learning_rate);
    }
    const double score = mean_ndcg(current, select);
    result.val_ndcg.push_back(score);
    if (score > best) {
      best = score;
      result.model = current;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace sumebr
