#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "sumebr/ebr.hpp"

using namespace sumebr;

namespace {

std::vector<double> random_energies(Rng& rng, std::size_t k, double scale = 3.0) {
  std::vector<double> e(k);
  for (auto& v : e) v = uniform(rng, -scale, scale);
  return e;
}

FeatureVector random_features(Rng& rng) {
  FeatureVector f{};
  for (std::size_t i = 0; i + 1 < kNumFeatures; ++i) f[i] = uniform(rng, -2, 2);
  f[kNumFeatures - 1] = 1.0;
  return f;
}

EnergyModel random_model(Rng& rng, double scale = 0.5) {
  EnergyModel m;
  for (auto& t : m.net.theta) t = uniform(rng, -scale, scale);
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    m.mean[i] = uniform(rng, -0.5, 0.5);
    m.stddev[i] = uniform(rng, 0.5, 2.0);
  }
  return m;
}

RankedList random_list(Rng& rng, std::size_t k) {
  std::vector<FeatureVector> f;
  std::vector<double> g, lp;
  for (std::size_t i = 0; i < k; ++i) {
    f.push_back(random_features(rng));
    g.push_back(uniform01(rng));
    lp.push_back(-uniform(rng, 1, 10));
  }
  return make_ranked_list("r", std::move(f), std::move(g), std::move(lp));
}

// |a - b| / max(|a|, |b|), with a floor so that exact zeros compare cleanly.
double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

}  // namespace

TEST(PermutationLikelihood, ClosedForms) {
  EXPECT_NEAR(permutation_likelihood(std::vector<double>{1, 1, 1}, 1.0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(permutation_likelihood(std::vector<double>{0, std::log(3.0)}, 1.0), 0.75, 1e-15);
  EXPECT_DOUBLE_EQ(permutation_likelihood(std::vector<double>{4.2}, 0.3), 1.0);
  EXPECT_THROW(permutation_likelihood(std::vector<double>{1, 2}, 0.0), ContractError);
}

// Brute-force enumeration over all k! orders.
TEST(PermutationLikelihood, MassOverAllOrdersIsOne) {
  Rng rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = 2 + trial % 5;
    const double tau = std::vector<double>{0.5, 1.0, 2.0}[trial % 3];
    const auto e = random_energies(rng, k);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double total = 0;
    do {
      std::vector<double> ordered;
      for (auto i : perm) ordered.push_back(e[i]);
      const double p = permutation_likelihood(ordered, tau);
      EXPECT_NEAR(p, oracle::plackett_luce(ordered, tau), 1e-12);
      total += p;
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(PermutationLikelihood, ShiftAndJointScaleInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto e = random_energies(rng, 5);
    const double base = permutation_likelihood(e, 1.0);
    auto shifted = e;
    for (auto& v : shifted) v += 123.0;
    EXPECT_NEAR(permutation_likelihood(shifted, 1.0), base, 1e-12);
    auto scaled = e;
    for (auto& v : scaled) v *= 3.5;
    EXPECT_NEAR(permutation_likelihood(scaled, 3.5), base, 1e-12);
  }
}

TEST(PermutationLikelihood, StableForExtremeEnergies) {
  const std::vector<double> e{-1e4, 0.0, 1e4};
  EXPECT_NEAR(permutation_likelihood(e, 1.0), 1.0, 1e-12);
  const std::vector<double> rev{1e4, 0.0, -1e4};
  const auto c = listmle_cascade(rev, 1.0);
  EXPECT_TRUE(std::isfinite(c.loss));
  EXPECT_NEAR(c.loss, 3e4, 1e-6);
}

TEST(ListMle, EqualEnergiesGiveLogFactorial) {
  RankedList l;
  l.doc_id = "eq";
  l.features.assign(3, FeatureVector{});
  l.gains = {0.3, 0.2, 0.1};
  l.logprobs = {0, 0, 0};
  l.target_order = {0, 1, 2};
  EXPECT_NEAR(listmle_loss(EnergyModel{}, l, 1.0), std::log(6.0), 1e-12);
  const auto lg = listmle_gradient(EnergyModel{}, l, 1.0);
  EXPECT_NEAR(lg.loss, 1.791759469228055, 1e-12);
  // Identical inputs: the hidden-layer weights get no ranking signal.
  for (std::size_t h = 0; h < kHidden; ++h)
    for (std::size_t f = 0; f < kNumFeatures; ++f) EXPECT_NEAR(lg.grad.w1(h, f), 0.0, 1e-15);
}

TEST(ListMle, LossIsNegLogLikelihood) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = random_model(rng);
    const auto l = random_list(rng, 2 + trial % 7);
    const double tau = uniform(rng, 0.3, 3.0);
    const double loss = listmle_loss(m, l, tau);
    EXPECT_GE(loss, 0.0);
    EXPECT_NEAR(loss, -std::log(permutation_likelihood(energies_in_target_order(m, l), tau)), 1e-9);
  }
}

TEST(ListMle, SingletonListWarnsAndContributesNothing) {
  Rng rng(4);
  const auto l = random_list(rng, 1);
  set_warnings_enabled(false);
  EXPECT_EQ(listmle_loss(EnergyModel{}, l, 1.0), 0.0);
  set_warnings_enabled(true);
}

// Central finite differences, h = 1e-5.
TEST(ListMle, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const double h = 1e-5;
  double worst = 0;
  for (int draw = 0; draw < 120; ++draw) {
    auto m = random_model(rng);
    const auto l = random_list(rng, 2 + draw % 7);
    const double tau = std::vector<double>{0.5, 1.0, 2.0}[draw % 3];
    const auto lg = listmle_gradient(m, l, tau);
    for (std::size_t p = 0; p < kNumParams; ++p) {
      const double saved = m.net.theta[p];
      m.net.theta[p] = saved + h;
      const double up = listmle_loss(m, l, tau);
      m.net.theta[p] = saved - h;
      const double down = listmle_loss(m, l, tau);
      m.net.theta[p] = saved;
      const double fd = (up - down) / (2 * h);
      if (p == kNumParams - 1) {
        // Output bias shifts every energy equally, so its derivative is exactly zero.
        EXPECT_LE(std::abs(lg.grad.theta[p]), 1e-12);
        EXPECT_LE(std::abs(fd), 1e-8);
        continue;
      }
      worst = std::max(worst, relative_error(fd, lg.grad.theta[p]));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(ListMle, GradientShrinksLikeInverseTau) {
  Rng rng(6);
  const auto m = random_model(rng);
  const auto l = random_list(rng, 6);
  auto norm = [&](double tau) {
    const auto g = listmle_gradient(m, l, tau).grad.theta;
    double s = 0;
    for (double v : g) s += v * v;
    return std::sqrt(s);
  };
  const double n1 = norm(1), n10 = norm(10), n100 = norm(100);
  EXPECT_LT(n10, n1);
  EXPECT_LT(n100, n10);
  // For large tau the gradient approaches c/tau: n10 * 10 ~ n100 * 100.
  EXPECT_NEAR(n100 * 100 / (n10 * 10), 1.0, 0.05);
}

TEST(MaxMargin, HingeSubstitution) {
  // E(f) = 1 + tanh(f0): energies 1.0 (better) and 1.1 (worse).
  EnergyModel m;
  m.net.w1(1, 0) = 1.0;
  m.net.w2(1) = 1.0;
  m.net.b2() = 1.0;
  RankedList l;
  l.doc_id = "mm";
  l.features.assign(2, FeatureVector{});
  l.features[1][0] = std::atanh(0.1);
  l.gains = {0.7, 0.5};
  l.logprobs = {0, 0};
  l.target_order = {0, 1};
  ASSERT_NEAR(energy(m, l.features[0]), 1.0, 1e-12);
  ASSERT_NEAR(energy(m, l.features[1]), 1.1, 1e-12);
  TrainConfig cfg;
  cfg.loss = LossKind::MaxMargin;
  Rng rng(1);
  EXPECT_NEAR(maxmargin_loss(m, l, cfg, rng), 0.1, 1e-12);
  cfg.margin_scale = 0.0;
  EXPECT_NEAR(maxmargin_loss(m, l, cfg, rng), 0.0, 1e-12);
  cfg.margin_scale = 0.4;  // margin 0.08 < energy gap 0.1
  EXPECT_NEAR(maxmargin_loss(m, l, cfg, rng), 0.0, 1e-12);
  l.gains = {0.5, 0.5};
  cfg.margin_scale = 1.0;
  EXPECT_EQ(maxmargin_loss(m, l, cfg, rng), 0.0);
}

TEST(MaxMargin, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  const double h = 1e-5;
  double worst = 0;
  for (int draw = 0; draw < 40; ++draw) {
    auto m = random_model(rng);
    const auto l = random_list(rng, 5);
    TrainConfig cfg;
    cfg.loss = LossKind::MaxMargin;
    cfg.margin_scale = 5.0;
    Rng r1(draw);
    const auto lg = maxmargin_gradient(m, l, cfg, r1);
    for (std::size_t p = 0; p < kNumParams; ++p) {
      const double saved = m.net.theta[p];
      m.net.theta[p] = saved + h;
      Rng ru(draw);
      const double up = maxmargin_loss(m, l, cfg, ru);
      m.net.theta[p] = saved - h;
      Rng rd(draw);
      const double down = maxmargin_loss(m, l, cfg, rd);
      m.net.theta[p] = saved;
      const double fd = (up - down) / (2 * h);
      if (p == kNumParams - 1) {
        EXPECT_LE(std::abs(lg.grad.theta[p]), 1e-12);
        EXPECT_LE(std::abs(fd), 1e-8);
        continue;
      }
      worst = std::max(worst, relative_error(fd, lg.grad.theta[p]));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Ndcg, WorkedExamples) {
  const std::vector<double> gains{3, 2, 1};
  EXPECT_DOUBLE_EQ(ndcg(std::vector<std::size_t>{0, 1, 2}, gains), 1.0);
  const double expected = (1.0 + 2.0 / std::log2(3.0) + 3.0 / 2.0) / (3.0 + 2.0 / std::log2(3.0) + 1.0 / 2.0);
  EXPECT_NEAR(ndcg(std::vector<std::size_t>{2, 1, 0}, gains), expected, 1e-12);
  EXPECT_NEAR(expected, 0.7899, 1e-4);
  EXPECT_DOUBLE_EQ(ndcg(std::vector<std::size_t>{1, 0, 2}, std::vector<double>{0.4, 0.4, 0.4}), 1.0);
  EXPECT_DOUBLE_EQ(ndcg(std::vector<std::size_t>{1, 0}, std::vector<double>{0, 0}), 1.0);
  EXPECT_THROW(ndcg(std::vector<std::size_t>{0, 1}, std::vector<double>{0.1, -0.1}), ContractError);
}

TEST(Ndcg, MatchesBruteForce) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + trial % 8;
    std::vector<double> g(k);
    for (auto& v : g) v = uniform01(rng);
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order), rng);
    const double v = ndcg(order, g);
    EXPECT_NEAR(v, oracle::ndcg(order, g), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

TEST(TargetOrder, TiesBrokenByLogprobThenIndex) {
  const std::vector<double> g{0.5, 0.9, 0.5, 0.5};
  const std::vector<double> lp{-3, -1, -2, -2};
  EXPECT_EQ(target_order(g, lp), (std::vector<std::size_t>{1, 2, 3, 0}));
}

TEST(Energy, OutputLayerScalingAndDeterminism) {
  Rng rng(9);
  auto m = random_model(rng);
  const auto f = random_features(rng);
  const double e = energy(m, f);
  EXPECT_EQ(e, energy(m, f));
  auto scaled = m;
  for (std::size_t h = 0; h < kHidden; ++h) scaled.net.w2(h) *= 2.5;
  scaled.net.b2() *= 2.5;
  EXPECT_NEAR(energy(scaled, f), 2.5 * e, 1e-12);
  auto bad = f;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(energy(m, bad), ContractError);
}

TEST(Energy, OrderInvariantUnderPositiveOutputScaling) {
  Rng rng(10);
  auto m = random_model(rng);
  auto scaled = m;
  for (std::size_t h = 0; h < kHidden; ++h) scaled.net.w2(h) *= 7.0;
  std::vector<FeatureVector> fs;
  for (int i = 0; i < 8; ++i) fs.push_back(random_features(rng));
  const std::vector<double> lp(8, 0.0);
  EXPECT_EQ(energy_order(energies(m, fs), lp), energy_order(energies(scaled, fs), lp));
}

TEST(Features, Definitions) {
  Corpus c;
  c.documents.push_back({"1", {"a", "b", "c", "d"}, {"a", "b"}});
  const auto lm = train_lm(c, 0.5, 0.1);
  const TokenSeq x{"the", "cat", "sat", "on", "the", "mat"};
  const auto f = extract_features(x, {{"cat", "sat", "on"}, -3.0, true}, lm, 30);
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[2], 0.0);
  EXPECT_DOUBLE_EQ(f[1], 1.0);
  EXPECT_DOUBLE_EQ(f[4], 0.5);
  EXPECT_DOUBLE_EQ(f[5], 0.1);
  EXPECT_DOUBLE_EQ(f[7], -0.75);
  EXPECT_DOUBLE_EQ(f[9], 1.0);
  EXPECT_DOUBLE_EQ(f[10], 0.5);
  EXPECT_DOUBLE_EQ(f[11], 1.0);

  const auto g = extract_features(x, {{"dog", "dog", "dog"}, -9.0, false}, lm, 30);
  EXPECT_DOUBLE_EQ(g[10], 0.0);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
  EXPECT_DOUBLE_EQ(g[8], 0.5);
  EXPECT_DOUBLE_EQ(g[7], -3.0);
  EXPECT_THROW(extract_features(x, {{}, 0.0, true}, lm, 30), ContractError);
}

TEST(Features, SourceTruncatedAt512Tokens) {
  Corpus c;
  c.documents.push_back({"1", {"a"}, {"a"}});
  const auto lm = train_lm(c, 0.5, 0.1);
  TokenSeq x(512, "w");
  const Hypothesis h{{"late"}, -1.0, true};
  const auto before = extract_features(x, h, lm, 30);
  x.push_back("late");
  const auto after = extract_features(x, h, lm, 30);
  EXPECT_EQ(before, after);
}

// A separable dataset: the target is a strictly monotone function of one feature.
TEST(Train, SeparableDatasetReachesHighNdcg) {
  Rng rng(11);
  auto make = [&](int n) {
    std::vector<RankedList> out;
    for (int d = 0; d < n; ++d) {
      std::vector<FeatureVector> f;
      std::vector<double> g, lp;
      for (int i = 0; i < 8; ++i) {
        FeatureVector v = random_features(rng);
        f.push_back(v);
        g.push_back(std::exp(v[3]));
        lp.push_back(-uniform(rng, 1, 5));
      }
      out.push_back(make_ranked_list("s" + std::to_string(d), f, g, lp));
    }
    return out;
  };
  const auto tr = make(120), va = make(40);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.seed = 5;
  const auto r = train(tr, va, cfg);
  EXPECT_EQ(r.val_ndcg.size(), 60u);
  EXPECT_GE(*std::max_element(r.val_ndcg.begin(), r.val_ndcg.end()), 0.99);
  EXPECT_NEAR(mean_ndcg(r.model, va), r.val_ndcg[r.best_epoch], 1e-12);
}

TEST(Train, ZeroEpochsAndDeterminism) {
  Rng rng(12);
  std::vector<RankedList> tr;
  for (int i = 0; i < 30; ++i) tr.push_back(random_list(rng, 6));
  TrainConfig cfg;
  cfg.seed = 77;
  cfg.epochs = 0;
  const auto r0 = train(tr, {}, cfg);
  EXPECT_TRUE(r0.val_ndcg.empty());
  EXPECT_EQ(r0.model.net.theta, init_model(cfg).net.theta);
  for (double t : r0.model.net.theta) EXPECT_LE(std::abs(t), 0.1);

  cfg.epochs = 5;
  const auto a = train(tr, {}, cfg);
  const auto b = train(tr, {}, cfg);
  EXPECT_EQ(a.model.net.theta, b.model.net.theta);
  EXPECT_EQ(a.val_ndcg, b.val_ndcg);
  cfg.loss = LossKind::MaxMargin;
  const auto c = train(tr, {}, cfg);
  EXPECT_EQ(c.model.net.theta, train(tr, {}, cfg).model.net.theta);
}

TEST(Train, StandardizationGivesZeroVarianceFeaturesUnitScale) {
  Rng rng(13);
  std::vector<RankedList> tr;
  for (int i = 0; i < 10; ++i) tr.push_back(random_list(rng, 4));
  EnergyModel m;
  fit_standardization(m, tr);
  EXPECT_DOUBLE_EQ(m.stddev[kNumFeatures - 1], 1.0);
  EXPECT_DOUBLE_EQ(m.mean[kNumFeatures - 1], 1.0);
  for (double s : m.stddev) EXPECT_GT(s, 0.0);
}

TEST(Config, Validation) {
  TrainConfig c;
  c.tau = 0;
  EXPECT_THROW(validate(c), ContractError);
  c = {};
  c.epochs = -1;
  EXPECT_THROW(validate(c), ContractError);
  EXPECT_EQ(parse_loss_kind("MaxMargin"), LossKind::MaxMargin);
  EXPECT_THROW(parse_loss_kind("hinge"), ContractError);
}
