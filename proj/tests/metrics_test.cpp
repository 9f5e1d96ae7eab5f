#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <iostream>

#include "metric_oracles.hpp"
#include "test_support.hpp"
#include "ultra/error.hpp"
#include "ultra/metrics.hpp"

using namespace ultra;
using namespace ultra::metrics;

namespace {

EvalPairs random_pairs(Rng& rng, std::size_t n) {
  EvalPairs p;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform();
    p.targets.push_back(t);
    p.preds.push_back(std::clamp(t + 0.2 * rng.normal(), 0.0, 1.0));
  }
  return p;
}

}  // namespace

TEST(Mse, Examples) {
  EXPECT_EQ(mse({{0.2, 0.4}, {0.2, 0.4}}), 0.0);
  EXPECT_EQ(mse({{1.0, 0.0}, {0.0, 0.0}}), 0.5);
  EXPECT_THROW(mse({{}, {}}), std::invalid_argument);
  EXPECT_THROW(mse({{0.1}, {0.1, 0.2}}), std::invalid_argument);
  EXPECT_THROW(mse({{1.5}, {0.1}}), std::invalid_argument);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_pairs(rng, 1 + rng.below(50));
    double ref = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) ref += (p.preds[i] - p.targets[i]) * (p.preds[i] - p.targets[i]);
    EXPECT_NEAR(mse(p), ref / static_cast<double>(p.size()), 1e-12);
  }
}

TEST(Icc, PerfectAgreementIsOne) {
  const EvalPairs p{{0.1, 0.5, 0.9, 0.3}, {0.1, 0.5, 0.9, 0.3}};
  EXPECT_DOUBLE_EQ(icc(p, IccForm::TwoWayRandomSingle), 1.0);
  EXPECT_DOUBLE_EQ(icc(p, IccForm::TwoWayMixedSingle), 1.0);
}

TEST(Icc, SixSubjectTableMatchesAnovaOracle) {
  const EvalPairs p{{0.9, 0.6, 0.8, 0.1, 0.4, 0.6}, {0.7, 0.5, 0.9, 0.2, 0.3, 0.5}};
  EXPECT_NEAR(icc(p, IccForm::TwoWayRandomSingle), ultra::testing::icc_oracle(p, true), 1e-10);
  EXPECT_NEAR(icc(p, IccForm::TwoWayMixedSingle), ultra::testing::icc_oracle(p, false), 1e-10);
  // hand values: MSR = 169/1200, MSC = 0.0075, MSE = 9/1200
  const MeanSquares ms = mean_squares(p);
  EXPECT_NEAR(ms.rows, 169.0 / 1200.0, 1e-12);
  EXPECT_NEAR(ms.columns, 0.0075, 1e-12);
  EXPECT_NEAR(ms.error, 9.0 / 1200.0, 1e-12);
  EXPECT_NEAR(icc(p, IccForm::TwoWayMixedSingle), 160.0 / 178.0, 1e-12);
}

TEST(Icc, OffsetSeparatesConsistencyFromAgreement) {
  EvalPairs p{{}, {0.1, 0.3, 0.5, 0.7, 0.2, 0.6}};
  for (double t : p.targets) p.preds.push_back(t + 0.2);
  EXPECT_NEAR(icc(p, IccForm::TwoWayMixedSingle), 1.0, 1e-10);
  EXPECT_LT(icc(p, IccForm::TwoWayRandomSingle), 1.0 - 1e-3);
}

TEST(Icc, MixedFormInvariantToPredictionShift) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    EvalPairs p = random_pairs(rng, 30);
    for (auto& x : p.preds) x *= 0.8;
    EvalPairs q = p;
    for (auto& x : q.preds) x += 0.15;
    EXPECT_NEAR(icc(p, IccForm::TwoWayMixedSingle), icc(q, IccForm::TwoWayMixedSingle), 1e-10);
  }
}

TEST(Icc, DegenerateAndTooSmall) {
  EXPECT_THROW(icc({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}}), DegenerateInput);
  EXPECT_THROW(icc({{0.1, 0.2}, {0.1, 0.2}}), std::invalid_argument);
}

TEST(Icc, OracleOnRandomInstances) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_pairs(rng, 3 + rng.below(60));
    EXPECT_NEAR(icc(p, IccForm::TwoWayRandomSingle), ultra::testing::icc_oracle(p, true), 1e-10);
    EXPECT_NEAR(icc(p, IccForm::TwoWayMixedSingle), ultra::testing::icc_oracle(p, false), 1e-10);
  }
}

TEST(Kappa, ScoreBins) {
  EXPECT_EQ(score_bin(0.0, 10), 0u);
  EXPECT_EQ(score_bin(0.09, 10), 0u);
  EXPECT_EQ(score_bin(0.1, 10), 1u);
  EXPECT_EQ(score_bin(0.95, 10), 9u);
  EXPECT_EQ(score_bin(1.0, 10), 9u);
  EXPECT_EQ(score_bin(0.5, 2), 1u);
}

TEST(Kappa, HandConfusionCase) {
  EvalPairs p;
  const auto add = [&](double pred, double target, int count) {
    for (int i = 0; i < count; ++i) {
      p.preds.push_back(pred);
      p.targets.push_back(target);
    }
  };
  add(0.25, 0.25, 20);
  add(0.25, 0.75, 5);
  add(0.75, 0.25, 10);
  add(0.75, 0.75, 15);
  const auto cm = confusion_matrix(p, 2);
  EXPECT_EQ(cm[0][0], 20.0);
  EXPECT_EQ(cm[0][1], 5.0);
  EXPECT_EQ(cm[1][0], 10.0);
  EXPECT_EQ(cm[1][1], 15.0);
  EXPECT_NEAR(cohen_kappa(p, {2, KappaWeighting::None}), 0.4, 1e-15);
}

TEST(Kappa, PerfectAgreementAndDegenerateCell) {
  const EvalPairs p{{0.05, 0.55, 0.95, 0.35}, {0.05, 0.55, 0.95, 0.35}};
  for (auto w : {KappaWeighting::None, KappaWeighting::Linear, KappaWeighting::Quadratic}) {
    EXPECT_EQ(cohen_kappa(p, {10, w}), 1.0);
  }
  const EvalPairs one{{0.51, 0.52}, {0.53, 0.54}};
  EXPECT_EQ(cohen_kappa(one, {10, KappaWeighting::None}), 1.0);
  EXPECT_THROW(cohen_kappa(p, {1, KappaWeighting::None}), std::invalid_argument);
}

TEST(Kappa, OracleOnRandomInstances) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto p = random_pairs(rng, 1 + rng.below(80));
    const std::size_t K = 2 + rng.below(12);
    for (auto w : {KappaWeighting::None, KappaWeighting::Linear, KappaWeighting::Quadratic}) {
      EXPECT_NEAR(cohen_kappa(p, {K, w}), ultra::testing::kappa_oracle(p, K, w), 1e-10);
    }
  }
}

TEST(Kappa, BinCountChangesKappaOnly) {
  Rng rng(5);
  const auto p = random_pairs(rng, 200);
  EXPECT_NE(cohen_kappa(p, {4, KappaWeighting::Quadratic}), cohen_kappa(p, {10, KappaWeighting::Quadratic}));
}

TEST(Metrics, JointPermutationInvariance) {
  Rng rng(6);
  const auto p = random_pairs(rng, 40);
  EvalPairs q = p;
  for (std::size_t i = q.size(); i > 1; --i) {
    const auto j = rng.below(i);
    std::swap(q.preds[i - 1], q.preds[j]);
    std::swap(q.targets[i - 1], q.targets[j]);
  }
  EXPECT_NEAR(mse(p), mse(q), 1e-15);
  EXPECT_NEAR(icc(p), icc(q), 1e-12);
  EXPECT_NEAR(cohen_kappa(p), cohen_kappa(q), 1e-12);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_EQ(percentile({3.0, 1.0, 2.0, 4.0}, 0.0), 1.0);
  EXPECT_EQ(percentile({3.0, 1.0, 2.0, 4.0}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(percentile({3.0, 1.0, 2.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({0.0, 10.0}, 0.25), 2.5);
  EXPECT_THROW(percentile({}, 0.5), std::invalid_argument);
}

TEST(Bootstrap, ConstantMetricAndDeterminism) {
  const EvalPairs same{{0.1, 0.4, 0.7}, {0.1, 0.4, 0.7}};
  const Metric m = [](const EvalPairs& p) { return mse(p); };
  const auto ci = bootstrap_ci(m, same, 200, 0.95, 1);
  EXPECT_EQ(ci.lo, 0.0);
  EXPECT_EQ(ci.hi, 0.0);
  Rng rng(7);
  const auto p = random_pairs(rng, 50);
  const auto a = bootstrap_ci(m, p, 300, 0.95, 9);
  const auto b = bootstrap_ci(m, p, 300, 0.95, 9);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LT(a.lo, a.hi);
  EXPECT_THROW(bootstrap_ci(m, p, 99, 0.95, 0), std::invalid_argument);
}

TEST(Bootstrap, SingleDistinctPairGivesPointForBothEnds) {
  const EvalPairs p{{0.3, 0.3, 0.3, 0.3}, {0.5, 0.5, 0.5, 0.5}};
  const Metric m = [](const EvalPairs& q) { return mse(q); };
  const auto ci = bootstrap_ci(m, p, 100, 0.95, 0);
  EXPECT_DOUBLE_EQ(ci.lo, mse(p));
  EXPECT_DOUBLE_EQ(ci.hi, mse(p));
}

TEST(Bootstrap, ResampleStreamsFollowSeedXorIndex) {
  Rng rng(8);
  const auto p = random_pairs(rng, 20);
  std::vector<double> stats;
  for (std::uint64_t b = 0; b < 200; ++b) {
    Rng r(5 ^ b);
    EvalPairs d;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto j = r.below(p.size());
      d.preds.push_back(p.preds[j]);
      d.targets.push_back(p.targets[j]);
    }
    stats.push_back(mse(d));
  }
  const auto ci = bootstrap_ci([](const EvalPairs& q) { return mse(q); }, p, 200, 0.95, 5);
  EXPECT_EQ(ci.lo, percentile(stats, 0.025));
  EXPECT_EQ(ci.hi, percentile(stats, 0.975));
}

TEST(Bootstrap, TooManyUndefinedResamplesIsAnError) {
  Rng rng(9);
  const auto p = random_pairs(rng, 10);
  const Metric undefined = [](const EvalPairs&) -> double { throw DegenerateInput("x", "undefined"); };
  EXPECT_THROW(bootstrap_ci(undefined, p, 100, 0.95, 0), DegenerateInput);
  int calls = 0;
  const Metric sometimes = [&calls](const EvalPairs& q) {
    if (calls++ % 20 == 0) throw DegenerateInput("x", "undefined");
    return mse(q);
  };
  const auto ci = bootstrap_ci(sometimes, p, 100, 0.95, 0);
  EXPECT_EQ(ci.skipped, 5u);
}

TEST(Bootstrap, IntervalContainsPointEstimate) {
  Rng rng(10);
  int icc_violations = 0;
  for (int t = 0; t < 50; ++t) {
    const auto p = random_pairs(rng, 40 + rng.below(40));
    const Metric m = [](const EvalPairs& q) { return mse(q); };
    const auto ci = bootstrap_ci(m, p, 200, 0.95, static_cast<std::uint64_t>(t));
    EXPECT_LE(ci.lo, mse(p));
    EXPECT_GE(ci.hi, mse(p));
    const Metric ic = [](const EvalPairs& q) { return icc(q); };
    const auto ci2 = bootstrap_ci(ic, p, 200, 0.95, static_cast<std::uint64_t>(t));
    if (!(ci2.lo <= icc(p) && icc(p) <= ci2.hi)) ++icc_violations;
  }
  std::cout << "icc point outside its bootstrap interval in " << icc_violations << " of 50 datasets\n";
}

TEST(IncompleteBeta, MatchesBoost) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const double a = rng.uniform(0.1, 30.0), b = rng.uniform(0.1, 30.0), x = rng.uniform();
    EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-10) << a << " " << b << " " << x;
  }
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 0.0), 0.0);
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 1.0), 1.0);
  EXPECT_THROW(incomplete_beta(-1.0, 1.0, 0.5), std::invalid_argument);
}

TEST(StudentT, CdfMatchesBoost) {
  for (double dof : {1.0, 2.0, 4.0, 9.0, 29.0, 120.0}) {
    const boost::math::students_t dist(dof);
    for (double t : {-6.0, -2.5, -1.0, -0.1, 0.0, 0.3, 1.7, 4.0, 12.0}) {
      EXPECT_NEAR(student_t_cdf(t, dof), boost::math::cdf(dist, t), 1e-10);
    }
  }
}

TEST(PairedTTest, HandDataset) {
  const std::vector<double> a{0.10, 0.22, 0.35, 0.18, 0.30}, b{0.08, 0.15, 0.30, 0.20, 0.21};
  // differences 0.02, 0.07, 0.05, -0.02, 0.09: mean 0.042, sample sd sqrt(0.00187)
  const auto r = paired_t_test(a, b);
  const double sd = std::sqrt((0.022 * 0.022 + 0.028 * 0.028 + 0.008 * 0.008 + 0.062 * 0.062 + 0.048 * 0.048) / 4);
  EXPECT_NEAR(r.t, 0.042 / (sd / std::sqrt(5.0)), 1e-10);
  EXPECT_EQ(r.dof, 4u);
  const boost::math::students_t dist(4);
  EXPECT_NEAR(r.p_value, 2 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))), 1e-10);
}

TEST(PairedTTest, OracleOnRandomInstances) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.below(50);
    const auto a = ultra::testing::random_vector(rng, n, 0.0, 0.2);
    const auto b = ultra::testing::random_vector(rng, n, 0.0, 0.2);
    const auto o = ultra::testing::paired_t_oracle(a, b);
    const auto r = paired_t_test(a, b);
    EXPECT_NEAR(r.t, o.t, 1e-10 * std::max(1.0, std::abs(o.t)));
    EXPECT_NEAR(r.p_value, o.p, 1e-10);
  }
}

TEST(PairedTTest, ShiftDetectionAndGuards) {
  Rng rng(13);
  const auto b = ultra::testing::random_vector(rng, 30, 0.0, 0.1);
  double prev = 1.0;
  for (double c : {0.001, 0.01, 0.1}) {
    std::vector<double> a = b;
    for (auto& x : a) x += c + 1e-3 * rng.normal();
    const double p = paired_t_test(a, b).p_value;
    EXPECT_LT(p, prev);
    prev = p;
  }
  EXPECT_LT(prev, 1e-20);
  EXPECT_THROW(paired_t_test(b, b), DegenerateInput);
  EXPECT_THROW(paired_t_test(std::vector<double>{1, 2}, std::vector<double>{1, 3}), std::invalid_argument);
}

TEST(Evaluate, ReportFieldsAndDeterminism) {
  Rng rng(14);
  const auto p = random_pairs(rng, 120);
  EvalOptions o;
  o.bootstrap_b = 200;
  const auto r = evaluate(p, o);
  EXPECT_EQ(r.count, 120u);
  EXPECT_EQ(r.icc.name, "icc");
  EXPECT_EQ(r.kappa.name, "kappa");
  EXPECT_EQ(r.mse.name, "mse");
  EXPECT_EQ(r.icc.point, icc(p));
  EXPECT_EQ(r.kappa.point, cohen_kappa(p));
  EXPECT_EQ(r.mse.point, mse(p));
  EXPECT_TRUE(r.mse.contains_point());
  const auto r2 = evaluate(p, o);
  EXPECT_EQ(r.icc.ci.lo, r2.icc.ci.lo);
  EXPECT_EQ(r.kappa.ci.hi, r2.kappa.ci.hi);
  o.kappa.n_bins = 4;
  const auto r4 = evaluate(p, o);
  EXPECT_EQ(r4.mse.point, r.mse.point);
  EXPECT_EQ(r4.icc.point, r.icc.point);
  EXPECT_NE(r4.kappa.point, r.kappa.point);
}
