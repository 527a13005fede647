#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "nml/errors.hpp"
#include "nml/interactions.hpp"
#include "nml/lambert_w.hpp"
#include "nml/losses.hpp"
#include "nml/superloss.hpp"
#include "oracles.hpp"

namespace {

const double kE = std::exp(1.0);

nml::InteractionLosses random_terms(std::size_t b, std::uint64_t seed, nml::ObservedMasks& m) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd z(b, 4);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  z.rowwise().normalize();
  std::vector<nml::ClassId> y;
  for (std::size_t i = 0; i < b; ++i) y.push_back(static_cast<nml::ClassId>(i / 2));
  m = nml::observed_masks(y);
  return nml::interaction_losses(nml::pairwise_distances(z), m.positive, m.negative, 1.0, 1);
}

}  // namespace

TEST(LambertW, KnownValues) {
  EXPECT_EQ(nml::lambert_w0(0.0), 0.0);
  EXPECT_NEAR(nml::lambert_w0(kE), 1.0, 1e-15);
  EXPECT_NEAR(nml::lambert_w0(1.0), 0.56714329040978384, 1e-15);
  EXPECT_EQ(nml::lambert_w0(-1.0 / kE), -1.0);
}

TEST(LambertW, BackSubstitution) {
  for (int i = 0; i <= 400; ++i) {
    const double x = -1.0 / kE + 1e-9 + (10.0 + 1.0 / kE) * i / 400.0;
    const double w = nml::lambert_w0(x);
    EXPECT_GE(w, -1.0);
    EXPECT_NEAR(w * std::exp(w), x, 1e-12 * std::max(1.0, std::abs(x))) << "x=" << x;
  }
  for (double x : {1e3, 1e8, 1e100}) {
    const double w = nml::lambert_w0(x);
    EXPECT_NEAR(std::log(w) + w, std::log(x), 1e-12 * std::log(x));
  }
}

TEST(LambertW, Domain) {
  EXPECT_THROW(nml::lambert_w0(-0.5), std::domain_error);
  EXPECT_THROW(nml::lambert_w0(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
  EXPECT_EQ(nml::lambert_w0(-1.0 / kE - 1e-13), -1.0);
}

TEST(SuperLossSigma, AtThresholdIsOne) {
  for (double lambda : {0.1, 1.0, 7.0}) EXPECT_NEAR(nml::superloss_sigma(0.4, 0.4, lambda), 1.0, 1e-15);
}

TEST(SuperLossSigma, ClampGivesE) {
  EXPECT_NEAR(nml::superloss_sigma(0.0, 2.0 / kE, 1.0), kE, 1e-12);
  EXPECT_NEAR(nml::superloss_sigma(0.0, 50.0, 1.0), kE, 1e-12);
}

TEST(SuperLossSigma, AgreesWithGridSearch) {
  EXPECT_NEAR(nml::superloss_sigma(2.0, 0.0, 1.0), 0.56714329040978384, 1e-12);
  for (double lt : {-0.2, 0.5, 2.0}) {
    for (double lambda : {0.5, 1.0}) {
      EXPECT_NEAR(nml::superloss_sigma(lt, 0.0, lambda), oracle::sigma_by_grid(lt, lambda, 10.0, 200000),
                  1e-3)
          << lt << " " << lambda;
    }
  }
}

TEST(SuperLossSigma, RejectsNonPositiveLambda) {
  EXPECT_THROW(nml::superloss_sigma(1.0, 0.0, 0.0), nml::ConfigError);
}

TEST(SuperLossWrap, TermsAtThresholdGiveUnweightedLoss) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Constant(4, 4, 0.3);
  const auto m = nml::observed_masks(std::vector<nml::ClassId>{0, 0, 1, 1});
  Eigen::MatrixXd dd = d;
  dd.diagonal().setConstant(0.3);  // all positives share one value
  const auto terms = nml::interaction_losses(dd, m.positive, m.negative, 1.0, 1);
  nml::SuperLossState s;
  const auto r = nml::superloss_wrap(terms, m.positive, m.negative, s);
  const auto plain = nml::contrastive_loss(dd, m.positive, m.negative, 1.0, 1);
  EXPECT_NEAR(r.mean_sigma_pos, 1.0, 1e-15);
  EXPECT_NEAR(r.mean_sigma_neg, 1.0, 1e-15);
  EXPECT_NEAR(r.loss.loss, plain.loss, 1e-15);
}

TEST(SuperLossWrap, HugeLambdaApproachesUnweighted) {
  nml::ObservedMasks m;
  const auto terms = random_terms(8, 3, m);
  nml::SuperLossState s;
  s.lambda = 1e6;
  const auto r = nml::superloss_wrap(terms, m.positive, m.negative, s);
  double plain_p = 0.0, plain_n = 0.0;
  for (Eigen::Index i = 0; i < terms.value.size(); ++i) {
    if (m.positive.data()[i]) plain_p += terms.value.data()[i];
    if (m.negative.data()[i]) plain_n += terms.value.data()[i];
  }
  const double plain = plain_p / m.positive.count() + plain_n / m.negative.count();
  EXPECT_LT(std::abs(r.loss.loss - plain), 1e-3);
}

TEST(SuperLossWrap, OutlierPositiveGetsTheSmallestWeight) {
  // Positive terms are D (q = 1); one pair sits far away.
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(6, 6, 1.5);
  const auto m = nml::observed_masks(std::vector<nml::ClassId>{0, 0, 1, 1, 2, 2});
  for (int i = 0; i < 6; ++i) d(i, i) = 0.0;
  d(0, 1) = d(1, 0) = 0.1;
  d(2, 3) = d(3, 2) = 0.15;
  d(4, 5) = d(5, 4) = 1.9;
  const auto terms = nml::interaction_losses(d, m.positive, m.negative, 1.0, 1);
  nml::SuperLossState s;
  s.lambda = 0.5;
  const auto r = nml::superloss_wrap(terms, m.positive, m.negative, s);
  // Effective weight of a positive = grad * |P| / slope.
  const double pc = static_cast<double>(m.positive.count());
  const double outlier = r.loss.grad(4, 5) * pc;
  for (auto [i, j] : {std::pair{0, 1}, {2, 3}, {0, 0}, {5, 5}}) {
    const double w = i == j ? nml::superloss_sigma(0.0, r.threshold_pos, s.lambda)
                            : r.loss.grad(i, j) * pc;
    EXPECT_LT(outlier, w) << i << "," << j;
  }
}

TEST(SuperLossWrap, ThresholdsStartAtBatchMeanThenAverage) {
  nml::ObservedMasks m;
  const auto t1 = random_terms(6, 1, m);
  nml::SuperLossState s;
  const auto r1 = nml::superloss_wrap(t1, m.positive, m.negative, s);
  double mean_p = 0.0;
  for (Eigen::Index i = 0; i < t1.value.size(); ++i)
    if (m.positive.data()[i]) mean_p += t1.value.data()[i];
  mean_p /= m.positive.count();
  EXPECT_NEAR(r1.threshold_pos, mean_p, 1e-15);
  EXPECT_NEAR(*s.positive.value, mean_p, 1e-15);

  const auto t2 = random_terms(6, 2, m);
  double mean_p2 = 0.0;
  for (Eigen::Index i = 0; i < t2.value.size(); ++i)
    if (m.positive.data()[i]) mean_p2 += t2.value.data()[i];
  mean_p2 /= m.positive.count();
  const auto r2 = nml::superloss_wrap(t2, m.positive, m.negative, s);
  EXPECT_NEAR(r2.threshold_pos, mean_p, 1e-15);
  // Same mask sizes, so the global average is the mean of the two batch means.
  EXPECT_NEAR(*s.positive.value, 0.5 * (mean_p + mean_p2), 1e-15);
}

TEST(SuperLossWrap, ExpAvgSmoothing) {
  nml::ObservedMasks m;
  nml::SuperLossState s;
  s.mode = nml::ThresholdMode::kExpAvg;
  s.smoothing = 0.75;
  const auto t1 = random_terms(6, 1, m);
  nml::superloss_wrap(t1, m.positive, m.negative, s);
  const double first = *s.negative.value;
  const auto t2 = random_terms(6, 2, m);
  double mean_n2 = 0.0;
  for (Eigen::Index i = 0; i < t2.value.size(); ++i)
    if (m.negative.data()[i]) mean_n2 += t2.value.data()[i];
  mean_n2 /= m.negative.count();
  nml::superloss_wrap(t2, m.positive, m.negative, s);
  EXPECT_NEAR(*s.negative.value, 0.75 * first + 0.25 * mean_n2, 1e-15);
}

TEST(SuperLossWrap, ValidatesState) {
  nml::ObservedMasks m;
  const auto t = random_terms(4, 1, m);
  nml::SuperLossState s;
  s.smoothing = 1.0;
  EXPECT_THROW(nml::superloss_wrap(t, m.positive, m.negative, s), nml::ConfigError);
}
