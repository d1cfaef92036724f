#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "tumorcal/comparison.hpp"

using namespace tumorcal;

namespace {

double ecdf(const std::vector<double>& x, const std::vector<double>& w, double at) {
  double f = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] <= at) f += w[i];
  return f;
}

// Midpoint Riemann sum with step h over the hull of both point sets.
double riemann(const EcdfPair& p, double h = 1e-5) {
  const double lo = std::min(p.data_points.front(), p.prediction_points.front());
  const double hi = std::max(p.data_points.back(), p.prediction_points.back());
  double area = 0;
  for (double x = lo + 0.5 * h; x < hi; x += h) {
    area += std::abs(ecdf(p.data_points, p.data_masses, x) - ecdf(p.prediction_points, p.prediction_masses, x)) * h;
  }
  return area;
}

EcdfPair random_pair(std::mt19937_64& rng, std::size_t max_points = 10) {
  std::uniform_int_distribution<std::size_t> count(1, max_points);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(count(rng)), b(count(rng)), w;
  for (double& x : a) x = u(rng);
  for (double& x : b) x = u(rng);
  for (std::size_t i = 0; i < b.size(); ++i) w.push_back(0.1 + u(rng));
  return make_ecdf_pair(a, b, w);
}

EvidenceTrace trace(std::initializer_list<double> increments) {
  EvidenceTrace t;
  for (double x : increments) t.push(x);
  return t;
}

}  // namespace

TEST(Metric, ShiftedDiracs) {
  EXPECT_DOUBLE_EQ(validation_metric(make_ecdf_pair({1.0}, {2.0})), 1.0);
  EXPECT_DOUBLE_EQ(validation_metric(make_ecdf_pair({2.0}, {1.0})), 1.0);
  EXPECT_DOUBLE_EQ(validation_metric(make_ecdf_pair({0.3, 0.1}, {0.1, 0.3})), 0.0);
}

TEST(Metric, HandDrawnStepFunctions) {
  // Data {1,2,3,4} at 1/4; predictions at 0.5, 1.5, 2.5, 3.5, 5 with masses .1 .2 .3 .2 .2.
  // F_data - F_sol on each interval:
  // [0.5,1) 0-.1, [1,1.5) .25-.1, [1.5,2) .25-.3, [2,2.5) .5-.3, [2.5,3) .5-.6,
  // [3,3.5) .75-.6, [3.5,4) .75-.8, [4,5) 1-.8.
  const double expected = 0.5 * (0.1 + 0.15 + 0.05 + 0.2 + 0.1 + 0.15 + 0.05) + 1.0 * 0.2;
  const auto pair = make_ecdf_pair({4, 2, 3, 1}, {0.5, 1.5, 2.5, 3.5, 5}, {0.1, 0.2, 0.3, 0.2, 0.2});
  EXPECT_NEAR(validation_metric(pair), expected, 1e-12);
}

TEST(Metric, MatchesRiemannSum) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_pair(rng);
    EXPECT_NEAR(validation_metric(p), riemann(p), 1e-4);
  }
}

TEST(Metric, AxiomsOnRandomSets) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto ab = random_pair(rng, 15);
    const auto c = random_pair(rng, 15);
    const auto A = make_ecdf_pair(ab.data_points, ab.data_points);
    EXPECT_EQ(validation_metric(A), 0.0);
    const EcdfPair ba{ab.prediction_points, ab.prediction_masses, ab.data_points, ab.data_masses};
    EXPECT_NEAR(validation_metric(ab), validation_metric(ba), 1e-15);
    const EcdfPair bc{ab.prediction_points, ab.prediction_masses, c.prediction_points, c.prediction_masses};
    const EcdfPair ac{ab.data_points, ab.data_masses, c.prediction_points, c.prediction_masses};
    EXPECT_LE(validation_metric(ac), validation_metric(ab) + validation_metric(bc) + 1e-14);
  }
}

TEST(Metric, EmptyAndInvalidInputs) {
  EXPECT_THROW(make_ecdf_pair({}, {1.0}), DomainError);
  EXPECT_THROW(make_ecdf_pair({1.0}, {1.0, 2.0}, {1.0}), DomainError);
  EXPECT_THROW(make_ecdf_pair({1.0}, {1.0}, {0.0}), DomainError);
  EXPECT_THROW(validation_metric(EcdfPair{}), DomainError);
}

TEST(BayesFactor, ScaleLabels) {
  EXPECT_EQ(classify_evidence(0.0), EvidenceStrength::none);
  EXPECT_EQ(classify_evidence(0.5), EvidenceStrength::barely_worth_mentioning);
  EXPECT_EQ(classify_evidence(0.7), EvidenceStrength::substantial);
  EXPECT_EQ(classify_evidence(1.0), EvidenceStrength::substantial);
  EXPECT_EQ(classify_evidence(1.5), EvidenceStrength::strong);
  EXPECT_EQ(classify_evidence(-1.5), EvidenceStrength::strong);
  EXPECT_EQ(classify_evidence(2.01), EvidenceStrength::decisive);
}

TEST(BayesFactor, HandArithmetic) {
  // Single particle, two steps: increments are the batch log-likelihoods.
  const EvidenceTrace a = trace({std::log(0.2), std::log(0.5)});
  const EvidenceTrace b = trace({std::log(0.4), std::log(0.01)});
  const auto bf = bayes_factor(a, b);
  ASSERT_EQ(bf.size(), 2u);
  EXPECT_NEAR(bf[0].log10_factor, std::log10(0.5), 1e-14);
  EXPECT_EQ(bf[0].favored, 2);
  EXPECT_NEAR(bf[1].log10_factor, std::log10(0.2 * 0.5 / (0.4 * 0.01)), 1e-14);
  EXPECT_EQ(bf[1].favored, 1);
  EXPECT_EQ(bf[1].strength, EvidenceStrength::strong);
  EXPECT_EQ(bf[1].label(), "strong support for model 1");
  const auto rev = bayes_factor(b, a);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(rev[k].log10_factor, -bf[k].log10_factor);
  for (const auto& s : bayes_factor(a, a)) EXPECT_EQ(s.log10_factor, 0.0);
  EXPECT_THROW(bayes_factor(a, trace({0.1})), DomainError);
}

TEST(RatioTable, LayoutAveragesAndGaps) {
  MetricGrid eta, s;
  eta[{DatasetId::d1, 1.0}] = {0.2, 0.4};
  s[{DatasetId::d1, 1.0}] = {0.3, 0.3};
  eta[{DatasetId::d1, 0.5}] = {0.1};
  s[{DatasetId::d1, 0.5}] = {0.2};
  eta[{DatasetId::d6, 0.05}] = {0.1};
  s[{DatasetId::d6, 0.05}] = {0.1};
  eta[{DatasetId::d2, 1.0}] = {0.0};
  s[{DatasetId::d2, 1.0}] = {0.0};
  const auto t = metric_ratio_table(eta, s);
  ASSERT_EQ(t.rows.size(), 3u);
  ASSERT_EQ(t.columns.size(), 3u);
  EXPECT_EQ(t.columns.front(), 1.0);
  EXPECT_NEAR(*t.cells[0][0], 1.0, 1e-15);
  EXPECT_NEAR(*t.cells[0][1], 0.5, 1e-15);
  EXPECT_FALSE(t.cells[0][2].has_value());
  EXPECT_EQ(*t.cells[1][0], 1.0);
  EXPECT_NEAR(*t.row_average[0], 0.75, 1e-15);
  EXPECT_NEAR(*t.column_average[0], 1.0, 1e-15);
  EXPECT_NEAR(*t.overall, (1.0 + 0.5 + 1.0 + 1.0) / 4, 1e-15);
  const auto same = metric_ratio_table(eta, eta);
  for (const auto& row : same.cells)
    for (const auto& c : row)
      if (c) EXPECT_EQ(*c, 1.0);
}
