#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dsoba/metrics.hpp"
#include "dsoba/quadratic.hpp"
#include "support.hpp"

namespace {

using namespace dsoba;

SwarmState state_with(const Mat& x, int p) {
  SwarmState s;
  s.X = x;
  s.Y = Mat::Zero(x.rows(), p);
  s.Z = Mat::Zero(x.rows(), p);
  s.H = Mat::Zero(x.rows(), x.cols());
  return s;
}

RunRecord record_from(const std::vector<long>& grid, const std::vector<double>& values,
                      const std::string& topo = "ring", const std::string& variant = "so") {
  RunRecord r;
  r.meta.topology = topo;
  r.meta.variant = variant;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    Probe p;
    p.t = grid[k];
    p.grad_sq_norm = values[k];
    p.phi_gap = 2.0 * values[k];
    p.consensus_error = values[k] * values[k];
    p.upper_loss = values[k] + 1.0;
    p.alpha = 0.1;
    r.probes.push_back(p);
  }
  return r;
}

std::vector<long> grid_of(int count, long every) {
  std::vector<long> g;
  for (int k = 0; k < count; ++k) g.push_back(k * every);
  return g;
}

std::vector<double> decaying(int count, double scale, double floor) {
  std::vector<double> v;
  for (int k = 0; k < count; ++k) v.push_back(scale / (1.0 + k) + floor);
  return v;
}

TEST(Consensus, OppositeUnitVectors) {
  Mat x(2, 3);
  x << 1, 0, 0, -1, 0, 0;
  EXPECT_DOUBLE_EQ(consensus_error(state_with(x, 2)), 1.0);
}

TEST(Consensus, ZeroAtConsensusAndTranslationInvariant) {
  Rng rng(1);
  Mat x(5, 3);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = standard_normal(rng);
  const auto s = state_with(x, 2);
  const double base = consensus_error(s);
  auto shifted = s;
  shifted.X.rowwise() += Eigen::RowVector3d(3.0, -7.0, 0.5);
  shifted.Y.rowwise() += Eigen::RowVector2d(1.0, 2.0);
  EXPECT_NEAR(consensus_error(shifted), base, 1e-12 * (1.0 + base));

  const Mat same = x.row(0).replicate(5, 1);
  EXPECT_LE(consensus_error(state_with(same, 2)), 1e-28);
}

TEST(Consensus, MatchesDirectSum) {
  Rng rng(2);
  SwarmState s;
  s.X = Mat(4, 2);
  s.Y = Mat(4, 3);
  s.Z = Mat(4, 3);
  for (Mat* m : {&s.X, &s.Y, &s.Z}) {
    for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = standard_normal(rng);
  }
  double direct = 0.0;
  for (const Mat* m : {&s.X, &s.Y, &s.Z}) {
    for (Eigen::Index j = 0; j < m->cols(); ++j) {
      double mean = 0.0;
      for (Eigen::Index i = 0; i < 4; ++i) mean += (*m)(i, j) / 4.0;
      for (Eigen::Index i = 0; i < 4; ++i) direct += ((*m)(i, j) - mean) * ((*m)(i, j) - mean);
    }
  }
  EXPECT_NEAR(consensus_error(s), direct / 4.0, 1e-12);
}

TEST(Hypergradient, TrivialInstanceNormIsSquaredMeanNorm) {
  const auto p = make_trivial(2, 2);
  Mat x(2, 2);
  x << 2, 0, 0, 4;  // x_bar = (1, 2)
  auto s = state_with(x, 2);
  EXPECT_DOUBLE_EQ(hypergrad_sq_norm(p, s), 5.0);
  s.X << 0, 2, 0, 2;
  EXPECT_DOUBLE_EQ(hypergrad_sq_norm(p, s), 4.0);
}

TEST(Measure, FillsEveryField) {
  const auto p = make_trivial(2, 1);
  Mat x(2, 1);
  x << 1, 3;
  auto s = state_with(x, 1);
  s.t = 17;
  s.Y << 1, 1;
  const Probe pr = measure(p, s, 0.25);
  EXPECT_EQ(pr.t, 17);
  EXPECT_DOUBLE_EQ(pr.grad_sq_norm, 4.0);
  EXPECT_DOUBLE_EQ(pr.consensus_error, 1.0);
  EXPECT_DOUBLE_EQ(pr.upper_loss, 0.5);
  EXPECT_DOUBLE_EQ(pr.phi_gap, 0.5);  // Phi* = 0 at x = 0
  EXPECT_EQ(pr.alpha, 0.25);
}

TEST(TrailingMedian, AgreesWithIndependentImplementation) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int w : {1, 2, 3, 5, 8}) {
    std::vector<double> v(40);
    for (auto& e : v) e = nd(gen);
    EXPECT_EQ(trailing_median(v, w), oracle::trailing_median(v, w)) << w;
  }
}

TEST(Transient, IdenticalRecordsMatchFromTheFirstProbe) {
  const auto g = grid_of(20, 10);
  const auto r = record_from(g, decaying(20, 1.0, 0.01));
  const auto e = transient_cutoff(r, r, 0.0, 3);
  EXPECT_TRUE(e.matched);
  EXPECT_EQ(e.cutoff_iteration, 0);
  EXPECT_EQ(effective_cutoff(e), 0);
}

TEST(Transient, PersistentGapIsUnmatched) {
  const auto g = grid_of(20, 10);
  const auto cen = record_from(g, decaying(20, 1.0, 0.01));
  auto vals = decaying(20, 1.0, 0.01);
  for (auto& v : vals) v *= 2.0;
  const auto dec = record_from(g, vals);
  const auto e = transient_cutoff(dec, cen, 0.1, 5);
  EXPECT_FALSE(e.matched);
  EXPECT_EQ(e.cutoff_iteration, 190);
  EXPECT_EQ(effective_cutoff(e), std::numeric_limits<long>::max());
}

TEST(Transient, CutoffIsTheStartOfTheFinalMatchingRun) {
  const auto g = grid_of(10, 5);
  const std::vector<double> cen(10, 1.0);
  const std::vector<double> dec{9, 1, 1, 9, 9, 1, 1, 1, 1, 1};
  const auto e = transient_cutoff(record_from(g, dec), record_from(g, cen), 0.0, 1);
  EXPECT_TRUE(e.matched);
  EXPECT_EQ(e.cutoff_iteration, 25);
  // a window of 3 hides single outliers but not the pair at 15, 20
  const auto smoothed = transient_cutoff(record_from(g, dec), record_from(g, cen), 0.0, 3);
  EXPECT_EQ(smoothed.cutoff_iteration, 30);
}

TEST(Transient, NonIncreasingInTolerance) {
  const auto g = grid_of(50, 10);
  const auto cen = record_from(g, decaying(50, 1.0, 0.01));
  std::vector<double> vals;
  for (int k = 0; k < 50; ++k) vals.push_back(5.0 / (1.0 + 0.2 * k) + 0.01);
  const auto dec = record_from(g, vals);
  long prev = std::numeric_limits<long>::max();
  for (double tol : {0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 4.0}) {
    const long c = effective_cutoff(transient_cutoff(dec, cen, tol, 3));
    EXPECT_LE(c, prev) << tol;
    prev = c;
  }
}

TEST(Transient, GridMismatchAndMissingMetric) {
  const auto a = record_from(grid_of(5, 10), decaying(5, 1, 0));
  const auto b = record_from(grid_of(5, 20), decaying(5, 1, 0));
  try {
    transient_cutoff(a, b, 0.1, 1);
    FAIL() << "expected GridMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
  }
  auto nan = a;
  for (auto& p : nan.probes) p.phi_gap = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(transient_cutoff(nan, a, 0.1, 1, Metric::PhiGap), Error);
  EXPECT_NO_THROW(transient_cutoff(nan, a, 0.1, 1, Metric::GradSqNorm));
}

TEST(Transient, UsesTheRequestedMetric) {
  const auto g = grid_of(6, 1);
  auto dec = record_from(g, std::vector<double>(6, 1.0));
  const auto cen = record_from(g, std::vector<double>(6, 1.0));
  for (auto& p : dec.probes) p.upper_loss = 100.0;
  EXPECT_TRUE(transient_cutoff(dec, cen, 0.1, 1, Metric::GradSqNorm).matched);
  EXPECT_FALSE(transient_cutoff(dec, cen, 0.1, 1, Metric::UpperLoss).matched);
}

TEST(Summarize, SingleRecordHasZeroError) {
  const auto r = record_from(grid_of(4, 10), {4, 3, 2, 1});
  const auto rows = summarize({r});
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(rows[k].count, 1);
    EXPECT_EQ(rows[k].t, static_cast<long>(10 * k));
    EXPECT_EQ(rows[k].mean.at(Metric::GradSqNorm), r.probes[k].grad_sq_norm);
    EXPECT_EQ(rows[k].std_error.at(Metric::GradSqNorm), 0.0);
  }
}

TEST(Summarize, DuplicatesHaveZeroErrorAndExactMean) {
  const auto r = record_from(grid_of(3, 1), {0.1, 0.7, 1e-17});
  const auto rows = summarize({r, r, r, r, r});
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(rows[k].mean.at(Metric::GradSqNorm), r.probes[k].grad_sq_norm);
    EXPECT_EQ(rows[k].std_error.at(Metric::ConsensusError), 0.0);
  }
}

TEST(Summarize, MeanAndStandardErrorMatchDirectFormula) {
  const auto g = grid_of(2, 1);
  const std::vector<double> vals{1.0, 2.0, 4.0, 7.0};
  std::vector<RunRecord> recs;
  for (double v : vals) recs.push_back(record_from(g, {v, v}));
  const auto rows = summarize(recs);
  // mean 3.5, sample variance 7, se sqrt(7 / 4)
  EXPECT_DOUBLE_EQ(rows[0].mean.at(Metric::GradSqNorm), 3.5);
  EXPECT_DOUBLE_EQ(rows[0].std_error.at(Metric::GradSqNorm), std::sqrt(7.0 / 4.0));
  EXPECT_DOUBLE_EQ(rows[1].mean.at(Metric::UpperLoss), 4.5);
}

TEST(Summarize, InvariantUnderPermutation) {
  const auto g = grid_of(5, 3);
  std::vector<RunRecord> recs;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 7; ++k) {
    std::vector<double> v(5);
    for (auto& e : v) e = u(gen);
    recs.push_back(record_from(g, v, k % 2 ? "ring" : "torus"));
  }
  const auto base = summarize(recs);
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(recs.begin(), recs.end(), gen);
    const auto again = summarize(recs);
    ASSERT_EQ(again.size(), base.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
      EXPECT_EQ(again[k].topology, base[k].topology);
      EXPECT_EQ(again[k].t, base[k].t);
      EXPECT_EQ(again[k].mean, base[k].mean);
      EXPECT_EQ(again[k].std_error, base[k].std_error);
    }
  }
}

TEST(Summarize, GroupsByTopologyAndVariant) {
  const auto g = grid_of(2, 1);
  const auto rows = summarize({record_from(g, {1, 1}, "ring", "so"),
                               record_from(g, {2, 2}, "ring", "fo"),
                               record_from(g, {3, 3}, "ring", "so")});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].variant, "fo");
  EXPECT_EQ(rows[0].count, 1);
  EXPECT_EQ(rows[2].variant, "so");
  EXPECT_EQ(rows[2].count, 2);
  EXPECT_DOUBLE_EQ(rows[2].mean.at(Metric::GradSqNorm), 2.0);
}

TEST(Summarize, RejectsEmptyInputAndMixedGrids) {
  try {
    summarize({});
    FAIL() << "expected EmptyInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  try {
    summarize({record_from(grid_of(3, 1), {1, 2, 3}), record_from(grid_of(3, 2), {1, 2, 3})});
    FAIL() << "expected GridMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
  }
}

TEST(Metrics, NamesRoundTrip) {
  for (Metric m : {Metric::GradSqNorm, Metric::PhiGap, Metric::ConsensusError, Metric::UpperLoss}) {
    EXPECT_EQ(parse_metric(metric_name(m)), m);
  }
  EXPECT_FALSE(parse_metric("loss").has_value());
}

}  // namespace
