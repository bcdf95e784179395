#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "kpca/checks.hpp"
#include "kpca/data.hpp"
#include "test_helpers.hpp"

namespace kpca {
namespace {

using testing::from_rows;
using testing::truth_from;
using testing::vec;

// Gamma = sum_{i,j} (U* P)_{ij} (Sigma (I - P))_{ji} with every product spelled out.
double gamma_brute_force(const GroundTruth& truth, const Mat& w) {
  const Index d = truth.dim();
  const Mat u = truth.basis.transpose() * truth.basis;
  Mat sigma = Mat::Zero(d, d);
  for (Index i = 0; i < truth.k; ++i)
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b)
        sigma(a, b) += truth.spectrum[static_cast<std::size_t>(i)] * truth.basis(i, a) * truth.basis(i, b);
  Mat p = Mat::Zero(d, d);
  for (Index i = 0; i < w.rows(); ++i)
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) p(a, b) += w(i, a) * w(i, b);
  double gamma = 0.0;
  for (Index a = 0; a < d; ++a)
    for (Index b = 0; b < d; ++b) {
      double up = 0.0, sc = 0.0;
      for (Index c = 0; c < d; ++c) {
        up += u(a, c) * p(c, b);
        sc += sigma(b, c) * ((c == a ? 1.0 : 0.0) - p(c, a));
      }
      gamma += up * sc;
    }
  return gamma;
}

GroundTruth random_ranked_truth(Index k, Index d, Rng& rng) {
  std::vector<double> heads(static_cast<std::size_t>(k));
  for (auto& h : heads) h = 0.1 + 1.9 * rng.uniform();
  std::sort(heads.begin(), heads.end(), std::greater<>());
  heads.resize(static_cast<std::size_t>(d), 0.0);
  return truth_from(random_orthonormal_rows(k, d, rng), heads);
}

TEST(GramIdentity, DegenerateSamplesGiveIdentity) {
  const Mat w = from_rows({{1, 0, 0}, {0, 1, 0}});
  const auto in_span = check_gram_identity(w, vec({2, -1, 0}), 0.7);
  const auto orthogonal = check_gram_identity(w, vec({0, 0, 3}), 0.7);
  EXPECT_TRUE(in_span.passed);
  EXPECT_EQ(in_span.worst_violation, 0.0);
  EXPECT_TRUE(orthogonal.passed);
  EXPECT_EQ(orthogonal.worst_violation, 0.0);
}

TEST(InverseBound, DegenerateSampleIsIdentity) {
  const auto rep = check_inverse_bound(from_rows({{1, 0}}), vec({4, 0}), 0.3);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.worst_violation, 0.0);
}

TEST(InverseBound, ScalarGapByAlgebra) {
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat w = random_orthonormal_rows(1, 5, rng);
    const Vec x = gaussian_matrix(5, 1, rng);
    const double s = w.row(0).dot(x);
    const double r2 = (x - s * w.row(0).transpose()).squaredNorm();
    const double eta = 0.5 / std::sqrt(r2 * s * s + 1e-300);
    const double q = eta * eta * r2 * s * s;
    const Mat next = w + eta * s * (x - s * w.row(0).transpose()).transpose();
    const double inverse_gram = 1.0 / next.squaredNorm();
    ASSERT_NEAR(inverse_gram, 1.0 / (1.0 + q), 1e-14);
    ASSERT_NEAR(inverse_gram - (1.0 - q), q * q / (1.0 + q), 1e-14);
    ASSERT_TRUE(check_inverse_bound(w, x, eta).passed);
  }
}

TEST(StationaryBound, TrueSubspace) {
  Rng rng(52);
  const auto truth = random_ranked_truth(3, 10, rng);
  const auto rep = check_stationary_bound(truth, truth.basis);
  EXPECT_TRUE(rep.passed);
  EXPECT_LE(std::abs(gamma_brute_force(truth, truth.basis)), 1e-12);
}

TEST(StationaryBound, OrthogonalSubspaceHoldsWithEquality) {
  const auto truth = truth_from(from_rows({{1, 0}}), {1, 0});
  const Mat p = from_rows({{0, 1}});
  EXPECT_NEAR(subspace_distance(truth, p), 1.0, 1e-15);
  EXPECT_EQ(gamma_brute_force(truth, p), 0.0);
  const auto rep = check_stationary_bound(truth, p);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.worst_violation, 0.0);
}

TEST(StationaryBound, RandomInstancesAgainstBruteForce) {
  Rng rng(53);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto d = static_cast<Index>(2 + rng.below(19));
    const auto k = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(std::min<Index>(5, d - 1))));
    const auto truth = random_ranked_truth(k, d, rng);
    const Mat p = random_orthonormal_rows(k, d, rng);
    const double delta = subspace_distance(truth, p);
    ASSERT_GE(gamma_brute_force(truth, p), truth.lambdak() * delta * (1.0 - delta) - 1e-9);
    ASSERT_TRUE(check_stationary_bound(truth, p).passed);
  }
}

TEST(Sandwich, IsotropicHeadCollapses) {
  Rng rng(54);
  const auto truth = truth_from(random_orthonormal_rows(3, 8, rng), {0.7, 0.7, 0.7, 0, 0, 0, 0, 0});
  const Mat w = random_orthonormal_rows(3, 8, rng);
  const double delta = subspace_distance(truth, w);
  EXPECT_NEAR(expected_reconstruction_error(truth.low_rank_covariance(), w), 0.7 * delta, 1e-12);
  EXPECT_TRUE(check_sandwich(truth, w).passed);
}

TEST(Sandwich, ZeroDistanceZeroMiddle) {
  Rng rng(55);
  const auto truth = random_ranked_truth(2, 6, rng);
  EXPECT_LE(std::abs(expected_reconstruction_error(truth.low_rank_covariance(), truth.basis)), 1e-12);
  EXPECT_TRUE(check_sandwich(truth, truth.basis).passed);
}

TEST(Sandwich, ResidualEnergyMatchesTraceForm) {
  // E ||r||^2 over model samples equals tr(Sigma (I - P)), which the sandwich brackets.
  SpectrumSpec spec;
  spec.d = 8;
  spec.k = 2;
  spec.head_eigenvalues = {2.0, 0.5};
  spec.rotation_seed = 3;
  const auto model = make_spec_covariance(spec);
  Rng rng(56);
  const Mat w = random_orthonormal_rows(2, 8, rng);
  const auto data = sample_gaussian(model, 200000, 7);
  const Mat residual = data.samples - (data.samples * w.transpose()) * w;
  const double mean_r2 = residual.rowwise().squaredNorm().mean();
  const double exact = expected_reconstruction_error(model.covariance, w);
  EXPECT_NEAR(mean_r2, exact, 0.02 * exact);
  const double delta = subspace_distance(model.truth, w);
  EXPECT_LE(0.5 * delta, exact + 1e-12);
  EXPECT_LE(exact, 2.0 * delta + 1e-12);
}

TEST(ExactSuite, AllPassAndDeterministic) {
  const auto a = exact_suite(7, 300);
  const auto b = exact_suite(7, 300);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].passed) << a[i].to_line();
    EXPECT_EQ(a[i].trials, 300u);
    EXPECT_EQ(a[i].to_line(), b[i].to_line());
  }
}

TEST(ExactSuite, InstanceRanges) {
  Rng rng(57);
  for (int i = 0; i < 500; ++i) {
    const auto inst = random_exact_instance(rng);
    const Index d = inst.truth.dim(), k = inst.truth.k, kp = inst.w.rows();
    ASSERT_GE(d, 2);
    ASSERT_LE(d, 30);
    ASSERT_GE(k, 1);
    ASSERT_LE(k, std::min<Index>(5, d - 1));
    ASSERT_GE(kp, k);
    ASSERT_LE(kp, std::min<Index>(8, d));
  }
}

TEST(MetricEquivalence, Passes) { EXPECT_TRUE(metric_equivalence_suite(3, 200).passed); }

TEST(CheckReport, LineFormat) {
  CheckReport rep{"demo"};
  rep.absorb(2.5e-12, 1e-9);
  rep.absorb(1e-3, 1e-9);
  EXPECT_EQ(rep.to_line(), "demo fail 1.000000e-03 2");
}

TEST(PairwiseSum, OrderFixed) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / static_cast<double>(i + 1);
  EXPECT_EQ(pairwise_sum(v), pairwise_sum(v));
  double naive = 0.0;
  for (double x : v) naive += x;
  EXPECT_NEAR(pairwise_sum(v), naive, 1e-12);
}

TEST(IterwiseInputs, Constant) {
  const auto in = IterwiseInputs::make(0.1, 3.0, 1.0, 0.5, 2);
  EXPECT_DOUBLE_EQ(in.c, 2 * 3.0 + 2 * 0.1 * 9.0 + 0.01 * 27.0);
  EXPECT_DOUBLE_EQ(in.lower_bound(0.0), 2.0);
  EXPECT_DOUBLE_EQ(in.lower_bound(0.4), 1.6 + 2 * 0.1 * 0.5 * 0.4 * 0.6 - 0.01 * in.c * 0.4);
}

struct MonteCarloFixture : ::testing::Test {
  void SetUp() override {
    SpectrumSpec spec;
    spec.d = 10;
    spec.k = 2;
    spec.rotation_seed = 8;
    model = make_spec_covariance(spec);
  }
  SpecCovariance model;
};

TEST_F(MonteCarloFixture, ZeroStepIsExact) {
  Rng rng(58);
  const Mat w = perturbed_start(model.truth, 2, 0.3, rng);
  const auto res = monte_carlo_iterwise(w, model, 0.0, 10000, 1);
  EXPECT_TRUE(res.report.passed);
  EXPECT_NEAR(res.mean, 2.0 - res.delta, 1e-12);
  EXPECT_NEAR(res.bound, 2.0 - res.delta, 1e-15);
}

TEST_F(MonteCarloFixture, TrueSubspaceStaysPut) {
  const auto res = monte_carlo_iterwise(model.truth.basis, model, 0.01, 10000, 2);
  EXPECT_TRUE(res.report.passed) << res.report.details;
  EXPECT_NEAR(res.mean, 2.0, 3.0 * res.std_error + 1e-12);
}

TEST_F(MonteCarloFixture, BoundHoldsNearPointThree) {
  Rng rng(59);
  const Mat w = perturbed_start(model.truth, 2, 0.3, rng);
  const auto res = monte_carlo_iterwise(w, model, 0.01, 100000, 3, 1.0, 1);
  EXPECT_NEAR(res.delta, 0.3, 1e-12);
  EXPECT_TRUE(res.report.passed) << res.report.details;
  EXPECT_GT(res.mean, 2.0 - res.delta);  // expected improvement
}

TEST_F(MonteCarloFixture, StandardErrorShrinks) {
  Rng rng(60);
  const Mat w = perturbed_start(model.truth, 2, 0.4, rng);
  const auto small = monte_carlo_iterwise(w, model, 0.01, 20000, 4, 1.0, 1);
  const auto large = monte_carlo_iterwise(w, model, 0.01, 40000, 4, 1.0, 1);
  EXPECT_GE(small.std_error / large.std_error, 1.3);
}

TEST_F(MonteCarloFixture, DeterministicAcrossThreads) {
  Rng rng(61);
  const Mat w = perturbed_start(model.truth, 2, 0.2, rng);
  const auto one = monte_carlo_iterwise(w, model, 0.01, 10000, 5, 1.0, 1);
  const auto three = monte_carlo_iterwise(w, model, 0.01, 10000, 5, 1.0, 3);
  EXPECT_EQ(one.mean, three.mean);
  EXPECT_EQ(one.std_error, three.std_error);
  EXPECT_EQ(one.report.to_line(), three.report.to_line());
}

TEST_F(MonteCarloFixture, Preconditions) {
  try {
    monte_carlo_iterwise(model.truth.basis, model, 0.01, 9999, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientTrials);
  }
  EXPECT_THROW(monte_carlo_iterwise(2.0 * model.truth.basis, model, 0.01, 10000, 1), Error);
}

TEST(PerturbedStart, HitsTarget) {
  Rng rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    const auto truth = random_ranked_truth(3, 20, rng);
    const double target = 2.5 * rng.uniform();
    const auto rows = static_cast<Index>(3 + rng.below(4));
    const Mat w = perturbed_start(truth, rows, target, rng);
    ASSERT_LE(gram_error(w), 1e-12);
    ASSERT_NEAR(subspace_distance(truth, w), target, 1e-10);
  }
}

TEST(Envelope, StartAndMachineZero) {
  TheoremRateInputs in{4.0, 1.0, 1.0, 2, 0.5, 0.1, 2.0};
  const double eta = theorem_learning_rate(in);
  EXPECT_NEAR(theorem_envelope(0, eta, in, 1.0), 1.0 / 0.9, 1e-15);
  ConvergenceTrace trace;
  for (std::uint64_t t : {1, 1000, 100000, 10000000}) {
    TraceRecord rec;
    rec.iter = t;
    rec.delta = t < 100000 ? 0.2 : 0.0;
    rec.in_basin = true;
    trace.records.push_back(rec);
  }
  const auto res = theorem_envelope_check(trace, in, eta);
  EXPECT_EQ(res.in_basin, 4u);
  EXPECT_EQ(res.within, 4u);
  EXPECT_TRUE(res.report.passed);
}

TEST(Envelope, CountsOutsideAndExits) {
  TheoremRateInputs in{4.0, 1.0, 1.0, 2, 0.5, 0.1, 2.0};
  const double eta = theorem_learning_rate(in);
  ConvergenceTrace trace;
  const std::uint64_t late = static_cast<std::uint64_t>(10.0 / (eta * 0.5));  // envelope < 1e-3 here
  for (auto [t, delta, basin] : std::vector<std::tuple<std::uint64_t, double, bool>>{
           {1, 0.2, true}, {late, 0.2, true}, {late + 1, 0.8, false}, {late + 2, 0.0, true}}) {
    TraceRecord rec;
    rec.iter = t;
    rec.delta = delta;
    rec.in_basin = basin;
    trace.records.push_back(rec);
  }
  const auto res = theorem_envelope_check(trace, in, eta);
  EXPECT_EQ(res.in_basin, 3u);
  EXPECT_EQ(res.within, 2u);
  EXPECT_EQ(res.basin_exits, 1u);
  EXPECT_FALSE(res.report.passed);
}

TEST(Envelope, RejectsOtherRates) {
  TheoremRateInputs in{4.0, 1.0, 1.0, 2, 0.5, 0.1, 2.0};
  try {
    theorem_envelope_check(ConvergenceTrace{}, in, 2.0 * theorem_learning_rate(in));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotTheoremRate);
  }
}

}  // namespace
}  // namespace kpca
