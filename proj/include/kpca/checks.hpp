#pragma once

// Executable validators for the algebraic identities and inequalities that
// underpin the convergence analysis of matrix Krasulina.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kpca/data.hpp"
#include "kpca/linalg.hpp"
#include "kpca/metrics.hpp"
#include "kpca/solvers.hpp"

namespace kpca {

/// Absolute tolerance for exact algebraic identities at d <= 30.
inline constexpr double kIdentityTolerance = 1e-9;

struct CheckReport {
  CheckReport(std::string n = {}) : name(std::move(n)) {}

  std::string name;
  bool passed = true;
  double worst_violation = 0.0;
  std::uint64_t trials = 0;
  std::string details;

  /// `name status worst_violation trials`
  std::string to_line() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6e", worst_violation);
    return name + ' ' + (passed ? "pass" : "fail") + ' ' + buf + ' ' + std::to_string(trials);
  }

  /// Folds one trial into the running worst case.
  void absorb(double violation, double tol) {
    ++trials;
    worst_violation = std::max(worst_violation, violation);
    if (violation > tol) passed = false;
  }
};

/// Sum with a fixed pairwise tree, independent of how terms were produced.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const auto half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace detail {

struct KrasulinaPieces {
  Vec s;
  Vec r;
  Mat next;  // un-orthonormalized iterate
};

inline KrasulinaPieces krasulina_pieces(const Mat& w, const Vec& x, double eta) {
  KrasulinaPieces p;
  p.s = w * x;
  p.r = x - w.transpose() * p.s;
  p.next = w + (eta * p.s) * p.r.transpose();
  return p;
}

}  // namespace detail

/// W+ (W+)^T == I + eta^2 ||r||^2 s s^T for one Krasulina step from
/// orthonormal W.
inline CheckReport check_gram_identity(const Mat& w, const Vec& x, double eta) {
  const auto p = detail::krasulina_pieces(w, x, eta);
  const Mat expected = Mat::Identity(w.rows(), w.rows()) + (eta * eta * p.r.squaredNorm()) * (p.s * p.s.transpose());
  CheckReport rep{"gram_identity"};
  rep.absorb(((p.next * p.next.transpose()) - expected).norm(), kIdentityTolerance);
  return rep;
}

/// lambda_min((W+ W+^T)^{-1}) >= 1 - eta^2 ||r||^2 ||s||^2.
inline CheckReport check_inverse_bound(const Mat& w, const Vec& x, double eta) {
  const auto p = detail::krasulina_pieces(w, x, eta);
  const double excess = eta * eta * p.r.squaredNorm() * p.s.squaredNorm();
  const Eigen::MatrixXd gram = p.next * p.next.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double inverse_min = 1.0 / eig.eigenvalues().maxCoeff();
  CheckReport rep{"inverse_bound"};
  rep.absorb(std::max(0.0, (1.0 - excess) - inverse_min), kIdentityTolerance);
  return rep;
}

/// Gamma = tr(U* P Sigma (I - P)) >= lambda_k Delta (1 - Delta), and Gamma = 0
/// at Delta = 0. Sigma is the rank-k covariance carried by `truth`.
inline CheckReport check_stationary_bound(const GroundTruth& truth, const Mat& w) {
  const Index d = truth.dim();
  const Mat sigma = truth.low_rank_covariance();
  const Mat u_star = truth.basis.transpose() * truth.basis;
  const Mat p = w.transpose() * w;
  const Mat complement = Mat::Identity(d, d) - p;
  const double gamma = (u_star * p * sigma * complement).trace();
  const double delta = subspace_distance(truth, w);

  CheckReport rep{"stationary_bound"};
  double violation = std::max(0.0, truth.lambdak() * delta * (1.0 - delta) - gamma);
  if (delta <= 1e-12) violation = std::max(violation, std::abs(gamma));
  rep.absorb(violation, kIdentityTolerance);
  return rep;
}

/// lambda_k Delta <= tr(Sigma (I - P)) <= lambda_1 Delta.
inline CheckReport check_sandwich(const GroundTruth& truth, const Mat& w) {
  const double delta = subspace_distance(truth, w);
  const double middle = expected_reconstruction_error(truth.low_rank_covariance(), w);
  CheckReport rep{"sandwich"};
  const double below = truth.lambdak() * delta - middle;
  const double above = middle - truth.lambda1() * delta;
  rep.absorb(std::max({0.0, below, above}), kIdentityTolerance);
  return rep;
}

// ---------------------------------------------------------------------------
// Randomized instances for the exact suite

/// d in [2, 30], k in [1, min(5, d-1)], k' in [k, min(8, d)], a rank-k
/// spectrum with heads in [0.1, 2], orthonormal W, a normal sample x and a
/// step size with eta^2 ||r||^2 ||s||^2 < 1.
struct ExactInstance {
  GroundTruth truth;
  Mat w;
  Vec x;
  double eta = 0.0;
};

inline ExactInstance random_exact_instance(Rng& rng) {
  ExactInstance inst;
  const auto d = static_cast<Index>(2 + rng.below(29));
  const auto k = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(std::min<Index>(5, d - 1))));
  const Index kp_max = std::min<Index>(8, d);
  const auto kp = static_cast<Index>(k + static_cast<Index>(rng.below(static_cast<std::uint64_t>(kp_max - k + 1))));

  std::vector<double> heads(static_cast<std::size_t>(k));
  for (auto& h : heads) h = 0.1 + 1.9 * rng.uniform();
  std::sort(heads.begin(), heads.end(), std::greater<>());
  inst.truth.k = k;
  inst.truth.basis = random_orthonormal_rows(k, d, rng);
  inst.truth.spectrum = heads;
  inst.truth.spectrum.resize(static_cast<std::size_t>(d), 0.0);

  inst.w = random_orthonormal_rows(kp, d, rng);
  inst.x.resize(d);
  for (Index i = 0; i < d; ++i) inst.x(i) = rng.normal();

  const Vec s = inst.w * inst.x;
  const double rs = (inst.x - inst.w.transpose() * s).norm() * s.norm();
  const double eta_max = rs > 0.0 ? std::min(1.0, 0.99 / rs) : 1.0;
  inst.eta = eta_max * (0.01 + 0.99 * rng.uniform());
  return inst;
}

/// Runs each exact check on `trials` random instances derived from `seed`.
inline std::vector<CheckReport> exact_suite(std::uint64_t seed, std::uint64_t trials = 1000) {
  std::vector<CheckReport> reports = {{"gram_identity"}, {"inverse_bound"}, {"stationary_bound"}, {"sandwich"}};
  Rng rng(seed, Stream::Instances);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const ExactInstance inst = random_exact_instance(rng);
    const CheckReport single[] = {
        check_gram_identity(inst.w, inst.x, inst.eta),
        check_inverse_bound(inst.w, inst.x, inst.eta),
        check_stationary_bound(inst.truth, inst.w),
        check_sandwich(inst.truth, inst.w),
    };
    for (std::size_t i = 0; i < reports.size(); ++i) reports[i].absorb(single[i].worst_violation, kIdentityTolerance);
  }
  for (auto& rep : reports) rep.details = "tolerance 1e-9, d in [2,30]";
  return reports;
}

/// subspace_distance vs canonical_angle_distance on random equal-dimension
/// pairs with d in [2, 50].
inline CheckReport metric_equivalence_suite(std::uint64_t seed, std::uint64_t trials = 1000) {
  CheckReport rep{"metric_equivalence"};
  Rng rng(seed, Stream::Instances);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto d = static_cast<Index>(2 + rng.below(49));
    const auto k = static_cast<Index>(1 + rng.below(static_cast<std::uint64_t>(d)));
    GroundTruth truth;
    truth.k = k;
    truth.basis = random_orthonormal_rows(k, d, rng);
    truth.spectrum.assign(static_cast<std::size_t>(d), 0.0);
    std::fill_n(truth.spectrum.begin(), k, 1.0);
    const Mat w = random_orthonormal_rows(k, d, rng);
    rep.absorb(std::abs(subspace_distance(truth, w) - canonical_angle_distance(truth, w)), kIdentityTolerance);
  }
  rep.details = "tolerance 1e-9, d in [2,50]";
  return rep;
}

// ---------------------------------------------------------------------------
// Iteration-wise improvement, Monte Carlo

/// Constants of the one-step lower bound
///   E[tr(U* P+)] >= tr(U* P) + 2 eta lambda_k Delta (1 - Delta) - eta^2 C lambda_1 Delta,
/// with C = k b + 2 eta b^2 + eta^2 b^3.
struct IterwiseInputs {
  double eta = 0.0;
  double b = 0.0;
  double lambda1 = 0.0;
  double lambdak = 0.0;
  Index k = 0;
  double c = 0.0;

  static IterwiseInputs make(double eta, double b, double lambda1, double lambdak, Index k) {
    const double kd = static_cast<double>(k);
    return {eta, b, lambda1, lambdak, k, kd * b + 2.0 * eta * b * b + eta * eta * b * b * b};
  }

  double lower_bound(double delta) const {
    const double captured = static_cast<double>(k) - delta;
    return captured + 2.0 * eta * lambdak * delta * (1.0 - delta) - eta * eta * c * lambda1 * delta;
  }
};

struct IterwiseResult {
  CheckReport report;
  IterwiseInputs inputs;
  double delta = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
};

inline constexpr std::uint64_t kMinMonteCarloTrials = 10000;
inline constexpr double kNormQuantile = 0.999;
inline constexpr Index kNormPilotSamples = 100000;

/// Estimates E[tr(U* P+)] after one Krasulina step from W by averaging over
/// independent samples of the (strictly rank-k) model and compares it with
/// the lower bound minus three standard errors. The sample-norm bound b is
/// the 0.999 empirical quantile of ||x||^2 times `b_safety`, since the
/// Gaussian model has no almost-sure bound. Trials use per-trial RNG
/// substreams and a fixed reduction tree, so the result does not depend on
/// `threads`.
inline IterwiseResult monte_carlo_iterwise(const Mat& w, const SpecCovariance& model, double eta,
                                           std::uint64_t trials, std::uint64_t seed, double b_safety = 1.0,
                                           unsigned threads = 0) {
  if (trials < kMinMonteCarloTrials) throw Error(Errc::InsufficientTrials, "need at least 10^4 trials");
  if (!(eta >= 0.0)) throw Error(Errc::InvalidInputs, "eta must be non-negative");
  const GroundTruth& truth = model.truth;
  if (!has_orthonormal_rows(w, 1e-10)) throw Error(Errc::NotOrthonormal, "W must have orthonormal rows");

  IterwiseResult out;
  {
    const auto pilot = sample_gaussian(model, kNormPilotSamples, substream_seed(seed, static_cast<std::uint64_t>(Stream::Pilot)));
    const double b = norm_sq_quantile(pilot.samples, kNormQuantile) * b_safety;
    out.inputs = IterwiseInputs::make(eta, b, truth.lambda1(), truth.lambdak(), truth.k);
  }
  out.delta = subspace_distance(truth, w);
  out.bound = out.inputs.lower_bound(out.delta);

  const Index active = detail::active_directions(model);
  const std::uint64_t trial_master = substream_seed(seed, static_cast<std::uint64_t>(Stream::Trials));
  std::vector<double> captured(trials), captured_sq(trials);
  auto run_range = [&](std::uint64_t begin, std::uint64_t end) {
    Vec x(model.dim());
    for (std::uint64_t t = begin; t < end; ++t) {
      Rng rng(substream_seed(trial_master, t));
      detail::draw_spec_sample(model, active, rng, x);
      Mat next = w;
      if (eta > 0.0) next = orthonormalize_rows(detail::krasulina_pieces(w, x, eta).next);
      const double v = (truth.basis * next.transpose()).squaredNorm();
      captured[t] = v;
      captured_sq[t] = v * v;
    }
  };
  unsigned workers = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, trials));
  if (workers <= 1) {
    run_range(0, trials);
  } else {
    std::vector<std::jthread> pool;
    const std::uint64_t chunk = (trials + workers - 1) / workers;
    for (unsigned i = 0; i < workers; ++i) {
      const std::uint64_t b = i * chunk;
      const std::uint64_t e = std::min<std::uint64_t>(trials, b + chunk);
      if (b < e) pool.emplace_back(run_range, b, e);
    }
  }

  const double n = static_cast<double>(trials);
  out.mean = pairwise_sum(captured) / n;
  const double second = pairwise_sum(captured_sq) / n;
  const double variance = std::max(0.0, (second - out.mean * out.mean) * n / (n - 1.0));
  out.std_error = std::sqrt(variance / n);

  // 1e-12 absorbs orthonormalization round-off when the step is a no-op.
  const double shortfall = out.bound - out.mean;
  out.report.name = "iterwise_improvement";
  out.report.trials = trials;
  out.report.worst_violation = std::max(0.0, shortfall);
  out.report.passed = shortfall <= 3.0 * out.std_error + 1e-12;
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "delta=%.6g mean=%.10g bound=%.10g se=%.3g b=%.6g (q%.3f of ||x||^2 x %.3g; Gaussian data is "
                "unbounded so b is an empirical bound) C=%.6g",
                out.delta, out.mean, out.bound, out.std_error, out.inputs.b, kNormQuantile, b_safety, out.inputs.c);
  out.report.details = buf;
  return out;
}

// ---------------------------------------------------------------------------
// Convergence envelope

inline constexpr double kEnvelopeSlack = 10.0;

/// exp(-t eta tau lambda_k) / (1 - delta), times the slack factor.
inline double theorem_envelope(std::uint64_t t, double eta, const TheoremRateInputs& in, double slack = kEnvelopeSlack) {
  return slack * std::exp(-static_cast<double>(t) * eta * in.tau * in.lambdak) / (1.0 - in.delta);
}

struct EnvelopeResult {
  CheckReport report;
  std::uint64_t within = 0;
  std::uint64_t in_basin = 0;
  std::uint64_t basin_exits = 0;
};

/// Compares every in-basin checkpoint of a single trace against the
/// envelope. The bound concerns a conditional expectation, so one run may
/// legitimately exceed it; aggregate across seeds for a distributional test.
inline EnvelopeResult theorem_envelope_check(const ConvergenceTrace& trace, const TheoremRateInputs& inputs, double eta) {
  const double expected = theorem_learning_rate(inputs);
  if (std::abs(eta - expected) > 1e-12 * expected)
    throw Error(Errc::NotTheoremRate, "trace was not produced with the theorem learning rate");
  EnvelopeResult out;
  out.report.name = "theorem_envelope";
  bool was_in = false;
  for (const auto& rec : trace.records) {
    if (was_in && !rec.in_basin) ++out.basin_exits;
    was_in = rec.in_basin;
    if (!rec.in_basin) continue;
    ++out.in_basin;
    const double excess = rec.delta - theorem_envelope(rec.iter, eta, inputs);
    out.report.absorb(std::max(0.0, excess), 0.0);
    if (excess <= 0.0) ++out.within;
  }
  out.report.details = "in_basin=" + std::to_string(out.in_basin) + " within=" + std::to_string(out.within) +
                       " basin_exits=" + std::to_string(out.basin_exits) + " slack=10";
  return out;
}

/// Orthonormal k' x d start with Delta close to `target` (relative to the
/// truth), obtained by tilting the true basis toward random directions.
inline Mat perturbed_start(const GroundTruth& truth, Index rows, double target, Rng& rng) {
  const Index d = truth.dim();
  if (rows < truth.k || rows > d) throw Error(Errc::DimensionMismatch, "rows must lie in [k, d]");
  if (!(target >= 0.0 && target < static_cast<double>(truth.k)))
    throw Error(Errc::InvalidInputs, "target distance out of range");
  Mat start(rows, d);
  start.topRows(truth.k) = truth.basis;
  if (rows > truth.k) start.bottomRows(rows - truth.k) = gaussian_matrix(rows - truth.k, d, rng);
  start = orthonormalize_rows(start);
  // Noise orthogonal to the start: W(theta) = cos(theta) W + sin(theta) N has
  // Delta = k sin^2(theta) when the k true rows are rotated equally.
  Mat noise = gaussian_matrix(rows, d, rng);
  noise -= (noise * start.transpose()) * start;
  Mat stacked(2 * rows, d);
  stacked << start, noise;
  const Mat basis = orthonormalize_rows(stacked);
  const Mat n_orth = basis.bottomRows(rows);
  const double sin_sq = target / static_cast<double>(truth.k);
  const Mat w = std::sqrt(1.0 - sin_sq) * start + std::sqrt(sin_sq) * n_orth;
  return orthonormalize_rows(w);
}

}  // namespace kpca
