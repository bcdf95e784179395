#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "kpca/linalg.hpp"

namespace kpca {

/// Orthonormal basis of the true principal subspace plus the full
/// covariance spectrum (descending).
struct GroundTruth {
  Mat basis;                      // k x d
  std::vector<double> spectrum;   // d values, descending
  Index k = 0;

  Index dim() const { return basis.cols(); }
  double lambda1() const { return spectrum.front(); }
  double lambdak() const { return spectrum[static_cast<std::size_t>(k - 1)]; }

  /// Rank-k covariance sum_{i<=k} lambda_i u_i u_i^T.
  Mat low_rank_covariance() const {
    Vec head(k);
    for (Index i = 0; i < k; ++i) head(i) = spectrum[static_cast<std::size_t>(i)];
    return basis.transpose() * head.asDiagonal() * basis;
  }
};

struct DistanceReport {
  double delta = 0.0;
  double ln_delta = 0.0;
  double recon_error = 0.0;
};

/// Slack allowed between the raw trace form of the distance and [0, k].
inline constexpr double kDistanceSlack = 1e-9;

inline double ln_or_neg_inf(double delta) {
  return delta > 0.0 ? std::log(delta) : -std::numeric_limits<double>::infinity();
}

namespace detail {

inline void require_comparable(const GroundTruth& truth, const Mat& w) {
  if (w.cols() != truth.basis.cols()) throw Error(Errc::DimensionMismatch, "iterate and truth differ in dimension");
  if (w.rows() < truth.k) throw Error(Errc::DimensionMismatch, "iterate has fewer rows than the true rank");
  if (!has_orthonormal_rows(w, 1e-10)) throw Error(Errc::NotOrthonormal, "iterate rows are not orthonormal");
}

}  // namespace detail

/// Delta = k - tr(U* W^T W) for an iterate with orthonormal rows, clamped to
/// [0, k]. Rows(W) may exceed k; then Delta measures containment of the true
/// subspace in the row space of W.
inline double subspace_distance(const GroundTruth& truth, const Mat& w) {
  detail::require_comparable(truth, w);
  const double k = static_cast<double>(truth.k);
  const double captured = (truth.basis * w.transpose()).squaredNorm();
  return std::clamp(k - captured, 0.0, k);
}

/// Unclamped trace form, exposed for the clamp-slack property test.
inline double subspace_distance_raw(const GroundTruth& truth, const Mat& w) {
  return static_cast<double>(truth.k) - (truth.basis * w.transpose()).squaredNorm();
}

/// Sum of squared sines of the canonical angles, computed from the singular
/// values of the true basis projected onto the orthogonal complement of the
/// row space of W. Only defined for rows(W) == k.
inline double canonical_angle_distance(const GroundTruth& truth, const Mat& w) {
  detail::require_comparable(truth, w);
  if (w.rows() != truth.k) throw Error(Errc::DimensionMismatch, "canonical angles need equal dimensions");
  const Eigen::MatrixXd outside = truth.basis - (truth.basis * w.transpose()) * w;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(outside);
  return svd.singularValues().squaredNorm();
}

/// Mean of ||x - W^T W x||^2 over the rows of samples.
inline double reconstruction_error(const Mat& samples, const Mat& w) {
  if (samples.rows() == 0) throw Error(Errc::EmptyDataSet, "no samples");
  if (samples.cols() != w.cols()) throw Error(Errc::DimensionMismatch, "sample and iterate dimensions differ");
  if (!has_orthonormal_rows(w, 1e-10)) throw Error(Errc::NotOrthonormal, "iterate rows are not orthonormal");
  const Mat residual = samples - (samples * w.transpose()) * w;
  return residual.squaredNorm() / static_cast<double>(samples.rows());
}

/// Exact population reconstruction error tr(Sigma (I - W^T W)).
inline double expected_reconstruction_error(const Mat& covariance, const Mat& w) {
  if (covariance.rows() != w.cols()) throw Error(Errc::DimensionMismatch, "covariance and iterate dimensions differ");
  const Mat projected = w * covariance;
  return covariance.trace() - (projected.array() * w.array()).sum();
}

/// Tail-over-head eigenvalue mass: sum_{i>k} lambda_i / sum_{j<=k} lambda_j.
inline double noise_over_signal(const std::vector<double>& spectrum, Index k) {
  if (k < 1 || k > static_cast<Index>(spectrum.size())) throw Error(Errc::DimensionMismatch, "k out of range");
  const auto split = spectrum.begin() + k;
  const double head = std::accumulate(spectrum.begin(), split, 0.0);
  const double tail = std::accumulate(split, spectrum.end(), 0.0);
  if (!(head > 0.0)) throw Error(Errc::ZeroSignal, "head eigenvalue mass is zero");
  return tail / head;
}

}  // namespace kpca
