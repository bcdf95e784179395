#pragma once

// Dense kernels shared by every other module. Matrices are row-major so that
// an iterate W (k' x d) stores one basis vector per contiguous row.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "kpca/error.hpp"
#include "kpca/random.hpp"

namespace kpca {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Eigenpairs of a symmetric matrix, largest first; eigenvectors are rows.
struct Spectrum {
  std::vector<double> values;
  Mat vectors;
};

/// Rank test threshold for orthonormalize_rows, relative to the largest
/// diagonal entry of the triangular factor.
inline constexpr double kRankTolerance = 1e-12;

/// ||W W^T - I||_F.
inline double gram_error(const Mat& w) {
  const Mat gram = w * w.transpose();
  return (gram - Mat::Identity(w.rows(), w.rows())).norm();
}

inline bool has_orthonormal_rows(const Mat& w, double tol = 1e-10) { return gram_error(w) <= tol; }

/// Householder QR of W^T; returns Q^T so that the rows of the result are an
/// orthonormal basis of the row space of W. Columns of Q are flipped so the
/// triangular factor has a non-negative diagonal, which makes the output
/// unique for full-rank input.
inline Mat orthonormalize_rows(const Mat& w) {
  const Index rows = w.rows();
  const Index cols = w.cols();
  if (rows == 0 || cols == 0) throw Error(Errc::DimensionMismatch, "empty matrix");
  if (rows > cols) throw Error(Errc::RankDeficient, "more rows than columns");
  if (!w.allFinite()) throw Error(Errc::NonFinite, "matrix has non-finite entries");

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(w.transpose());
  const Eigen::VectorXd diag = qr.matrixQR().diagonal();
  const double largest = diag.cwiseAbs().maxCoeff();
  const double smallest = diag.cwiseAbs().minCoeff();
  if (!(largest > 0.0) || smallest <= kRankTolerance * largest) {
    throw Error(Errc::RankDeficient, "row rank test failed");
  }

  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols, rows);
  for (Index j = 0; j < rows; ++j) {
    if (diag(j) < 0.0) q.col(j) = -q.col(j);
  }
  return q.transpose();
}

/// rows x cols matrix of i.i.d. standard normals, filled row by row.
inline Mat gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Mat g(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) g(i, j) = rng.normal();
  return g;
}

/// Haar-distributed d x d rotation (determinant +1). The rows of the
/// orthonormalized Gaussian matrix have the sign of det(G) as determinant;
/// when negative the last row is flipped, which leaves every leading row
/// space unchanged.
inline Mat random_orthogonal(Index d, std::uint64_t seed) {
  if (d < 1) throw Error(Errc::DimensionMismatch, "dimension must be positive");
  Rng rng(seed);
  const Mat g = gaussian_matrix(d, d, rng);
  Mat q = orthonormalize_rows(g);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(g);
  int sign = lu.permutationP().determinant();
  for (Index i = 0; i < d; ++i) sign *= lu.matrixLU()(i, i) < 0.0 ? -1 : 1;
  if (sign < 0) q.row(d - 1) *= -1.0;
  return q;
}

/// Random k' x d matrix with orthonormal rows (normal entries, orthonormalized).
inline Mat random_orthonormal_rows(Index rows, Index cols, Rng& rng) {
  return orthonormalize_rows(gaussian_matrix(rows, cols, rng));
}

inline double max_asymmetry(const Mat& s) { return (s - s.transpose()).cwiseAbs().maxCoeff(); }

/// The k largest eigenpairs of a symmetric matrix. Each eigenvector is
/// normalized so that its largest-magnitude entry is positive. Eigenvalues
/// of a positive semidefinite input that come out negative only through
/// round-off are reported as zero.
inline Spectrum top_k_eigen(const Mat& s, Index k) {
  if (s.rows() != s.cols() || s.rows() == 0) throw Error(Errc::DimensionMismatch, "matrix must be square");
  if (k < 1 || k > s.rows()) throw Error(Errc::DimensionMismatch, "k out of range");
  if (!s.allFinite()) throw Error(Errc::NonFinite, "matrix has non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (max_asymmetry(s) > 1e-10 * scale) throw Error(Errc::NotSymmetric, "matrix is not symmetric");

  const Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw Error(Errc::ConvergenceFailure, "symmetric eigensolver failed");

  const Index n = s.rows();
  const double roundoff = 64.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * sym.norm();
  const bool psd = solver.eigenvalues().minCoeff() >= -roundoff;

  Spectrum out;
  out.values.reserve(static_cast<std::size_t>(k));
  out.vectors.resize(k, n);
  for (Index i = 0; i < k; ++i) {
    const Index src = n - 1 - i;
    double value = solver.eigenvalues()(src);
    if (psd && value < 0.0) value = 0.0;
    out.values.push_back(value);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.vectors.row(i) = v.transpose();
  }
  return out;
}

/// Empirical second-moment matrix (1/n) X^T X of the rows of X.
inline Mat second_moment(const Mat& samples) {
  Mat cov = Mat::Zero(samples.cols(), samples.cols());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(samples.transpose(), 1.0 / static_cast<double>(samples.rows()));
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov;
}

}  // namespace kpca
