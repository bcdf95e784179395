#pragma once

// Streaming k-PCA solvers.
//
// Matrix Krasulina: with orthonormal W (k' x d), s = W x and r = x - W^T s,
//   W <- W + eta * s r^T,
// followed by row orthonormalization before the next step. Oja's update
// replaces r by x. VR-PCA is the block variance-reduced Oja method; the
// power method multiplies by the empirical covariance once per epoch.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kpca/data.hpp"
#include "kpca/linalg.hpp"
#include "kpca/metrics.hpp"

namespace kpca {

struct SolverState {
  Mat w;  // k' x d
  std::uint64_t iter = 0;
  std::uint64_t samples_seen = 0;
  bool orthonormal = false;

  /// State whose iterate is the orthonormalized initial matrix.
  static SolverState from_init(const Mat& init) {
    SolverState s;
    s.w = orthonormalize_rows(init);
    s.orthonormal = true;
    return s;
  }
};

inline void orthonormalize(SolverState& state) {
  if (state.orthonormal) return;
  state.w = orthonormalize_rows(state.w);
  state.orthonormal = true;
}

enum class RateKind { Constant, InverseTime, Theorem };

/// Learning-rate rule: constant eta, eta / (t + offset), or a constant taken
/// from theorem_learning_rate.
struct RateSchedule {
  RateKind kind = RateKind::Constant;
  double eta = 0.0;
  double offset = 0.0;

  static RateSchedule constant(double eta) { return {RateKind::Constant, eta, 0.0}; }
  static RateSchedule inverse_time(double c, double offset = 0.0) { return {RateKind::InverseTime, c, offset}; }
  static RateSchedule theorem(double eta) { return {RateKind::Theorem, eta, 0.0}; }

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw Error(Errc::InvalidConfig, "learning rate must be positive");
    if (!(offset >= 0.0) || !std::isfinite(offset)) throw Error(Errc::InvalidConfig, "rate offset must be >= 0");
  }

  /// Rate for iteration t >= 1.
  double at(std::uint64_t t) const {
    if (kind == RateKind::InverseTime) return eta / (static_cast<double>(t) + offset);
    return eta;
  }
};

struct StepDiagnostics {
  double residual_sq = 0.0;  // ||r||^2
  double coeff_sq = 0.0;     // ||s||^2
};

namespace detail {

inline void require_step_inputs(const SolverState& state, const Vec& x, double eta) {
  if (!state.orthonormal) throw Error(Errc::NotOrthonormal, "orthonormalize the iterate before stepping");
  if (x.size() != state.w.cols()) throw Error(Errc::DimensionMismatch, "sample dimension does not match iterate");
  if (!x.allFinite()) throw Error(Errc::NonFinite, "sample has non-finite entries");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw Error(Errc::InvalidInputs, "learning rate must be positive");
}

}  // namespace detail

/// In-place Krasulina update; returns ||r||^2 and ||s||^2 for diagnostics.
inline StepDiagnostics krasulina_update(SolverState& state, const Vec& x, double eta) {
  detail::require_step_inputs(state, x, eta);
  const Vec s = state.w * x;
  const Vec r = x - state.w.transpose() * s;
  state.w.noalias() += (eta * s) * r.transpose();
  state.orthonormal = false;
  ++state.iter;
  ++state.samples_seen;
  return {r.squaredNorm(), s.squaredNorm()};
}

inline SolverState krasulina_step(SolverState state, const Vec& x, double eta) {
  krasulina_update(state, x, eta);
  return state;
}

/// In-place matrix Oja update W <- W + eta (W x) x^T.
inline StepDiagnostics oja_update(SolverState& state, const Vec& x, double eta) {
  detail::require_step_inputs(state, x, eta);
  const Vec s = state.w * x;
  const double residual_sq = (x - state.w.transpose() * s).squaredNorm();
  state.w.noalias() += (eta * s) * x.transpose();
  state.orthonormal = false;
  ++state.iter;
  ++state.samples_seen;
  return {residual_sq, s.squaredNorm()};
}

inline SolverState oja_step(SolverState state, const Vec& x, double eta) {
  oja_update(state, x, eta);
  return state;
}

// ---------------------------------------------------------------------------
// VR-PCA

/// Epoch anchor: the iterate W~ and the full-data gradient G = W~ Sigma_hat.
struct VrAnchor {
  Mat anchor;
  Mat gradient;
};

inline VrAnchor vr_anchor(const Mat& w, const DataSet& data) {
  if (data.n() < 1) throw Error(Errc::EmptyDataSet, "no samples");
  if (data.d() != w.cols()) throw Error(Errc::DimensionMismatch, "data and iterate dimensions differ");
  const Mat projected = w * data.samples.transpose();  // k' x n
  return {w, (projected * data.samples) / static_cast<double>(data.n())};
}

/// One variance-reduced stochastic step from an orthonormal iterate. The
/// anchor is first rotated onto the current iterate (orthogonal Procrustes,
/// B = U V^T from the SVD of W~ W^T) so that orthonormalization-induced
/// rotations inside the subspace do not corrupt the control variate.
inline StepDiagnostics vr_inner_update(SolverState& state, const VrAnchor& anchor, const Vec& x, double eta) {
  detail::require_step_inputs(state, x, eta);
  const Eigen::MatrixXd overlap = anchor.anchor * state.w.transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(overlap, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat align_t = (svd.matrixU() * svd.matrixV().transpose()).transpose();  // B^T

  const Vec s = state.w * x;
  const double residual_sq = (x - state.w.transpose() * s).squaredNorm();
  const Vec anchor_s = align_t * (anchor.anchor * x);
  state.w.noalias() += (eta * (s - anchor_s)) * x.transpose();
  state.w.noalias() += eta * (align_t * anchor.gradient);
  state.w = orthonormalize_rows(state.w);
  state.orthonormal = true;
  ++state.iter;
  ++state.samples_seen;
  return {residual_sq, s.squaredNorm()};
}

/// One epoch: a full pass for the anchor, then inner_iters variance-reduced
/// steps on samples drawn uniformly with replacement.
inline SolverState vr_pca_epoch(SolverState state, const DataSet& data, double eta, std::uint64_t inner_iters,
                                std::uint64_t seed) {
  if (data.n() < 1) throw Error(Errc::EmptyDataSet, "no samples");
  if (inner_iters < 1) throw Error(Errc::InvalidInputs, "inner_iters must be at least 1");
  if (!state.orthonormal) throw Error(Errc::NotOrthonormal, "orthonormalize the iterate first");
  const VrAnchor anchor = vr_anchor(state.w, data);
  state.samples_seen += static_cast<std::uint64_t>(data.n());
  Rng rng(seed);
  for (std::uint64_t i = 0; i < inner_iters; ++i) {
    const auto idx = static_cast<Index>(rng.below(static_cast<std::uint64_t>(data.n())));
    vr_inner_update(state, anchor, data.samples.row(idx).transpose(), eta);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Batch power method

inline SolverState power_method_epoch(SolverState state, const DataSet& data) {
  if (data.n() < 1) throw Error(Errc::EmptyDataSet, "no samples");
  if (data.d() != state.w.cols()) throw Error(Errc::DimensionMismatch, "data and iterate dimensions differ");
  if (!state.orthonormal) throw Error(Errc::NotOrthonormal, "orthonormalize the iterate first");
  const Mat projected = state.w * data.samples.transpose();
  state.w = orthonormalize_rows((projected * data.samples) / static_cast<double>(data.n()));
  state.orthonormal = true;
  ++state.iter;
  state.samples_seen += static_cast<std::uint64_t>(data.n());
  return state;
}

// ---------------------------------------------------------------------------
// Constant-rate convergence guarantee

struct TheoremRateInputs {
  double b = 0.0;  // almost-sure bound on ||x||^2
  double lambda1 = 0.0;
  double lambdak = 0.0;
  Index k = 0;
  double tau = 0.5;
  double delta = 0.1;
  double sigma_frob = 0.0;

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(b) || !finite(lambda1) || !finite(lambdak) || !finite(sigma_frob))
      throw Error(Errc::InvalidInputs, "inputs must be finite");
    if (!(lambda1 > 0.0) || !(lambdak > 0.0) || lambdak > lambda1)
      throw Error(Errc::InvalidInputs, "need 0 < lambda_k <= lambda_1");
    if (b < lambda1) throw Error(Errc::InvalidInputs, "need b >= lambda_1");
    if (k < 1) throw Error(Errc::InvalidInputs, "need k >= 1");
    if (!(tau > 0.0 && tau < 1.0)) throw Error(Errc::InvalidInputs, "tau must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(Errc::InvalidInputs, "delta must lie in (0, 1)");
    if (sigma_frob < 0.0) throw Error(Errc::InvalidInputs, "sigma_frob must be non-negative");
  }
};

/// The three upper bounds on a constant learning rate that guarantee
/// E[Delta_t | good event] <= exp(-t eta tau lambda_k) / (1 - delta).
struct TheoremRateBranches {
  double stability = 0.0;  // (sqrt 2 - 1) / b
  double drift = 0.0;      // lambda_k tau / (lambda_1 b (k + 3))
  double fluctuation = 0.0;

  double min() const { return std::min({stability, drift, fluctuation}); }
};

inline TheoremRateBranches theorem_rate_branches(const TheoremRateInputs& in) {
  in.validate();
  const double k = static_cast<double>(in.k);
  TheoremRateBranches br;
  br.stability = (std::sqrt(2.0) - 1.0) / in.b;
  br.drift = in.lambdak * in.tau / (in.lambda1 * in.b * (k + 3.0));
  const double spread = in.b + in.sigma_frob;
  br.fluctuation = 2.0 * in.lambdak * in.tau /
                   (16.0 / (1.0 - in.tau) * std::log(1.0 / in.delta) * spread * spread + in.b * (k + 1.0) * in.lambda1);
  return br;
}

inline double theorem_learning_rate(const TheoremRateInputs& in) { return theorem_rate_branches(in).min(); }

/// Basin test for the initial iterate: Delta(W0) <= (1 - tau) / 2, boundary
/// included up to round-off.
inline bool initialization_check(const Mat& w0, const GroundTruth& truth, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(Errc::InvalidInputs, "tau must lie in (0, 1)");
  const Mat w = orthonormalize_rows(w0);
  return subspace_distance(truth, w) <= (1.0 - tau) / 2.0 + 1e-12;
}

// ---------------------------------------------------------------------------
// Stream runner

enum class SolverKind { Krasulina, Oja, VrPca, Power };

inline std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Krasulina: return "krasulina";
    case SolverKind::Oja: return "oja";
    case SolverKind::VrPca: return "vrpca";
    case SolverKind::Power: return "power";
  }
  return "unknown";
}

inline SolverKind parse_solver(std::string_view name) {
  if (name == "krasulina") return SolverKind::Krasulina;
  if (name == "oja") return SolverKind::Oja;
  if (name == "vrpca") return SolverKind::VrPca;
  if (name == "power") return SolverKind::Power;
  throw Error(Errc::InvalidConfig, "unknown solver '" + std::string(name) + "'");
}

struct TraceRecord {
  std::uint64_t iter = 0;
  std::uint64_t samples_seen = 0;
  double delta = 0.0;
  double ln_delta = 0.0;
  double recon_error = 0.0;
  double residual_sq = 0.0;
  bool in_basin = false;
  std::int64_t elapsed_ns = 0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  Mat final_w;  // orthonormalized last iterate
};

struct StreamConfig {
  SolverKind solver = SolverKind::Krasulina;
  RateSchedule schedule;
  std::uint64_t total_iters = 0;
  std::uint64_t eval_every = 1;
  double tau = 0.5;                     // in_basin := Delta <= 1 - tau
  std::uint64_t vr_inner_iters = 0;     // 0 means one inner step per sample (n)
  bool record_time = false;             // elapsed_ns stays 0 unless set
  std::shared_ptr<const DataSet> eval_set;
};

/// Runs a solver for total_iters iterations, recording a checkpoint every
/// eval_every iterations. One iteration is a single stochastic step for
/// krasulina, oja and vrpca (whose anchor passes only advance samples_seen)
/// and one full epoch for power. The source is reseeded with `seed`, so a
/// run is a pure function of its arguments when record_time is off.
inline ConvergenceTrace run_stream(const StreamConfig& cfg, const Mat& init, SampleSource source,
                                   const GroundTruth& truth, std::uint64_t seed) {
  if (cfg.total_iters < 1) throw Error(Errc::InvalidConfig, "total_iters must be at least 1");
  if (cfg.eval_every < 1) throw Error(Errc::InvalidConfig, "eval_every must be at least 1");
  if (init.cols() != source.dim()) throw Error(Errc::DimensionMismatch, "init and source dimensions differ");
  if (cfg.solver != SolverKind::Power) cfg.schedule.validate();
  const DataSet* data = source.dataset();
  if ((cfg.solver == SolverKind::VrPca || cfg.solver == SolverKind::Power) && data == nullptr)
    throw Error(Errc::InvalidConfig, std::string(to_string(cfg.solver)) + " needs a finite dataset");

  source.reseed(seed);
  SolverState state = SolverState::from_init(init);
  const auto start = std::chrono::steady_clock::now();

  ConvergenceTrace trace;
  trace.records.reserve(static_cast<std::size_t>(cfg.total_iters / cfg.eval_every));
  const SpecCovariance* model = source.model();
  const DataSet* eval = cfg.eval_set ? cfg.eval_set.get() : data;

  auto record = [&](double residual_sq) {
    const Mat w = state.orthonormal ? state.w : orthonormalize_rows(state.w);
    TraceRecord rec;
    rec.iter = state.iter;
    rec.samples_seen = state.samples_seen;
    rec.delta = subspace_distance(truth, w);
    rec.ln_delta = ln_or_neg_inf(rec.delta);
    if (model != nullptr && !cfg.eval_set) {
      rec.recon_error = std::max(0.0, expected_reconstruction_error(model->covariance, w));
    } else if (eval != nullptr) {
      rec.recon_error = reconstruction_error(eval->samples, w);
    }
    rec.residual_sq = residual_sq;
    rec.in_basin = rec.delta <= 1.0 - cfg.tau;
    if (cfg.record_time) {
      rec.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
    }
    trace.records.push_back(rec);
  };

  Vec x(source.dim());
  switch (cfg.solver) {
    case SolverKind::Krasulina:
    case SolverKind::Oja: {
      const bool krasulina = cfg.solver == SolverKind::Krasulina;
      for (std::uint64_t t = 1; t <= cfg.total_iters; ++t) {
        orthonormalize(state);
        source.draw(x);
        const double eta = cfg.schedule.at(t);
        const auto diag = krasulina ? krasulina_update(state, x, eta) : oja_update(state, x, eta);
        if (t % cfg.eval_every == 0) record(diag.residual_sq);
      }
      break;
    }
    case SolverKind::VrPca: {
      const std::uint64_t inner = cfg.vr_inner_iters > 0 ? cfg.vr_inner_iters : static_cast<std::uint64_t>(data->n());
      std::optional<VrAnchor> anchor;
      std::uint64_t in_epoch = inner;
      for (std::uint64_t t = 1; t <= cfg.total_iters; ++t) {
        if (in_epoch == inner) {
          anchor = vr_anchor(state.w, *data);
          state.samples_seen += static_cast<std::uint64_t>(data->n());
          in_epoch = 0;
        }
        const Index idx = source.draw_index();
        const auto diag = vr_inner_update(state, *anchor, data->samples.row(idx).transpose(), cfg.schedule.at(t));
        ++in_epoch;
        if (t % cfg.eval_every == 0) record(diag.residual_sq);
      }
      break;
    }
    case SolverKind::Power: {
      for (std::uint64_t t = 1; t <= cfg.total_iters; ++t) {
        state = power_method_epoch(std::move(state), *data);
        if (t % cfg.eval_every == 0) record(reconstruction_error(data->samples, state.w));
      }
      break;
    }
  }
  trace.final_w = state.orthonormal ? state.w : orthonormalize_rows(state.w);
  return trace;
}

/// Largest eigenvalue of the empirical second moment of a pilot sample drawn
/// from a private copy of the source.
inline double pilot_top_eigenvalue(SampleSource source, Index pilot_samples, std::uint64_t seed) {
  source.reseed(seed);
  const DataSet pilot = source.draw_many(pilot_samples);
  return top_k_eigen(second_moment(pilot.samples), 1).values.front();
}

/// Default constant rate 1 / (10 lambda_1_hat).
inline double default_learning_rate(const SampleSource& source, std::uint64_t seed, Index pilot_samples = 1000) {
  const double top = pilot_top_eigenvalue(source, pilot_samples, seed);
  if (!(top > 0.0)) throw Error(Errc::ZeroSignal, "pilot sample has no variance");
  return 1.0 / (10.0 * top);
}

}  // namespace kpca
