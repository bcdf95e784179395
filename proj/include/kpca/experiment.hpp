#pragma once

// Experiment harness: dataset generation with ground-truth sidecars, seeded
// runs writing trace CSVs, parameter sweeps and the theory-check suites.
// The command-line tool is a thin flag parser over these functions.
//
// Per-seed randomness is split into named substreams of the run seed:
// rotation (unless rotation_seed is given), samples, init and pilot.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "kpca/checks.hpp"
#include "kpca/data.hpp"
#include "kpca/solvers.hpp"
#include "kpca/trace_io.hpp"

namespace kpca {

struct ExperimentConfig {
  std::vector<std::string> solvers{"krasulina"};
  std::string data_path;  // empty: synthetic data from the spectrum fields
  Index d = 100;
  Index k = 10;
  double ratio = 0.0;
  std::vector<double> heads;
  std::optional<std::uint64_t> rotation_seed;
  Index n = 5000;         // finite synthetic dataset size
  bool finite = false;    // replay a finite synthetic dataset instead of fresh draws
  Index kprime = 0;       // 0 means k
  std::string schedule = "constant";  // constant | inverse | theorem
  std::string rate = "auto";          // "auto" is 1 / (10 lambda_1_hat)
  double rate_offset = 0.0;
  std::vector<double> rate_grid;      // multipliers of the base rate; best final Delta wins
  std::uint64_t total_iters = 5000;
  std::uint64_t eval_every = 10;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = ".";
  double tau = 0.5;
  double delta = 0.1;
  bool center = true;
  std::uint64_t vr_inner = 0;
  unsigned threads = 1;
  bool timing = false;
  Index pilot = 1000;

  std::vector<Index> sweep_d;
  std::vector<Index> sweep_k;
  std::vector<double> sweep_ratio;

  Index effective_kprime() const { return kprime > 0 ? kprime : k; }
};

/// Runs fn(0..count-1) on up to `threads` workers; fn must only touch its
/// own slot of any shared output.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar

inline std::filesystem::path sidecar_path(const std::filesystem::path& data_path) {
  return data_path.string() + ".meta.json";
}

inline nlohmann::json truth_to_json(const GroundTruth& truth) {
  nlohmann::json basis = nlohmann::json::array();
  for (Index i = 0; i < truth.basis.rows(); ++i) {
    std::vector<double> row(truth.basis.row(i).begin(), truth.basis.row(i).end());
    basis.push_back(row);
  }
  return {{"k", truth.k}, {"spectrum", truth.spectrum}, {"basis", basis}};
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth truth;
    truth.k = j.at("k").get<Index>();
    truth.spectrum = j.at("spectrum").get<std::vector<double>>();
    const auto rows = j.at("basis").get<std::vector<std::vector<double>>>();
    if (rows.empty() || static_cast<Index>(rows.size()) != truth.k) throw Error(Errc::FormatError, "basis must have k rows");
    truth.basis.resize(truth.k, static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < truth.k; ++i) {
      if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != truth.basis.cols())
        throw Error(Errc::FormatError, "ragged basis");
      for (Index j2 = 0; j2 < truth.basis.cols(); ++j2) truth.basis(i, j2) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j2)];
    }
    return truth;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, std::string("sidecar: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Problems

/// Everything a run needs to know about its data.
struct Problem {
  GroundTruth truth;
  std::shared_ptr<const SpecCovariance> model;  // set for synthetic problems
  std::shared_ptr<const DataSet> data;          // set for finite problems
};

inline bool needs_dataset(SolverKind kind) { return kind == SolverKind::VrPca || kind == SolverKind::Power; }

inline SpectrumSpec spec_from_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  return {cfg.d, cfg.k, cfg.heads, cfg.ratio, cfg.rotation_seed.value_or(substream_seed(seed, static_cast<std::uint64_t>(Stream::Rotation)))};
}

/// Loads a dataset file, centering it if requested, and recovers the ground
/// truth from its sidecar or, failing that, from the empirical covariance.
inline Problem load_problem(const ExperimentConfig& cfg) {
  Problem p;
  DataSet data = load_dataset(cfg.data_path);
  if (cfg.center) data = center(data);
  const auto meta = sidecar_path(cfg.data_path);
  if (std::filesystem::exists(meta)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(meta));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::FormatError, "sidecar " + meta.string() + ": " + e.what());
    }
    p.truth = truth_from_json(j.at("truth"));
    if (p.truth.dim() != data.d()) throw Error(Errc::DimensionMismatch, "sidecar and dataset dimensions differ");
  } else {
    if (cfg.k < 1 || cfg.k > data.d()) throw Error(Errc::InvalidConfig, "k out of range for dataset");
    const Spectrum spec = top_k_eigen(second_moment(data.samples), data.d());
    p.truth.k = cfg.k;
    p.truth.basis = spec.vectors.topRows(cfg.k);
    p.truth.spectrum = spec.values;
  }
  p.data = std::make_shared<const DataSet>(std::move(data));
  return p;
}

inline Problem make_problem(const ExperimentConfig& cfg, std::uint64_t seed, bool finite) {
  if (!cfg.data_path.empty()) return load_problem(cfg);
  Problem p;
  p.model = std::make_shared<const SpecCovariance>(make_spec_covariance(spec_from_config(cfg, seed)));
  p.truth = p.model->truth;
  if (finite || cfg.finite) {
    DataSet data = sample_gaussian(*p.model, cfg.n, substream_seed(seed, static_cast<std::uint64_t>(Stream::Samples)));
    if (cfg.center) data = center(data);
    p.data = std::make_shared<const DataSet>(std::move(data));
  }
  return p;
}

inline SampleSource make_source(const Problem& p, std::uint64_t seed) {
  const std::uint64_t s = substream_seed(seed, static_cast<std::uint64_t>(Stream::Samples));
  return p.data ? SampleSource::replay(p.data, s) : SampleSource::gaussian(p.model, s);
}

inline Mat random_init(Index rows, Index d, std::uint64_t seed) {
  Rng rng(seed, Stream::Init);
  return random_orthonormal_rows(rows, d, rng);
}

/// Constant-rate inputs with b the 0.999 quantile of ||x||^2 over a pilot
/// sample (or over the dataset), the spectrum from the truth and ||Sigma||_F
/// from the model or the empirical covariance.
inline TheoremRateInputs theorem_inputs_for(const Problem& p, const SampleSource& source, double tau, double delta,
                                            std::uint64_t seed) {
  TheoremRateInputs in;
  SampleSource pilot = source;
  pilot.reseed(substream_seed(seed, static_cast<std::uint64_t>(Stream::Pilot)));
  const Mat norms_from = p.data ? p.data->samples : pilot.draw_many(kNormPilotSamples).samples;
  in.b = norm_sq_quantile(norms_from, kNormQuantile);
  in.lambda1 = p.truth.lambda1();
  in.lambdak = p.truth.lambdak();
  in.k = p.truth.k;
  in.tau = tau;
  in.delta = delta;
  in.sigma_frob = p.model ? p.model->covariance.norm() : second_moment(p.data->samples).norm();
  in.b = std::max(in.b, in.lambda1);
  return in;
}

struct RunOutcome {
  std::string solver;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double rate_multiplier = 1.0;
  ConvergenceTrace trace;
};

inline double base_rate(const ExperimentConfig& cfg, const SampleSource& source, std::uint64_t seed) {
  if (cfg.rate == "auto")
    return default_learning_rate(source, substream_seed(seed, static_cast<std::uint64_t>(Stream::Pilot)), cfg.pilot);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cfg.rate.data(), cfg.rate.data() + cfg.rate.size(), value);
  if (ec != std::errc() || ptr != cfg.rate.data() + cfg.rate.size() || !(value > 0.0))
    throw Error(Errc::InvalidConfig, "rate must be 'auto' or a positive number");
  return value;
}

/// One (solver, seed) run on a prepared problem.
inline RunOutcome run_on_problem(const ExperimentConfig& cfg, const Problem& p, SolverKind solver, std::uint64_t seed,
                                 double multiplier = 1.0) {
  const SampleSource source = make_source(p, seed);
  RunOutcome out;
  out.solver = std::string(to_string(solver));
  out.seed = seed;
  out.rate_multiplier = multiplier;

  StreamConfig sc;
  sc.solver = solver;
  sc.total_iters = cfg.total_iters;
  sc.eval_every = cfg.eval_every;
  sc.tau = cfg.tau;
  sc.vr_inner_iters = cfg.vr_inner;
  sc.record_time = cfg.timing;
  if (cfg.schedule == "constant") {
    out.eta = base_rate(cfg, source, seed) * multiplier;
    sc.schedule = RateSchedule::constant(out.eta);
  } else if (cfg.schedule == "inverse") {
    out.eta = base_rate(cfg, source, seed) * multiplier;
    sc.schedule = RateSchedule::inverse_time(out.eta, cfg.rate_offset);
  } else if (cfg.schedule == "theorem") {
    out.eta = theorem_learning_rate(theorem_inputs_for(p, source, cfg.tau, cfg.delta, seed)) * multiplier;
    sc.schedule = RateSchedule::theorem(out.eta);
  } else {
    throw Error(Errc::InvalidConfig, "unknown schedule '" + cfg.schedule + "'");
  }

  const Index rows = cfg.data_path.empty() ? cfg.effective_kprime() : (cfg.kprime > 0 ? cfg.kprime : p.truth.k);
  if (rows < p.truth.k) throw Error(Errc::InvalidConfig, "kprime must be at least k");
  out.trace = run_stream(sc, random_init(rows, p.truth.dim(), seed), source, p.truth, seed);
  return out;
}

inline RunOutcome run_single(const ExperimentConfig& cfg, SolverKind solver, std::uint64_t seed, double multiplier = 1.0) {
  const Problem p = make_problem(cfg, seed, needs_dataset(solver));
  return run_on_problem(cfg, p, solver, seed, multiplier);
}

inline double final_delta(const ConvergenceTrace& t) { return t.records.empty() ? std::nan("") : t.records.back().delta; }

inline std::string trace_file_name(const std::string& solver, std::uint64_t seed) {
  return "trace_" + solver + "_seed" + std::to_string(seed) + ".csv";
}

// ---------------------------------------------------------------------------
// Commands

struct GenResult {
  std::filesystem::path data_file;
  std::filesystem::path meta_file;
  double noise_over_signal = 0.0;
};

/// Writes n synthetic samples plus a JSON sidecar with the spectrum settings, the
/// ground-truth basis and the full spectrum.
inline GenResult cmd_gen(const ExperimentConfig& cfg, const std::filesystem::path& data_file, std::uint64_t seed) {
  const SpectrumSpec spec = spec_from_config(cfg, seed);
  const SpecCovariance model = make_spec_covariance(spec);
  const DataSet data = sample_gaussian(model, cfg.n, substream_seed(seed, static_cast<std::uint64_t>(Stream::Samples)));
  if (data_file.has_parent_path()) std::filesystem::create_directories(data_file.parent_path());
  save_dataset(data_file, data);

  GenResult out;
  out.data_file = data_file;
  out.meta_file = sidecar_path(data_file);
  out.noise_over_signal = noise_over_signal(model.eigenvalues, spec.k);
  nlohmann::json meta = {
      {"format", "kpca-meta"},
      {"version", 1},
      {"n", cfg.n},
      {"d", spec.d},
      {"k", spec.k},
      {"head_eigenvalues", spec.heads()},
      {"noise_over_signal", spec.noise_over_signal},
      {"noise_over_signal_check", out.noise_over_signal},
      {"rotation_seed", spec.rotation_seed},
      {"sample_seed", seed},
      {"truth", truth_to_json(model.truth)},
  };
  detail::write_file(out.meta_file, meta.dump(1) + "\n");
  return out;
}

struct RunSummaryRow {
  std::string solver;
  std::uint64_t seed = 0;
  double eta = 0.0;
  double final_delta = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};

inline std::string encode_run_summary(const std::vector<RunSummaryRow>& rows) {
  std::string out = "solver,seed,eta,final_delta,slope,r_squared\n";
  auto line = [&](const std::string& solver, const std::string& seed, double eta, double fd, double slope, double r2) {
    out += solver + ',' + seed + ',' + format_double(eta) + ',' + format_double(fd) + ',' + format_double(slope) + ',' +
           format_double(r2) + '\n';
  };
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.solver) == order.end()) order.push_back(r.solver);
    line(r.solver, std::to_string(r.seed), r.eta, r.final_delta, r.slope, r.r_squared);
  }
  for (const auto& solver : order) {
    double n = 0, eta = 0, fd = 0, slope = 0, r2 = 0;
    for (const auto& r : rows)
      if (r.solver == solver) {
        ++n;
        eta += r.eta;
        fd += r.final_delta;
        slope += r.slope;
        r2 += r.r_squared;
      }
    line(solver, "mean", eta / n, fd / n, slope / n, r2 / n);
  }
  return out;
}

struct RunResult {
  std::vector<RunOutcome> outcomes;
  std::vector<std::filesystem::path> files;
};

/// One trace CSV per (solver, seed) plus summary.csv (every run and a mean
/// row per solver). With a rate grid, each solver's multiplier with the
/// lowest mean final Delta is kept and rate_grid_<solver>.csv lists all.
inline RunResult cmd_run(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw Error(Errc::InvalidConfig, "seeds must not be empty");
  if (cfg.solvers.empty()) throw Error(Errc::InvalidConfig, "no solver given");
  std::vector<SolverKind> kinds;
  for (const auto& s : cfg.solvers) kinds.push_back(parse_solver(s));
  std::filesystem::create_directories(cfg.output_dir);

  const bool any_finite = std::any_of(kinds.begin(), kinds.end(), needs_dataset);
  std::vector<Problem> problems(cfg.seeds.size());
  if (!cfg.data_path.empty()) {
    const Problem shared = load_problem(cfg);
    std::fill(problems.begin(), problems.end(), shared);
  } else {
    parallel_for(cfg.seeds.size(), cfg.threads,
                 [&](std::size_t i) { problems[i] = make_problem(cfg, cfg.seeds[i], any_finite); });
  }

  const std::vector<double> grid = cfg.rate_grid.empty() ? std::vector<double>{1.0} : cfg.rate_grid;
  const std::size_t per_solver = cfg.seeds.size() * grid.size();
  std::vector<RunOutcome> all(kinds.size() * per_solver);
  parallel_for(all.size(), cfg.threads, [&](std::size_t job) {
    const std::size_t s = job / per_solver;
    const std::size_t g = (job % per_solver) / cfg.seeds.size();
    const std::size_t i = job % cfg.seeds.size();
    all[job] = run_on_problem(cfg, problems[i], kinds[s], cfg.seeds[i], grid[g]);
  });

  RunResult result;
  std::vector<RunSummaryRow> summary;
  for (std::size_t s = 0; s < kinds.size(); ++s) {
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    std::string grid_csv = "multiplier,mean_eta,mean_final_delta\n";
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double eta = 0.0, score = 0.0;
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const auto& o = all[s * per_solver + g * cfg.seeds.size() + i];
        eta += o.eta;
        score += final_delta(o.trace);
      }
      eta /= static_cast<double>(cfg.seeds.size());
      score /= static_cast<double>(cfg.seeds.size());
      grid_csv += format_double(grid[g]) + ',' + format_double(eta) + ',' + format_double(score) + '\n';
      if (score < best_score) {
        best_score = score;
        best = g;
      }
    }
    const std::string name(to_string(kinds[s]));
    if (grid.size() > 1) detail::write_file(cfg.output_dir / ("rate_grid_" + name + ".csv"), grid_csv);
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      auto& o = all[s * per_solver + best * cfg.seeds.size() + i];
      const auto path = cfg.output_dir / trace_file_name(o.solver, o.seed);
      save_trace_csv(path, o.trace);
      result.files.push_back(path);
      const LineFit fit = fit_log_decay(o.trace);
      summary.push_back({o.solver, o.seed, o.eta, final_delta(o.trace), fit.slope, fit.r_squared});
      result.outcomes.push_back(std::move(o));
    }
  }
  const auto summary_path = cfg.output_dir / "summary.csv";
  detail::write_file(summary_path, encode_run_summary(summary));
  result.files.push_back(summary_path);
  return result;
}

struct SweepCell {
  Index d = 0;
  Index k = 0;
  double ratio = 0.0;
  std::string solver;
  std::vector<double> final_deltas;
  std::vector<double> slopes;
  std::vector<double> r_squared;
};

inline constexpr const char* kSweepHeader =
    "d,k,noise_over_signal,solver,seeds,final_delta_median,final_delta_mean,slope_median,r_squared_median";

inline std::string encode_sweep_summary(const std::vector<SweepCell>& cells) {
  std::string out = kSweepHeader;
  out.push_back('\n');
  for (const auto& c : cells) {
    const double mean = std::accumulate(c.final_deltas.begin(), c.final_deltas.end(), 0.0) /
                        static_cast<double>(c.final_deltas.size());
    out += std::to_string(c.d) + ',' + std::to_string(c.k) + ',' + format_double(c.ratio) + ',' + c.solver + ',' +
           std::to_string(c.final_deltas.size()) + ',' + format_double(median(c.final_deltas)) + ',' +
           format_double(mean) + ',' + format_double(median(c.slopes)) + ',' + format_double(median(c.r_squared)) + '\n';
  }
  return out;
}

/// Cartesian product of the listed d, k, ratio and solver values; each cell
/// runs every seed. Writes sweep_summary.csv into the output directory.
inline std::vector<SweepCell> cmd_sweep(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw Error(Errc::InvalidConfig, "seeds must not be empty");
  const auto ds = cfg.sweep_d.empty() ? std::vector<Index>{cfg.d} : cfg.sweep_d;
  const auto ks = cfg.sweep_k.empty() ? std::vector<Index>{cfg.k} : cfg.sweep_k;
  const auto ratios = cfg.sweep_ratio.empty() ? std::vector<double>{cfg.ratio} : cfg.sweep_ratio;
  std::vector<SweepCell> cells;
  for (Index d : ds)
    for (Index k : ks)
      for (double ratio : ratios)
        for (const auto& solver : cfg.solvers) {
          parse_solver(solver);
          SweepCell c;
          c.d = d;
          c.k = k;
          c.ratio = ratio;
          c.solver = solver;
          cells.push_back(std::move(c));
        }
  const std::size_t seeds = cfg.seeds.size();
  std::vector<RunOutcome> runs(cells.size() * seeds);
  parallel_for(runs.size(), cfg.threads, [&](std::size_t job) {
    const auto& cell = cells[job / seeds];
    ExperimentConfig local = cfg;
    local.d = cell.d;
    local.k = cell.k;
    local.ratio = cell.ratio;
    local.kprime = 0;
    runs[job] = run_single(local, parse_solver(cell.solver), cfg.seeds[job % seeds]);
  });
  for (std::size_t job = 0; job < runs.size(); ++job) {
    auto& cell = cells[job / seeds];
    const LineFit fit = fit_log_decay(runs[job].trace);
    cell.final_deltas.push_back(final_delta(runs[job].trace));
    cell.slopes.push_back(fit.slope);
    cell.r_squared.push_back(fit.r_squared);
  }
  std::filesystem::create_directories(cfg.output_dir);
  detail::write_file(cfg.output_dir / "sweep_summary.csv", encode_sweep_summary(cells));
  return cells;
}

/// gnuplot script drawing ln(Delta) against iteration for every trace CSV
/// in `dir`.
inline std::string plot_script(const std::filesystem::path& dir) {
  std::vector<std::string> files;
  if (std::filesystem::is_directory(dir))
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("trace_", 0) == 0 && entry.path().extension() == ".csv") files.push_back(entry.path().string());
    }
  std::sort(files.begin(), files.end());
  std::string out =
      "set datafile separator ','\n"
      "set key autotitle columnhead outside\n"
      "set xlabel 'iteration'\n"
      "set ylabel 'ln(Delta)'\n"
      "set grid\n";
  if (files.empty()) return out + "# no trace files found\n";
  out += "plot ";
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (i > 0) out += ", \\\n     ";
    out += "'" + files[i] + "' using 1:4 with lines title '" + std::filesystem::path(files[i]).stem().string() + "'";
  }
  return out + "\n";
}

// ---------------------------------------------------------------------------
// Theory-check suites

inline std::vector<CheckReport> exact_checks(std::uint64_t seed, std::uint64_t trials = 1000) {
  auto reports = exact_suite(seed, trials);
  reports.push_back(metric_equivalence_suite(seed, trials));
  return reports;
}

struct MonteCarloSetup {
  Index d = 10;
  Index k = 2;
  double eta = 0.01;
  std::uint64_t trials = 100000;
  std::size_t configs = 20;
  double delta_lo = 0.1;
  double delta_hi = 0.5;
};

/// One-step improvement bound on `configs` random (truth, W) pairs with
/// Delta drawn uniformly in [delta_lo, delta_hi].
inline std::vector<IterwiseResult> montecarlo_checks(std::uint64_t seed, const MonteCarloSetup& setup = {},
                                                     unsigned threads = 1) {
  std::vector<IterwiseResult> out(setup.configs);
  parallel_for(setup.configs, threads, [&](std::size_t c) {
    const std::uint64_t cs = substream_seed(seed, 1000 + c);
    Rng rng(cs, Stream::Init);
    const SpectrumSpec spec{setup.d, setup.k, {}, 0.0, substream_seed(cs, static_cast<std::uint64_t>(Stream::Rotation))};
    const SpecCovariance model = make_spec_covariance(spec);
    const double target = setup.delta_lo + (setup.delta_hi - setup.delta_lo) * rng.uniform();
    const Mat w = perturbed_start(model.truth, setup.k, target, rng);
    out[c] = monte_carlo_iterwise(w, model, setup.eta, setup.trials, cs, 1.0, 1);
    out[c].report.name = "iterwise_improvement[" + std::to_string(c) + "]";
  });
  return out;
}

struct EnvelopeSetup {
  Index d = 50;
  Index k = 5;
  double tau = 0.5;
  double delta = 0.1;
  double start_delta = 0.2;  // below the (1 - tau) / 2 basin requirement
  std::uint64_t runs = 50;
  std::uint64_t total_iters = 400000;
  std::uint64_t eval_every = 4000;
};

struct EnvelopeAggregate {
  std::vector<EnvelopeResult> runs;
  std::vector<ConvergenceTrace> traces;
  TheoremRateInputs inputs;
  double eta = 0.0;
  std::uint64_t within = 0;
  std::uint64_t in_basin = 0;

  double fraction() const { return in_basin == 0 ? 0.0 : static_cast<double>(within) / static_cast<double>(in_basin); }
};

/// Runs Krasulina with the theorem learning rate from basin-passing starts
/// on strictly rank-k data and pools the in-basin checkpoints against the
/// envelope. Seed i of the pool uses substream i of `seed`.
inline EnvelopeAggregate envelope_checks(std::uint64_t seed, const EnvelopeSetup& setup = {}, unsigned threads = 1) {
  const SpectrumSpec spec{setup.d, setup.k, {}, 0.0, substream_seed(seed, static_cast<std::uint64_t>(Stream::Rotation))};
  Problem p;
  p.model = std::make_shared<const SpecCovariance>(make_spec_covariance(spec));
  p.truth = p.model->truth;

  EnvelopeAggregate agg;
  agg.inputs = theorem_inputs_for(p, make_source(p, seed), setup.tau, setup.delta, seed);
  agg.eta = theorem_learning_rate(agg.inputs);
  agg.runs.resize(setup.runs);
  agg.traces.resize(setup.runs);

  parallel_for(setup.runs, threads, [&](std::size_t r) {
    const std::uint64_t rs = substream_seed(seed, 2000 + r);
    Rng rng(rs, Stream::Init);
    const Mat init = perturbed_start(p.truth, setup.k, setup.start_delta, rng);
    if (!initialization_check(init, p.truth, setup.tau)) throw Error(Errc::InvalidInputs, "start outside the basin");
    StreamConfig sc;
    sc.schedule = RateSchedule::theorem(agg.eta);
    sc.total_iters = setup.total_iters;
    sc.eval_every = setup.eval_every;
    sc.tau = setup.tau;
    agg.traces[r] = run_stream(sc, init, make_source(p, rs), p.truth, rs);
    agg.runs[r] = theorem_envelope_check(agg.traces[r], agg.inputs, agg.eta);
  });
  for (const auto& r : agg.runs) {
    agg.within += r.within;
    agg.in_basin += r.in_basin;
  }
  return agg;
}

}  // namespace kpca
