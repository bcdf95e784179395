// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every run is seeded, so the output is reproducible.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "kpca/experiment.hpp"
#include "kpca/trace_io.hpp"

namespace {

using namespace kpca;

struct Outcome {
  bool passed = false;
  std::string measured;
};

constexpr std::uint64_t kMasterSeed = 20240601;

std::vector<std::uint64_t> seed_list(std::size_t n) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(i);
  return out;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome exact_identities() {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = exact_suite(kMasterSeed, 1000);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bool ok = secs < 30.0;
  double worst = 0.0;
  std::string names;
  for (const auto& r : reports) {
    ok = ok && r.passed && r.trials == 1000 && r.worst_violation <= 1e-9;
    worst = std::max(worst, r.worst_violation);
    names += " " + r.name + "=" + fmt("%.2e", r.worst_violation);
  }
  return {ok, "worst violation" + names + fmt(" (%.1f s)", secs)};
}

Outcome metric_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const auto r = metric_equivalence_suite(kMasterSeed, 1000);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {r.passed && r.trials == 1000 && secs < 10.0, fmt("max |trace - angle| = %.2e over 1000 cases (%.1f s)", r.worst_violation, secs)};
}

ExperimentConfig low_rank_config(Index d) {
  ExperimentConfig cfg;
  cfg.d = d;
  cfg.k = 10;
  cfg.total_iters = 5000;
  cfg.eval_every = 10;
  return cfg;
}

std::vector<std::string> low_rank_traces() {
  std::vector<std::string> out;
  for (auto seed : seed_list(10))
    out.push_back(encode_trace_csv(run_single(low_rank_config(100), SolverKind::Krasulina, seed).trace));
  return out;
}

Outcome low_rank_convergence() {
  const auto start = std::chrono::steady_clock::now();
  int converged = 0, well_fit = 0;
  std::vector<double> r2, finals;
  for (auto seed : seed_list(10)) {
    const auto run = run_single(low_rank_config(100), SolverKind::Krasulina, seed);
    const double fd = final_delta(run.trace);
    const auto fit = fit_log_decay(run.trace);
    finals.push_back(fd);
    r2.push_back(fit.r_squared);
    converged += fd < 1e-6;
    well_fit += fit.r_squared >= 0.98;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = converged >= 9 && well_fit >= 9 && secs < 600.0;
  return {ok, fmt("final Delta < 1e-6 in %.0f/10 seeds (median %.2e); R^2 >= 0.98 in %.0f/10 (median %.4f)", converged,
                  median(finals), well_fit, median(r2)) +
                  fmt(" (%.1f s)", secs)};
}

Outcome noise_floor_ordering() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> ratios = {0.0, 0.01, 0.1, 0.5};
  std::vector<std::vector<double>> finals(ratios.size());
  for (auto seed : seed_list(10)) {
    // One rate per seed, measured on the noiseless problem and shared across ratios.
    auto cfg = low_rank_config(100);
    const Problem base = make_problem(cfg, seed, false);
    cfg.rate = format_double(base_rate(cfg, make_source(base, seed), seed));
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      cfg.ratio = ratios[i];
      cfg.eval_every = 5000;
      finals[i].push_back(final_delta(run_single(cfg, SolverKind::Krasulina, seed).trace));
    }
  }
  bool ok = true;
  std::string measured = "median final Delta";
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    measured += fmt(" ratio %g: %.3e", ratios[i], median(finals[i]));
    if (i > 0) ok = ok && median(finals[i]) > median(finals[i - 1]);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok && secs < 300.0, measured + fmt(" (%.1f s)", secs)};
}

Outcome dimension_independence() {
  const auto start = std::chrono::steady_clock::now();
  auto median_slope = [](Index d) {
    std::vector<double> slopes;
    for (auto seed : seed_list(5)) slopes.push_back(fit_log_decay(run_single(low_rank_config(d), SolverKind::Krasulina, seed).trace).slope);
    return median(slopes);
  };
  const double s100 = median_slope(100);
  const double s500 = median_slope(500);
  const double rel = std::abs(s100 - s500) / std::abs(s100);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {rel <= 0.25 && secs < 600.0,
          fmt("median slope d=100: %.4f, d=500: %.4f, relative difference %.1f%%", s100, s500, 100.0 * rel) +
              fmt(" (%.1f s)", secs)};
}

EnvelopeAggregate envelope_runs() { return envelope_checks(kMasterSeed, EnvelopeSetup{}, 1); }

Outcome theorem_envelope_criterion() {
  const auto start = std::chrono::steady_clock::now();
  const auto agg = envelope_runs();
  std::uint64_t exits = 0;
  for (const auto& r : agg.runs) exits += r.basin_exits;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {agg.runs.size() == 50 && agg.in_basin > 0 && agg.fraction() >= 0.9 && secs < 600.0,
          fmt("%.0f of %.0f in-basin checkpoints within the envelope (%.2f%%), eta=%.4e", static_cast<double>(agg.within),
              static_cast<double>(agg.in_basin), 100.0 * agg.fraction(), agg.eta) +
              fmt(", b=%.3f, basin exits %.0f (%.1f s)", agg.inputs.b, static_cast<double>(exits), secs)};
}

Outcome iterwise_monte_carlo() {
  const auto start = std::chrono::steady_clock::now();
  const auto results = montecarlo_checks(kMasterSeed, MonteCarloSetup{}, 1);
  int passed = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  double dmin = 1.0, dmax = 0.0;
  for (const auto& r : results) {
    passed += r.report.passed;
    min_margin = std::min(min_margin, (r.mean - r.bound) / r.std_error);
    dmin = std::min(dmin, r.delta);
    dmax = std::max(dmax, r.delta);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = results.size() == 20 && passed == 20 && secs < 300.0;
  return {ok, fmt("%.0f/20 configurations pass (Delta in [%.2f, %.2f]), smallest (mean - bound)/se = %.2f", passed, dmin, dmax,
                  min_margin) +
                  fmt(" (%.1f s)", secs)};
}

Outcome vr_comparison() {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.d = 200;
  cfg.k = 6;
  cfg.ratio = 0.25;
  cfg.n = 10000;
  cfg.eval_every = 100;
  const std::vector<double> grid = {0.25, 0.5, 1.0, 2.0};
  const auto seeds = seed_list(5);
  const auto n = static_cast<std::uint64_t>(cfg.n);

  std::vector<Problem> problems;
  for (auto seed : seeds) problems.push_back(make_problem(cfg, seed, true));

  // Delta at the comparison point for each (grid point, seed).
  auto sweep = [&](SolverKind kind) {
    std::vector<std::vector<double>> out(grid.size());
    auto local = cfg;
    local.total_iters = kind == SolverKind::Krasulina ? n : cfg.eval_every;
    for (std::size_t g = 0; g < grid.size(); ++g)
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto run = run_on_problem(local, problems[i], kind, seeds[i], grid[g]);
        const TraceRecord* at = nullptr;
        for (const auto& rec : run.trace.records)
          if (kind == SolverKind::Krasulina ? rec.samples_seen == n : rec.samples_seen > n) {
            at = &rec;
            break;
          }
        out[g].push_back(at ? at->delta : std::nan(""));
      }
    return out;
  };
  auto best = [&](const std::vector<std::vector<double>>& v) {
    std::size_t b = 0;
    double score = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < v.size(); ++g) {
      double mean = 0.0;
      for (double x : v[g]) mean += x / static_cast<double>(v[g].size());
      if (mean < score) {
        score = mean;
        b = g;
      }
    }
    return b;
  };
  const auto kra = sweep(SolverKind::Krasulina);
  const auto vr = sweep(SolverKind::VrPca);
  const std::size_t bk = best(kra), bv = best(vr);
  int wins = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) wins += kra[bk][i] < vr[bv][i];
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {wins >= 4 && secs < 600.0,
          fmt("Krasulina wins %.0f/5 seeds; median Delta krasulina@n=%.3e (x%.2f rate), ", wins, median(kra[bk]), grid[bk]) +
              fmt("vrpca@first post-anchor checkpoint=%.3e (x%.2f rate) (%.1f s)", median(vr[bv]), grid[bv], secs)};
}

Outcome determinism() {
  const auto start = std::chrono::steady_clock::now();
  const bool low_rank_same = low_rank_traces() == low_rank_traces();
  auto envelope_csv = [] {
    std::vector<std::string> out;
    for (const auto& t : envelope_runs().traces) out.push_back(encode_trace_csv(t));
    return out;
  };
  const auto first = envelope_csv();
  const bool envelope_same = first == envelope_csv();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {low_rank_same && envelope_same,
          std::string("low-rank traces ") + (low_rank_same ? "identical" : "DIFFER") + ", envelope traces " +
              (envelope_same ? "identical" : "DIFFER") + fmt(" (%.0f + 50 CSVs compared, %.1f s)", 10.0, secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"exact identity suite", exact_identities},
      {"metric equivalence", metric_equivalence},
      {"strict low-rank exponential convergence", low_rank_convergence},
      {"noise-floor ordering", noise_floor_ordering},
      {"dimension independence of the rate", dimension_independence},
      {"constant-rate convergence envelope", theorem_envelope_criterion},
      {"iteration-wise improvement (Monte Carlo)", iterwise_monte_carlo},
      {"advantage over VR-PCA before a full pass", vr_comparison},
      {"deterministic traces", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.passed;
    std::printf("%s criterion %zu %s: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, o.measured.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
