// kpca: command-line harness for the streaming k-PCA library.
//
//   kpca gen        synthetic dataset + ground-truth sidecar
//   kpca run        trace CSV per (solver, seed)
//   kpca sweep      summary CSV over a grid of d, k, noise ratio and solver
//   kpca check      theory-check suites (exact, montecarlo, envelope, all)
//   kpca plotscript gnuplot script for a directory of traces
//
// Exit codes: 0 success, 1 numerical or check failure, 2 usage or config error.

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kpca/config.hpp"
#include "kpca/experiment.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr const char* kOutputEnv = "KPCA_OUTPUT_DIR";

struct Options {
  kpca::ExperimentConfig cfg;
  std::string config_file;
  std::string gen_output;
  std::uint64_t seed = 1;
  std::string suite;
  std::uint64_t trials = 100000;
  std::size_t configs = 20;
  std::uint64_t runs = 50;
  std::uint64_t envelope_iters = 400000;
  std::string plot_input = ".";
  std::string plot_output;
  std::string output;
};

/// Fills options that were not given on the command line from a flat
/// `key = value` file. Keys are long option names with '_' or '-'.
void apply_config_file(CLI::App& sub, const std::string& path) {
  for (const auto& entry : kpca::load_config_file(path)) {
    std::string name = entry.key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + name);
    } catch (const CLI::OptionNotFound&) {
      throw kpca::Error(kpca::Errc::InvalidConfig,
                        path + " line " + std::to_string(entry.line) + ": unknown key '" + entry.key + "'");
    }
    if (opt->count() > 0) continue;
    // "a, b" lists: drop the blanks around each comma
    std::string value;
    std::string_view rest = entry.value;
    for (auto comma = rest.find(','); ; comma = rest.find(',')) {
      value += kpca::detail::trim(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      value += ',';
      rest.remove_prefix(comma + 1);
    }
    opt->add_result(value);
    opt->run_callback();
  }
}

void add_data_options(CLI::App& sub, Options& o, bool lists) {
  auto& c = o.cfg;
  if (lists) {
    sub.add_option("--d", c.sweep_d, "ambient dimensions")->delimiter(',');
    sub.add_option("--k", c.sweep_k, "intrinsic ranks")->delimiter(',');
    sub.add_option("--ratio", c.sweep_ratio, "noise-over-signal ratios")->delimiter(',');
  } else {
    sub.add_option("--d", c.d, "ambient dimension")->capture_default_str();
    sub.add_option("--k", c.k, "intrinsic rank")->capture_default_str();
    sub.add_option("--ratio", c.ratio, "noise-over-signal ratio (tail/head eigenvalue mass)")->capture_default_str();
  }
  sub.add_option("--heads", c.heads, "head eigenvalues, descending (default all ones)")->delimiter(',');
  sub.add_option("--rotation-seed", c.rotation_seed, "seed of the random rotation (default: derived from the run seed)");
  sub.add_option("--n", c.n, "samples in a finite synthetic dataset")->capture_default_str();
}

void add_run_options(CLI::App& sub, Options& o) {
  auto& c = o.cfg;
  sub.add_option("--config", o.config_file, "flat key = value file; command-line flags take precedence");
  sub.add_option("--solver", c.solvers, "krasulina, oja, vrpca, power")->delimiter(',');
  sub.add_option("--data", c.data_path, "dataset file (.bin or .csv); synthetic data when omitted");
  sub.add_flag("--finite", c.finite, "replay a finite synthetic dataset of n samples");
  sub.add_option("--kprime", c.kprime, "rows of the iterate (default k)");
  sub.add_option("--schedule", c.schedule, "constant, inverse or theorem")
      ->check(CLI::IsMember({"constant", "inverse", "theorem"}))
      ->capture_default_str();
  sub.add_option("--rate", c.rate, "learning rate, or 'auto' for 1/(10 lambda_1) from a pilot sample")->capture_default_str();
  sub.add_option("--rate-offset", c.rate_offset, "offset of the inverse-time schedule c/(t+offset)");
  sub.add_option("--rate-grid", c.rate_grid, "rate multipliers to try; best mean final Delta is kept")->delimiter(',');
  sub.add_option("--iters", c.total_iters, "iterations per run")->capture_default_str();
  sub.add_option("--eval-every", c.eval_every, "iterations between checkpoints")->capture_default_str();
  sub.add_option("--seeds", c.seeds, "run seeds")->delimiter(',');
  sub.add_option("--output", o.output, "output directory (default $KPCA_OUTPUT_DIR or .)");
  sub.add_option("--tau", c.tau, "basin parameter; in_basin means Delta <= 1 - tau")->capture_default_str();
  sub.add_option("--delta", c.delta, "failure probability for the theorem schedule")->capture_default_str();
  sub.add_flag("--center,!--no-center", c.center, "center dataset files before use")->capture_default_str();
  sub.add_option("--vr-inner", c.vr_inner, "VR-PCA inner steps per epoch (default n)");
  sub.add_option("--threads", c.threads, "worker threads")->capture_default_str();
  sub.add_flag("--timing", c.timing, "record wall time in elapsed_ns (breaks byte-for-byte reproducibility)");
  sub.add_option("--pilot", c.pilot, "pilot samples for the automatic rate")->capture_default_str();
}

std::filesystem::path resolve_output(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') return env;
  return ".";
}

int report_checks(const std::vector<kpca::CheckReport>& reports, const std::filesystem::path& out_dir) {
  std::string text;
  const kpca::CheckReport* worst = nullptr;
  for (const auto& r : reports) {
    text += r.to_line() + '\n';
    if (!r.passed && (worst == nullptr || r.worst_violation > worst->worst_violation)) worst = &r;
  }
  std::filesystem::create_directories(out_dir);
  kpca::detail::write_file(out_dir / "check_report.txt", text);
  std::cout << text;
  if (worst != nullptr) {
    std::cerr << "check failed: " << worst->name << " (worst violation " << worst->worst_violation << ") "
              << worst->details << '\n';
    return kExitFailure;
  }
  return 0;
}

int run_check(const Options& o, const std::filesystem::path& out_dir) {
  std::vector<kpca::CheckReport> reports;
  const bool all = o.suite == "all";
  if (all || o.suite == "exact") {
    const auto exact = kpca::exact_checks(o.seed);
    reports.insert(reports.end(), exact.begin(), exact.end());
  }
  if (all || o.suite == "montecarlo") {
    kpca::MonteCarloSetup setup;
    setup.trials = o.trials;
    setup.configs = o.configs;
    for (auto& r : kpca::montecarlo_checks(o.seed, setup, o.cfg.threads)) reports.push_back(r.report);
  }
  if (all || o.suite == "envelope") {
    kpca::EnvelopeSetup setup;
    setup.runs = o.runs;
    setup.total_iters = o.envelope_iters;
    setup.eval_every = std::max<std::uint64_t>(1, o.envelope_iters / 100);
    const auto agg = kpca::envelope_checks(o.seed, setup, o.cfg.threads);
    kpca::CheckReport pooled{"theorem_envelope_pooled"};
    pooled.trials = agg.in_basin;
    pooled.worst_violation = std::max(0.0, 0.9 - agg.fraction());
    pooled.passed = agg.in_basin > 0 && agg.fraction() >= 0.9;
    pooled.details = "eta=" + kpca::format_double(agg.eta) + " within=" + std::to_string(agg.within) + "/" +
                     std::to_string(agg.in_basin);
    reports.push_back(pooled);
  }
  return report_checks(reports, out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming k-PCA: matrix Krasulina, Oja, VR-PCA and power-method harness"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset and its ground-truth sidecar");
  add_data_options(*gen, o, false);
  gen->add_option("--config", o.config_file, "flat key = value file");
  gen->add_option("--seed", o.seed, "sample seed (also derives the rotation unless --rotation-seed)")->capture_default_str();
  gen->add_option("--output", o.gen_output, "dataset file; .csv selects CSV, anything else the binary format")
      ->default_str("<output dir>/dataset.bin");

  auto* run = app.add_subcommand("run", "run solvers and write one trace CSV per (solver, seed)");
  add_data_options(*run, o, false);
  add_run_options(*run, o);

  auto* sweep = app.add_subcommand("sweep", "run a grid of (d, k, ratio, solver) cells and summarize");
  add_data_options(*sweep, o, true);
  add_run_options(*sweep, o);

  auto* check = app.add_subcommand("check", "run theory-check suites");
  check->add_option("suite", o.suite, "exact, montecarlo, envelope or all")
      ->required()
      ->check(CLI::IsMember({"exact", "montecarlo", "envelope", "all"}));
  check->add_option("--seed", o.seed, "master seed")->capture_default_str();
  check->add_option("--trials", o.trials, "Monte Carlo trials per configuration")->capture_default_str();
  check->add_option("--configs", o.configs, "Monte Carlo configurations")->capture_default_str();
  check->add_option("--runs", o.runs, "envelope runs")->capture_default_str();
  check->add_option("--iters", o.envelope_iters, "iterations per envelope run")->capture_default_str();
  check->add_option("--output", o.output, "report directory (default $KPCA_OUTPUT_DIR or .)");
  check->add_option("--threads", o.cfg.threads, "worker threads")->capture_default_str();

  auto* plot = app.add_subcommand("plotscript", "emit a gnuplot script for the trace CSVs in a directory");
  plot->add_option("--input", o.plot_input, "directory holding trace_*.csv")->capture_default_str();
  plot->add_option("--output", o.plot_output, "script file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    for (auto* sub : {gen, run, sweep}) {
      if (sub->parsed() && !o.config_file.empty()) apply_config_file(*sub, o.config_file);
    }
    o.cfg.output_dir = resolve_output(gen->parsed() ? std::string{} : o.output);

    if (gen->parsed()) {
      const std::filesystem::path file = o.gen_output.empty() ? o.cfg.output_dir / "dataset.bin" : std::filesystem::path(o.gen_output);
      const auto res = kpca::cmd_gen(o.cfg, file, o.seed);
      std::cout << "wrote " << res.data_file.string() << " and " << res.meta_file.string()
                << " (noise_over_signal " << kpca::format_double(res.noise_over_signal) << ")\n";
    } else if (run->parsed()) {
      const auto res = kpca::cmd_run(o.cfg);
      for (const auto& f : res.files) std::cout << "wrote " << f.string() << '\n';
    } else if (sweep->parsed()) {
      const auto cells = kpca::cmd_sweep(o.cfg);
      std::cout << kpca::encode_sweep_summary(cells);
    } else if (check->parsed()) {
      return run_check(o, o.cfg.output_dir);
    } else if (plot->parsed()) {
      const auto script = kpca::plot_script(o.plot_input);
      if (o.plot_output.empty()) {
        std::cout << script;
      } else {
        kpca::detail::write_file(o.plot_output, script);
      }
    }
  } catch (const kpca::Error& e) {
    std::cerr << "kpca: " << e.what() << '\n';
    const bool usage = e.code() == kpca::Errc::InvalidConfig || e.code() == kpca::Errc::InvalidSpec;
    return usage ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "kpca: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
