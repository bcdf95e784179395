#pragma once

// Trace CSV contract and log-linear fitting of convergence traces.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "kpca/data.hpp"
#include "kpca/solvers.hpp"

namespace kpca {

inline constexpr const char* kTraceHeader = "iter,samples_seen,delta,ln_delta,recon_error,residual_sq,in_basin,elapsed_ns";

inline std::string encode_trace_csv(const ConvergenceTrace& trace) {
  std::string out = kTraceHeader;
  out.push_back('\n');
  for (const auto& r : trace.records) {
    out += std::to_string(r.iter) + ',' + std::to_string(r.samples_seen) + ',' + format_double(r.delta) + ',' +
           format_double(r.ln_delta) + ',' + format_double(r.recon_error) + ',' + format_double(r.residual_sq) + ',' +
           (r.in_basin ? '1' : '0') + ',' + std::to_string(r.elapsed_ns) + '\n';
  }
  return out;
}

inline void save_trace_csv(const std::filesystem::path& path, const ConvergenceTrace& trace) {
  detail::write_file(path, encode_trace_csv(trace));
}

namespace detail {

template <typename T>
T parse_field(std::string_view token, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw Error(Errc::FormatError, "trace line " + std::to_string(line_no) + ": bad field '" + std::string(token) + "'");
  return value;
}

}  // namespace detail

inline ConvergenceTrace decode_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTraceHeader)
    throw Error(Errc::FormatError, "missing or unexpected trace header");
  ConvergenceTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (auto comma = body.find(','); ; comma = body.find(',', start)) {
      f.push_back(body.substr(start, comma == body.npos ? body.npos : comma - start));
      if (comma == body.npos) break;
      start = comma + 1;
    }
    if (f.size() != 8) throw Error(Errc::FormatError, "trace line " + std::to_string(line_no) + ": expected 8 fields");
    TraceRecord r;
    r.iter = detail::parse_field<std::uint64_t>(f[0], line_no);
    r.samples_seen = detail::parse_field<std::uint64_t>(f[1], line_no);
    r.delta = detail::parse_field<double>(f[2], line_no);
    r.ln_delta = detail::parse_field<double>(f[3], line_no);
    r.recon_error = detail::parse_field<double>(f[4], line_no);
    r.residual_sq = detail::parse_field<double>(f[5], line_no);
    r.in_basin = detail::parse_field<int>(f[6], line_no) != 0;
    r.elapsed_ns = detail::parse_field<std::int64_t>(f[7], line_no);
    trace.records.push_back(r);
  }
  return trace;
}

inline ConvergenceTrace load_trace_csv(const std::filesystem::path& path) {
  return decode_trace_csv(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Fitting

struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit fit;
  fit.points = x.size();
  if (x.size() < 2) return fit;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

/// Bounds of the decaying regime used for slope fits.
struct DecayWindow {
  double entry = 0.5;   // first checkpoint with Delta <= entry starts the window
  double floor = 1e-12; // checkpoints at or below the floor are excluded
};

/// Least-squares fit of ln(Delta) against iteration over the decaying regime:
/// from the first checkpoint with Delta <= entry up to the last checkpoint
/// above the floor. Falls back to every checkpoint above the floor when the
/// window holds fewer than three points.
inline LineFit fit_log_decay(const ConvergenceTrace& trace, DecayWindow window = {}) {
  const auto& recs = trace.records;
  std::size_t first = recs.size();
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (recs[i].delta <= window.entry) {
      first = i;
      break;
    }
  std::size_t last = 0;
  bool any_above = false;
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (recs[i].delta > window.floor) {
      last = i;
      any_above = true;
    }

  auto collect = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> x, y;
    for (std::size_t i = lo; i <= hi && i < recs.size(); ++i)
      if (recs[i].delta > window.floor) {
        x.push_back(static_cast<double>(recs[i].iter));
        y.push_back(std::log(recs[i].delta));
      }
    return std::make_pair(x, y);
  };

  if (!any_above) return {};
  auto [x, y] = first <= last ? collect(first, last) : std::make_pair(std::vector<double>{}, std::vector<double>{});
  if (x.size() < 3) std::tie(x, y) = collect(0, last);
  return least_squares(x, y);
}

inline double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const auto mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace kpca
