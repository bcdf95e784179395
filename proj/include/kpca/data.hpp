#pragma once

// Synthetic low-rank data, dataset containers, streaming samplers and
// dataset file formats.
//
// Binary layout (all little-endian):
//   "KPCA" | u32 version (=1) | u64 n | u64 d | n*d f64, row-major
// CSV layout: one sample per line, d comma-separated decimals; lines that
// start with '#' are ignored.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kpca/linalg.hpp"
#include "kpca/metrics.hpp"
#include "kpca/random.hpp"

namespace kpca {

/// Synthetic spectrum: k head eigenvalues and a flat tail sized so that the
/// tail-over-head mass ratio equals noise_over_signal exactly.
struct SpectrumSpec {
  Index d = 0;
  Index k = 0;
  std::vector<double> head_eigenvalues;  // empty means all ones
  double noise_over_signal = 0.0;
  std::uint64_t rotation_seed = 0;

  std::vector<double> heads() const {
    return head_eigenvalues.empty() ? std::vector<double>(static_cast<std::size_t>(k), 1.0) : head_eigenvalues;
  }

  void validate() const {
    if (k < 1 || d < 1 || k > d) throw Error(Errc::InvalidSpec, "need 1 <= k <= d");
    if (!head_eigenvalues.empty()) {
      if (static_cast<Index>(head_eigenvalues.size()) != k) throw Error(Errc::InvalidSpec, "need exactly k head eigenvalues");
      for (std::size_t i = 0; i < head_eigenvalues.size(); ++i) {
        if (!(head_eigenvalues[i] > 0.0) || !std::isfinite(head_eigenvalues[i]))
          throw Error(Errc::InvalidSpec, "head eigenvalues must be positive");
        if (i > 0 && head_eigenvalues[i] > head_eigenvalues[i - 1])
          throw Error(Errc::InvalidSpec, "head eigenvalues must be descending");
      }
    }
    if (!(noise_over_signal >= 0.0) || !std::isfinite(noise_over_signal))
      throw Error(Errc::InvalidSpec, "noise_over_signal must be finite and non-negative");
    if (noise_over_signal > 0.0 && k == d) throw Error(Errc::InvalidSpec, "a positive noise level needs k < d");
  }
};

/// Population model built from a SpectrumSpec: Sigma = R^T diag(lambda) R,
/// where the rows of `rotation` are the eigenvectors.
struct SpecCovariance {
  GroundTruth truth;
  Mat rotation;
  std::vector<double> eigenvalues;
  Mat covariance;

  Index dim() const { return rotation.cols(); }
};

inline SpecCovariance make_spec_covariance(const SpectrumSpec& spec) {
  spec.validate();
  const auto heads = spec.heads();
  const double head_mass = std::accumulate(heads.begin(), heads.end(), 0.0);
  const Index tail_count = spec.d - spec.k;

  SpecCovariance out;
  out.eigenvalues = heads;
  if (tail_count > 0) {
    const double tail_value = spec.noise_over_signal * head_mass / static_cast<double>(tail_count);
    out.eigenvalues.resize(static_cast<std::size_t>(spec.d), tail_value);
  }
  if (tail_count > 0 && out.eigenvalues.back() > heads.back())
    throw Error(Errc::InvalidSpec, "tail eigenvalue exceeds the smallest head eigenvalue");

  out.rotation = random_orthogonal(spec.d, spec.rotation_seed);
  out.truth.k = spec.k;
  out.truth.basis = out.rotation.topRows(spec.k);
  out.truth.spectrum = out.eigenvalues;

  const Eigen::Map<const Vec> lambda(out.eigenvalues.data(), spec.d);
  out.covariance = out.rotation.transpose() * lambda.asDiagonal() * out.rotation;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

struct DataSet {
  Mat samples;  // n x d
  bool centered = false;

  Index n() const { return samples.rows(); }
  Index d() const { return samples.cols(); }
};

namespace detail {

/// Number of leading non-zero eigenvalues; only those directions are drawn.
inline Index active_directions(const SpecCovariance& model) {
  Index m = 0;
  while (m < static_cast<Index>(model.eigenvalues.size()) && model.eigenvalues[static_cast<std::size_t>(m)] > 0.0) ++m;
  return m;
}

inline void draw_spec_sample(const SpecCovariance& model, Index active, Rng& rng, Eigen::Ref<Vec> out) {
  out.setZero();
  for (Index i = 0; i < active; ++i) {
    const double coeff = std::sqrt(model.eigenvalues[static_cast<std::size_t>(i)]) * rng.normal();
    out.noalias() += coeff * model.rotation.row(i).transpose();
  }
}

}  // namespace detail

/// n samples x = R^T Lambda^{1/2} z, z standard normal. Identical to n
/// consecutive draws of a gaussian SampleSource with the same seed.
inline DataSet sample_gaussian(const SpecCovariance& model, Index n, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::EmptyDataSet, "n must be positive");
  Rng rng(seed);
  const Index active = detail::active_directions(model);
  DataSet out;
  out.samples.resize(n, model.dim());
  Vec x(model.dim());
  for (Index i = 0; i < n; ++i) {
    detail::draw_spec_sample(model, active, rng, x);
    out.samples.row(i) = x.transpose();
  }
  return out;
}

inline DataSet center(const DataSet& data) {
  if (data.n() < 1) throw Error(Errc::EmptyDataSet, "no samples");
  DataSet out;
  const Eigen::RowVectorXd mean = data.samples.colwise().mean();
  out.samples = data.samples.rowwise() - mean;
  out.centered = true;
  return out;
}

/// Largest squared sample norm, empirical spectrum and ||Sigma_hat||_F.
struct BoundsEstimate {
  double b = 0.0;
  std::vector<double> spectrum;
  double sigma_frob = 0.0;
  double noise_over_signal = 0.0;  // at the requested k
};

inline BoundsEstimate estimate_bounds(const DataSet& data, Index k) {
  if (data.n() < 1) throw Error(Errc::EmptyDataSet, "no samples");
  BoundsEstimate out;
  out.b = data.samples.rowwise().squaredNorm().maxCoeff();
  const Mat cov = second_moment(data.samples);
  out.sigma_frob = cov.norm();
  out.spectrum = top_k_eigen(cov, cov.rows()).values;
  const double head = std::accumulate(out.spectrum.begin(), out.spectrum.begin() + std::min<Index>(k, cov.rows()), 0.0);
  out.noise_over_signal = head > 0.0 ? noise_over_signal(out.spectrum, k) : 0.0;
  return out;
}

/// Nearest-rank empirical quantile of the squared row norms.
inline double norm_sq_quantile(const Mat& samples, double q) {
  if (samples.rows() == 0) throw Error(Errc::EmptyDataSet, "no samples");
  std::vector<double> norms(static_cast<std::size_t>(samples.rows()));
  for (Index i = 0; i < samples.rows(); ++i) norms[static_cast<std::size_t>(i)] = samples.row(i).squaredNorm();
  std::sort(norms.begin(), norms.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(norms.size())));
  return norms[std::clamp<std::size_t>(rank, 1, norms.size()) - 1];
}

/// A stream of d-vectors: either fresh draws from a SpecCovariance or uniform
/// sampling with replacement from a finite DataSet. Each source owns its RNG.
class SampleSource {
 public:
  enum class Kind { GaussianSpec, FiniteReplay };

  static SampleSource gaussian(std::shared_ptr<const SpecCovariance> model, std::uint64_t seed) {
    SampleSource src(seed);
    src.active_ = detail::active_directions(*model);
    src.payload_ = std::move(model);
    return src;
  }

  static SampleSource replay(std::shared_ptr<const DataSet> data, std::uint64_t seed) {
    if (!data || data->n() < 1) throw Error(Errc::EmptyDataSet, "replay source needs samples");
    SampleSource src(seed);
    src.payload_ = std::move(data);
    return src;
  }

  Kind kind() const {
    return std::holds_alternative<std::shared_ptr<const SpecCovariance>>(payload_) ? Kind::GaussianSpec
                                                                                     : Kind::FiniteReplay;
  }

  Index dim() const { return model() ? model()->dim() : dataset()->d(); }

  const SpecCovariance* model() const {
    const auto* p = std::get_if<std::shared_ptr<const SpecCovariance>>(&payload_);
    return p ? p->get() : nullptr;
  }
  const DataSet* dataset() const {
    const auto* p = std::get_if<std::shared_ptr<const DataSet>>(&payload_);
    return p ? p->get() : nullptr;
  }

  void reseed(std::uint64_t seed) { rng_.reseed(seed); }

  /// Uniform sample index; replay sources only.
  Index draw_index() { return static_cast<Index>(rng_.below(static_cast<std::uint64_t>(dataset()->n()))); }

  void draw(Eigen::Ref<Vec> out) {
    if (const auto* m = model()) {
      detail::draw_spec_sample(*m, active_, rng_, out);
    } else {
      out = dataset()->samples.row(draw_index()).transpose();
    }
  }

  DataSet draw_many(Index n) {
    DataSet out;
    out.samples.resize(n, dim());
    Vec x(dim());
    for (Index i = 0; i < n; ++i) {
      draw(x);
      out.samples.row(i) = x.transpose();
    }
    return out;
  }

 private:
  explicit SampleSource(std::uint64_t seed) : rng_(seed) {}

  std::variant<std::shared_ptr<const SpecCovariance>, std::shared_ptr<const DataSet>> payload_;
  Rng rng_;
  Index active_ = 0;
};

// ---------------------------------------------------------------------------
// Files

enum class DataFormat { Binary, Csv };

inline constexpr std::uint32_t kBinaryVersion = 1;

inline DataFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".csv" || ext == ".CSV") ? DataFormat::Csv : DataFormat::Binary;
}

namespace detail {

inline void put_le(std::string& buf, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const std::string& buf, std::size_t offset, int bytes) {
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i)
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[offset + static_cast<std::size_t>(i)])) << (8 * i);
  return value;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Shortest round-tripping decimal representation (17 significant digits).
inline std::string format_double(double value) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(len));
}

inline std::string encode_binary(const DataSet& data) {
  std::string buf = "KPCA";
  detail::put_le(buf, kBinaryVersion, 4);
  detail::put_le(buf, static_cast<std::uint64_t>(data.n()), 8);
  detail::put_le(buf, static_cast<std::uint64_t>(data.d()), 8);
  buf.reserve(buf.size() + static_cast<std::size_t>(data.n() * data.d()) * 8);
  for (Index i = 0; i < data.n(); ++i)
    for (Index j = 0; j < data.d(); ++j) detail::put_le(buf, std::bit_cast<std::uint64_t>(data.samples(i, j)), 8);
  return buf;
}

inline DataSet decode_binary(const std::string& buf) {
  constexpr std::size_t header = 4 + 4 + 8 + 8;
  if (buf.size() < header || buf.compare(0, 4, "KPCA") != 0) throw Error(Errc::FormatError, "bad magic");
  const auto version = detail::get_le(buf, 4, 4);
  if (version != kBinaryVersion) throw Error(Errc::FormatError, "unsupported version " + std::to_string(version));
  const auto n = detail::get_le(buf, 8, 8);
  const auto d = detail::get_le(buf, 16, 8);
  if (n == 0 || d == 0) throw Error(Errc::FormatError, "empty shape");
  if (n > (buf.size() - header) / 8 / d || (buf.size() - header) != n * d * 8)
    throw Error(Errc::FormatError, "payload size does not match shape");
  DataSet out;
  out.samples.resize(static_cast<Index>(n), static_cast<Index>(d));
  std::size_t offset = header;
  for (Index i = 0; i < out.n(); ++i)
    for (Index j = 0; j < out.d(); ++j, offset += 8) {
      const double v = std::bit_cast<double>(detail::get_le(buf, offset, 8));
      if (!std::isfinite(v)) throw Error(Errc::FormatError, "non-finite entry");
      out.samples(i, j) = v;
    }
  return out;
}

inline std::string encode_csv(const DataSet& data) {
  std::string out;
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.d(); ++j) {
      if (j > 0) out.push_back(',');
      out += format_double(data.samples(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

inline DataSet decode_csv(const std::string& text) {
  std::vector<double> values;
  Index d = 0;
  Index rows = 0;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    Index col = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = body.find(',', start);
      const auto token = detail::trim(body.substr(start, comma == std::string_view::npos ? body.npos : comma - start));
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
        throw Error(Errc::FormatError, "line " + std::to_string(line_no) + " column " + std::to_string(col + 1) +
                                           ": not a finite number '" + std::string(token) + "'");
      }
      values.push_back(v);
      ++col;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (rows == 0) d = col;
    if (col != d)
      throw Error(Errc::FormatError, "line " + std::to_string(line_no) + " has " + std::to_string(col) +
                                         " columns, expected " + std::to_string(d));
    ++rows;
  }
  if (rows == 0) throw Error(Errc::FormatError, "no data rows");
  DataSet out;
  out.samples = Eigen::Map<const Mat>(values.data(), rows, d);
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const DataSet& data, DataFormat format) {
  detail::write_file(path, format == DataFormat::Binary ? encode_binary(data) : encode_csv(data));
}

inline void save_dataset(const std::filesystem::path& path, const DataSet& data) {
  save_dataset(path, data, format_from_path(path));
}

inline DataSet load_dataset(const std::filesystem::path& path, DataFormat format) {
  const auto bytes = detail::read_file(path);
  return format == DataFormat::Binary ? decode_binary(bytes) : decode_csv(bytes);
}

inline DataSet load_dataset(const std::filesystem::path& path) { return load_dataset(path, format_from_path(path)); }

}  // namespace kpca
