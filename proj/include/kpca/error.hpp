#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kpca {

enum class Errc {
  RankDeficient,
  NotSymmetric,
  ConvergenceFailure,
  NotOrthonormal,
  DimensionMismatch,
  EmptyDataSet,
  ZeroSignal,
  NonFinite,
  InvalidSpec,
  InvalidInputs,
  InvalidConfig,
  IoError,
  FormatError,
  InsufficientTrials,
  NotTheoremRate,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::ConvergenceFailure: return "ConvergenceFailure";
    case Errc::NotOrthonormal: return "NotOrthonormal";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyDataSet: return "EmptyDataSet";
    case Errc::ZeroSignal: return "ZeroSignal";
    case Errc::NonFinite: return "NonFinite";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::InvalidInputs: return "InvalidInputs";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
    case Errc::FormatError: return "FormatError";
    case Errc::InsufficientTrials: return "InsufficientTrials";
    case Errc::NotTheoremRate: return "NotTheoremRate";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the Errc codes.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace kpca
