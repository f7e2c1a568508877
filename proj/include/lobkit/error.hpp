#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lobkit {

enum class Errc {
  InvalidArgument,
  Io,
  RowCountMismatch,
  MalformedRow,
  NonMonotoneTime,
  EmptyDay,
  MissingBest,
  CrossedQuote,
  EmptyInput,
  InsufficientLevels,
  ZeroPriceChanges,
  HorizonTooLong,
  InsufficientHistory,
  EmptyClass,
  IndexOutOfRange,
  LengthMismatch,
  EmptyList,
  EmptyMatrix,
  DegenerateSeries,
  ShapeMismatch,
  NonFiniteLoss,
  InvalidConfig,
};

inline std::string_view errc_name(Errc c) noexcept {
  switch (c) {
  case Errc::InvalidArgument: return "InvalidArgument";
  case Errc::Io: return "Io";
  case Errc::RowCountMismatch: return "RowCountMismatch";
  case Errc::MalformedRow: return "MalformedRow";
  case Errc::NonMonotoneTime: return "NonMonotoneTime";
  case Errc::EmptyDay: return "EmptyDay";
  case Errc::MissingBest: return "MissingBest";
  case Errc::CrossedQuote: return "CrossedQuote";
  case Errc::EmptyInput: return "EmptyInput";
  case Errc::InsufficientLevels: return "InsufficientLevels";
  case Errc::ZeroPriceChanges: return "ZeroPriceChanges";
  case Errc::HorizonTooLong: return "HorizonTooLong";
  case Errc::InsufficientHistory: return "InsufficientHistory";
  case Errc::EmptyClass: return "EmptyClass";
  case Errc::IndexOutOfRange: return "IndexOutOfRange";
  case Errc::LengthMismatch: return "LengthMismatch";
  case Errc::EmptyList: return "EmptyList";
  case Errc::EmptyMatrix: return "EmptyMatrix";
  case Errc::DegenerateSeries: return "DegenerateSeries";
  case Errc::ShapeMismatch: return "ShapeMismatch";
  case Errc::NonFiniteLoss: return "NonFiniteLoss";
  case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the Errc kinds so the
/// CLI can map data errors to exit codes without parsing messages.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string &what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string &what) { throw Error(code, what); }

} // namespace lobkit
