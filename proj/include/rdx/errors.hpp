#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace rdx {

enum class ErrorKind {
  // input / data errors
  MissingColumn,
  ParseError,
  SharpComplianceViolation,
  UnknownCutoff,
  ComplianceViolation,
  InvalidArgument,
  // estimation errors
  InsufficientData,
  NonpositiveBandwidth,
  DegeneratePilot,
  MismatchedViews,
  XbarOutOfRange,
  WeakFirstStage,
  UnsupportedOrder,
  EmptyCell,
  SupportViolation,
  DegenerateWeights,
  SingularDesign,
  IndexOutOfRange,
  OverlappingWindows,
  InvalidEta,
  ZeroVariance,
  EstimatorUnknown,
};

const char* to_string(ErrorKind kind);

/// True for errors caused by malformed or inconsistent input data, as opposed
/// to estimation failures on otherwise valid data.
bool is_data_error(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::size_t> row = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  /// 1-based data row (excluding the header) for row-level input errors.
  std::optional<std::size_t> row() const noexcept { return row_; }

private:
  ErrorKind kind_;
  std::optional<std::size_t> row_;
};

}  // namespace rdx
