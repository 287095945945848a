#include "rdx/errors.hpp"

namespace rdx {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SharpComplianceViolation: return "SharpComplianceViolation";
    case ErrorKind::UnknownCutoff: return "UnknownCutoff";
    case ErrorKind::ComplianceViolation: return "ComplianceViolation";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::NonpositiveBandwidth: return "NonpositiveBandwidth";
    case ErrorKind::DegeneratePilot: return "DegeneratePilot";
    case ErrorKind::MismatchedViews: return "MismatchedViews";
    case ErrorKind::XbarOutOfRange: return "XbarOutOfRange";
    case ErrorKind::WeakFirstStage: return "WeakFirstStage";
    case ErrorKind::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::SupportViolation: return "SupportViolation";
    case ErrorKind::DegenerateWeights: return "DegenerateWeights";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::OverlappingWindows: return "OverlappingWindows";
    case ErrorKind::InvalidEta: return "InvalidEta";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::EstimatorUnknown: return "EstimatorUnknown";
  }
  return "Unknown";
}

bool is_data_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn:
    case ErrorKind::ParseError:
    case ErrorKind::SharpComplianceViolation:
    case ErrorKind::UnknownCutoff:
    case ErrorKind::ComplianceViolation:
      return true;
    default:
      return false;
  }
}

static std::string format_message(ErrorKind kind, const std::string& what,
                                  std::optional<std::size_t> row) {
  std::string msg = to_string(kind);
  if (row) msg += "(row " + std::to_string(*row) + ")";
  if (!what.empty()) msg += ": " + what;
  return msg;
}

Error::Error(ErrorKind kind, const std::string& what,
             std::optional<std::size_t> row)
    : std::runtime_error(format_message(kind, what, row)), kind_(kind), row_(row) {}

}  // namespace rdx
