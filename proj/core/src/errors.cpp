#include "stochsynth/errors.hpp"

namespace stochsynth {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Precondition: return "Precondition";
    case ErrorKind::InvalidModel: return "InvalidModel";
    case ErrorKind::MuExceedsSpan: return "MuExceedsSpan";
    case ErrorKind::NonzeroMuOnFiniteSet: return "NonzeroMuOnFiniteSet";
    case ErrorKind::SpanUndefinedForFinite: return "SpanUndefinedForFinite";
    case ErrorKind::UnsupportedForm: return "UnsupportedForm";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::NonFinitePath: return "NonFinitePath";
    case ErrorKind::InfeasibleAtTau: return "InfeasibleAtTau";
    case ErrorKind::NoFeasibleN: return "NoFeasibleN";
    case ErrorKind::InvalidCover: return "InvalidCover";
    case ErrorKind::SampleBudgetExceeded: return "SampleBudgetExceeded";
    case ErrorKind::EmptyWinningSet: return "EmptyWinningSet";
    case ErrorKind::NoLasso: return "NoLasso";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

}  // namespace stochsynth
