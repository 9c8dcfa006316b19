#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stochsynth {

/// Failure categories surfaced by the library. The CLI maps these onto exit codes.
enum class ErrorKind {
  Precondition,
  InvalidModel,
  MuExceedsSpan,
  NonzeroMuOnFiniteSet,
  SpanUndefinedForFinite,
  UnsupportedForm,
  HypothesisViolated,
  NonFiniteState,
  NonFinitePath,
  InfeasibleAtTau,
  NoFeasibleN,
  InvalidCover,
  SampleBudgetExceeded,
  EmptyWinningSet,
  NoLasso,
  Parse,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Throws Error{Precondition} with `what` unless `cond` holds.
inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::Precondition, what);
}

}  // namespace stochsynth
