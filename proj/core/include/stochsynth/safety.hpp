#pragma once

#include "stochsynth/abstraction.hpp"
#include "stochsynth/mc_label.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stochsynth {

/// One bit per abstract state.
class Bitset {
public:
  Bitset() = default;
  explicit Bitset(std::uint64_t size, bool value = false);

  std::uint64_t size() const { return size_; }
  bool test(std::uint64_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::uint64_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::uint64_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  std::uint64_t count() const;
  bool any() const { return count() > 0; }
  /// Index of the first set bit, or size() when none.
  std::uint64_t first() const;
  bool operator==(const Bitset& o) const = default;
  /// True when every bit of *this is also set in o.
  bool subset_of(const Bitset& o) const;

private:
  std::uint64_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

struct SafetySpec {
  Box W;
  double shrink = 0.0;
  std::size_t fairness_k = 3;
  /// Input indices in decreasing order of preference; missing indices follow in
  /// ascending order. Empty means 0, 1, 2, ...
  std::vector<std::size_t> preference;

  Box safe_box() const { return W.shrunk(shrink); }
};

/// The run-length cap is decidable from a word only when it is longer than k.
inline bool fairness_enforced(std::size_t N, std::size_t k) { return N > k; }

/// Input u is admissible at s unless its last k letters are all u (when enforced).
bool admissible(const WordCodec& codec, std::uint64_t s, std::size_t u, std::size_t k);

/// Greatest fixpoint: the largest subset of `safe` in which every state has an
/// admissible input whose successor stays in the subset. Worklist over
/// predecessor arithmetic. May return an empty set.
Bitset solve_safety_game(const WordCodec& codec, const Bitset& safe, std::size_t fairness_k, std::size_t threads = 0);

/// Noise-free labels: H_bar(s) in the shrunk W.
Bitset noise_free_safe_states(const SymbolicModel& symbolic, const SafetySpec& spec, std::size_t threads = 0);

/// Monte-Carlo labels against the shrunk W.
Bitset monte_carlo_safe_states(const SymbolicModel& symbolic, const SafetySpec& spec, const MonteCarloLabeler& labeler,
                               std::size_t threads = 0);

/// Labels with the labeler matching the model's output kind and solves the
/// game. Throws EmptyWinningSet when nothing survives (or nothing is safe).
Bitset compute_winning_set(const SymbolicModel& symbolic, const SafetySpec& spec,
                           const MonteCarloLabeler* labeler = nullptr, std::size_t threads = 0);

struct Schedule {
  std::uint64_t source = 0;  // abstract state the schedule starts from
  std::vector<std::size_t> prefix;
  std::vector<std::size_t> period;
  double preferred_fraction = 0.0;
};

/// Greedy lasso: from the start word (default: least winning state), repeatedly
/// take the most preferred admissible input that stays winning until a state
/// repeats. Throws NoLasso if a winning state has no winning successor.
Schedule extract_schedule(const WordCodec& codec, const Bitset& winning, const SafetySpec& spec,
                          std::optional<std::uint64_t> start = std::nullopt);

/// Schedule whose period is `word` itself, starting from the state spelled by
/// its last N letters (repeating the word when it is shorter than N).
Schedule periodic_schedule(const WordCodec& codec, const std::vector<std::size_t>& word);

struct ScheduleAudit {
  bool winning_ok = false;   // every visited state is winning
  bool fairness_ok = false;  // no run longer than k in prefix + period + period
  bool fairness_checked = false;
  bool cycle_ok = false;     // the period returns to the state where it starts
  std::size_t visited = 0;
  std::vector<std::string> problems;

  bool pass() const { return winning_ok && fairness_ok && cycle_ok; }
};

ScheduleAudit audit_schedule(const WordCodec& codec, const Bitset& winning, const SafetySpec& spec,
                             const Schedule& schedule);

/// Concrete curve: prefix once, then period forever, each input held for tau.
InputCurve refine_controller(const Schedule& schedule, const QuantizedInputs& inputs, double tau);

}  // namespace stochsynth
