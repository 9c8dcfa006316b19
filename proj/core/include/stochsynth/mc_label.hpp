#pragma once

#include "stochsynth/abstraction.hpp"
#include "stochsynth/sde.hpp"

#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

namespace stochsynth {

struct LabelingConfig {
  double theta = 0.0;  // estimation precision
  double pi = 0.05;    // confidence slack; guarantees hold with probability >= 1 - pi
  double r = 0.0;      // cover pitch, r < 2 theta
  double delta = 0.0;  // relaxation, 0 < delta < epsilon
  double q = 2.0;
  double sample_cap = 1e7;  // label_state refuses bounds above this

  /// Throws InvalidCover when r >= 2 theta, Precondition on the other ranges.
  void validate(double epsilon) const;
};

/// delta defaults to epsilon / 2.
inline double default_delta(double epsilon) { return 0.5 * epsilon; }

/// Points of the r-lattice whose r/2-balls cover a box.
struct GridCover {
  double r = 0.0;
  std::vector<Vec> points;

  std::size_t size() const { return points.size(); }
};

/// Per axis, lattice indices k with k r in [floor((lo + r/2)/r), ceil((hi - r/2)/r)]
/// (at least one index), combined lexicographically.
GridCover grid_cover(const Box& A, double r);

/// Sample bound M >= |A^r| b(a*, 2q) / (pi (theta - r/2)^{2q}) with
/// b(a, p) = (1 + |x_s - a|^p) e^{p (p+1) max(L_x, Z) N tau} and a* the cover
/// point farthest from x_s. Returned as a double because it overflows integers
/// for stiff models.
double sample_count(const LabelingConfig& cfg, const GridCover& cover, const ScsModel& model,
                    const AbstractionParams& params);

/// min_{a in cover} (mean |xi - a|^q)^{1/q}.
double empirical_distance(const EndpointSamples& samples, const GridCover& cover, double q);

enum class Label { Safe, Unsafe };

struct LabelResult {
  Label label = Label::Unsafe;
  double distance = 0.0;  // d^r_M
  std::size_t M = 0;
  double confidence = 0.0;
};

/// Labels abstract states of a probabilistic-output model against boxes. A
/// state is Safe for A when d^r_M < delta - theta. Results are memoized per
/// (state, A); samples come from the model's per-state cache, so one sample
/// set serves every set A.
class MonteCarloLabeler {
public:
  MonteCarloLabeler(const SymbolicModel& symbolic, LabelingConfig cfg);

  LabelResult label(std::uint64_t state, const Box& A) const;
  const LabelingConfig& config() const { return cfg_; }
  /// Samples per state required for A (throws SampleBudgetExceeded above the cap).
  std::size_t samples_for(const Box& A) const;

private:
  struct Plan {
    GridCover cover;
    std::size_t M;
  };
  const Plan& plan_for(const Box& A) const;

  const SymbolicModel* symbolic_;
  LabelingConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<double>, Plan> plans_;
  mutable std::map<std::pair<std::uint64_t, std::vector<double>>, LabelResult> memo_;
};

LabelResult label_state(const SymbolicModel& symbolic, std::uint64_t state, const Box& A, const LabelingConfig& cfg);

}  // namespace stochsynth
