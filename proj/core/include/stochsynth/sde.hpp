#pragma once

#include "stochsynth/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace stochsynth {

/// Piecewise-constant input curve: prefix, then period repeated forever. Each
/// value is held for tau. An empty period makes the curve finite.
class InputCurve {
public:
  InputCurve(std::vector<Vec> prefix, std::vector<Vec> period, double tau);

  /// Curve for index words over a quantized alphabet.
  static InputCurve from_indices(const std::vector<std::size_t>& prefix, const std::vector<std::size_t>& period,
                                 const QuantizedInputs& inputs, double tau);

  double tau() const { return tau_; }
  /// Value on [k tau, (k+1) tau).
  const Vec& at_step(std::size_t k) const;
  /// Value at time t >= 0.
  const Vec& at(double t) const;
  /// Number of tau-steps available (SIZE_MAX when periodic).
  std::size_t length() const;

private:
  std::vector<Vec> prefix_;
  std::vector<Vec> period_;
  double tau_;
};

/// Noise-free one-tau map x -> xi_bar_{x u}(tau) by classical RK4 with `steps`
/// sub-steps per tau. For linear models the map is precomputed as
/// x -> M x + K u, which reproduces the same RK4 recursion in closed form.
class NoiseFreeStepper {
public:
  NoiseFreeStepper(const ScsModel& model, double tau, std::size_t steps);

  Vec step(const Vec& x, const Vec& u) const;
  /// Integrates a word of inputs, throwing NonFiniteState on overflow.
  Vec run(const Vec& x0, const std::vector<Vec>& word) const;

  double tau() const { return tau_; }
  std::size_t steps() const { return steps_; }
  bool closed_form() const { return closed_form_; }
  const Mat& state_map() const { return M_; }
  const Mat& input_map() const { return K_; }

private:
  const ScsModel* model_;
  double tau_;
  std::size_t steps_;
  bool closed_form_ = false;
  Mat M_;
  Mat K_;
};

/// RK4 integration of the noise-free ODE along `curve` over [0, horizon_steps * tau].
Vec integrate_noise_free(const ScsModel& model, const Vec& x0, const InputCurve& curve, std::size_t horizon_steps,
                         std::size_t ode_steps_per_tau);

struct SimConfig {
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::size_t samples = 1;
  std::size_t threads = 0;     // 0: resolve from environment
  std::size_t first_path = 0;  // index of the first path, for extending a sample set
};

/// Default Euler-Maruyama step tau / 32.
inline double default_dt(double tau) { return tau / 32.0; }

struct EndpointSamples {
  Mat values;  // samples x n
  std::string source;
  std::uint64_t seed = 0;
  double dt = 0.0;

  std::size_t count() const { return static_cast<std::size_t>(values.rows()); }
};

/// Number of dt-steps per tau; throws Precondition unless dt divides tau within 1e-12.
std::size_t substeps_per_tau(double tau, double dt);

/// Euler-Maruyama endpoints at `horizon` (a multiple of dt). Path i uses the
/// engine seeded with derive_seed(cfg.seed, cfg.first_path + i), so results do not depend on
/// thread count.
EndpointSamples simulate_sde(const ScsModel& model, const Vec& x0, const InputCurve& curve, double horizon,
                             const SimConfig& cfg);

/// (mean |xi - target|^q)^{1/q}.
double moment_distance(const EndpointSamples& samples, const Vec& target, double q);
/// (mean dist(xi, box)^q)^{1/q} with the projection distance.
double moment_distance(const EndpointSamples& samples, const Box& target, double q);

struct ClosedLoopResult {
  std::vector<double> time;
  std::vector<double> mean_distance;    // mean over runs of dist(xi(k tau), W)
  std::vector<double> std_error;        // standard error of that mean
  std::vector<double> moment_distance;  // (mean dist^q)^{1/q}
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;

  double max_mean() const;
  double time_average() const;
  std::size_t argmax() const;
  void write_csv(std::ostream& os) const;
};

/// Closed-loop Monte Carlo: `runs` Euler-Maruyama paths under `curve` from x0,
/// sampled at every multiple of tau up to horizon_steps, distance to W.
ClosedLoopResult closed_loop_run(const ScsModel& model, const InputCurve& curve, const Vec& x0, const Box& W,
                                 std::size_t runs, std::size_t horizon_steps, const SimConfig& cfg, double q = 2.0);

}  // namespace stochsynth
