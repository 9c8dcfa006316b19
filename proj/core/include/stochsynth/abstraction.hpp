#pragma once

#include "stochsynth/lyapunov.hpp"
#include "stochsynth/model.hpp"
#include "stochsynth/sde.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stochsynth {

enum class BisimMode {
  LyapunovNoiseFree,
  KLNoiseFree,
  LyapunovProbabilistic,
  KLProbabilistic,
  DeterministicLyapunov,
  DeterministicKL,
};

std::string_view to_string(BisimMode mode);
/// Accepts lyap-noise-free, kl-noise-free, lyap-prob, kl-prob, det-lyap, det-kl.
BisimMode parse_mode(std::string_view s);
bool uses_lyapunov(BisimMode mode);
bool is_probabilistic(BisimMode mode);
bool is_deterministic(BisimMode mode);

struct AbstractionParams {
  double tau = 0.0;
  double mu = 0.0;
  std::size_t N = 1;
  Vec x_s;
  double epsilon = 0.0;
  BisimMode mode = BisimMode::LyapunovNoiseFree;
};

/// Abstract states are words of N input indices stored as base-R integers,
/// R = |U_q|, with the oldest input as the most significant digit.
class WordCodec {
public:
  WordCodec(std::size_t alphabet, std::size_t N);

  std::size_t alphabet() const { return R_; }
  std::size_t length() const { return N_; }
  std::uint64_t state_count() const { return count_; }

  std::uint64_t encode(const std::vector<std::size_t>& word) const;
  std::vector<std::size_t> decode(std::uint64_t s) const;

  /// (u_1, ..., u_N) -> (u_2, ..., u_N, u).
  std::uint64_t successor(std::uint64_t s, std::size_t u) const { return (s % high_) * R_ + u; }
  /// Most recent input of the word.
  std::size_t last(std::uint64_t s) const { return static_cast<std::size_t>(s % R_); }
  /// The R states whose u-successor is s, for u = last(s).
  std::uint64_t predecessor(std::uint64_t s, std::size_t oldest) const { return oldest * high_ + s / R_; }
  /// True when the last k letters of s all equal u (k <= N).
  bool ends_with_run(std::uint64_t s, std::size_t u, std::size_t k) const;

private:
  std::size_t R_;
  std::size_t N_;
  std::uint64_t count_;
  std::uint64_t high_;  // R^{N-1}
  std::vector<std::uint64_t> pow_;
};

/// xi_bar_{x_s w}(N tau): RK4 from x_s under the word's inputs, oldest first.
Vec noise_free_output(const ScsModel& model, const AbstractionParams& params, const QuantizedInputs& inputs,
                      const std::vector<std::size_t>& word, std::size_t ode_steps_per_tau);

/// Calls fn(state, output) for every state, sharing integration of common
/// prefixes (depth-first over the word trie). Parallel over leading letters;
/// fn must be thread-safe.
void for_each_noise_free_output(const ScsModel& model, const AbstractionParams& params, const QuantizedInputs& inputs,
                                std::size_t ode_steps_per_tau, const std::function<void(std::uint64_t, const Vec&)>& fn,
                                std::size_t threads = 0);

inline constexpr std::size_t kDefaultOdeSteps = 16;

/// max_u V(xi_bar_{x_s u}(tau), x_s) (Lyapunov) or max_u |xi_bar_{x_s u}(tau) - x_s|^q (KL).
double eta_base(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x_s, double tau,
                const QuantizedInputs& inputs, bool lyapunov, std::size_t ode_steps_per_tau = kDefaultOdeSteps);

/// eta bound at horizon N from a precomputed eta_base value.
double eta_from_base(const LyapunovCertificate& cert, double base, double tau, std::size_t N, bool lyapunov);

double eta_bound(const ScsModel& model, const LyapunovCertificate& cert, const AbstractionParams& params,
                 const QuantizedInputs& inputs, std::size_t ode_steps_per_tau = kDefaultOdeSteps);

struct McSettings {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  double dt = 0.0;  // 0: default_dt(tau)
  std::size_t threads = 0;
};

struct EtaHat {
  double bound = 0.0;
  double std_error = 0.0;
  double base = 0.0;  // estimated max_u E[V] or E[|.|^q]
  double base_std_error = 0.0;
};

/// Monte-Carlo version of eta_base: the expectation over Euler-Maruyama endpoints.
EtaHat eta_hat_base(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x_s, double tau,
                    const QuantizedInputs& inputs, bool lyapunov, const McSettings& mc);

EtaHat eta_hat_bound(const ScsModel& model, const LyapunovCertificate& cert, const AbstractionParams& params,
                     const QuantizedInputs& inputs, const McSettings& mc);

struct SearchSettings {
  std::size_t N_max = 100;
  std::vector<double> mu_grid;  // ignored for finite U
  std::size_t quad_steps = kDefaultQuadSteps;
  std::size_t ode_steps = kDefaultOdeSteps;
  McSettings mc;
  /// Evaluate only this N instead of searching.
  std::optional<std::size_t> pinned_N;
};

enum class FeasibilityStatus { Feasible, InfeasibleAtTau, NoFeasibleN, InfeasibleAtPinnedN };
std::string_view to_string(FeasibilityStatus s);

struct ConditionTerms {
  std::size_t N = 0;
  double mu = 0.0;
  double eta = 0.0;        // eta or eta_hat
  double eta_std_error = 0.0;
  double h = 0.0;          // h_{x_s}((N+1) tau), 0 when not used
  double gamma_hat = 0.0;  // Lyapunov modes
  double decay_term = 0.0;  // e^{-kappa tau} alpha_lo(eps^q)  |  beta(eps^q, tau)
  double mu_term = 0.0;     // rho(mu)/(e kappa)               |  gamma(mu)
  double tau_term = 0.0;    // decay_term + mu_term, or its 1/q power in KL modes
  double mismatch_term = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

struct FeasibilityReport {
  FeasibilityStatus status = FeasibilityStatus::NoFeasibleN;
  BisimMode mode = BisimMode::LyapunovNoiseFree;
  double tau = 0.0;
  double epsilon = 0.0;
  double q = 2.0;
  Vec x_s;
  std::size_t N_max = 0;
  std::optional<std::size_t> pinned_N;
  ConditionTerms terms;  // selected (or last evaluated) point
  std::vector<ConditionTerms> trace;
  std::string message;

  bool feasible() const { return status == FeasibilityStatus::Feasible; }
  AbstractionParams params() const;
};

/// Evaluates the selected mode's condition at one (N, mu).
ConditionTerms evaluate_condition(const LyapunovCertificate& cert, double tau, double epsilon, BisimMode mode,
                                 std::size_t N, double mu, double eta, double eta_se, double h);

/// Searches N ascending (and mu descending per N) for the first point where the
/// mode's condition holds. Never throws on infeasibility; see select_parameters.
FeasibilityReport search_parameters(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                                    double epsilon, BisimMode mode, const Vec& x_s, const SearchSettings& search);

/// As search_parameters, throwing InfeasibleAtTau or NoFeasibleN on failure.
AbstractionParams select_parameters(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                                    double epsilon, BisimMode mode, const Vec& x_s, const SearchSettings& search);

/// Radius of the concrete initial set around each abstract output.
double initial_set_radius(const LyapunovCertificate& cert, double epsilon, BisimMode mode);

/// x -> max_u V(xi_bar_{x u}(tau), x).
double source_objective(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                        const QuantizedInputs& inputs, const Vec& x, std::size_t ode_steps_per_tau = kDefaultOdeSteps);

/// Coordinate pattern search on source_objective. Each iteration is one sweep
/// over all coordinates in both directions; the step halves after a sweep
/// without improvement.
Vec optimize_source_state(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                          const QuantizedInputs& inputs, const Vec& x0, std::size_t iters,
                          std::size_t ode_steps_per_tau = kDefaultOdeSteps);

struct GridComparison {
  double criterion_value = 0.0;  // |U_q| e^{-kappa tau n / q}
  double word_states = 0.0;      // |U_q|^N
  double grid_nu = 0.0;
  double grid_states = 0.0;      // prod(edge / nu)
  bool prefer_words = false;
};

GridComparison compare_with_grid(const ScsModel& model, const LyapunovCertificate& cert,
                                 const AbstractionParams& params, const QuantizedInputs& inputs,
                                 const Box& working_box, double nu);

enum class OutputKind { NoiseFree, Probabilistic };

/// The input-word abstraction. States are never materialized; probabilistic
/// endpoint samples are simulated on demand and cached per state.
class SymbolicModel {
public:
  SymbolicModel(const ScsModel& model, AbstractionParams params, QuantizedInputs inputs, OutputKind kind,
                double eta, std::size_t ode_steps = kDefaultOdeSteps, SimConfig sim = {});

  const ScsModel& model() const { return *model_; }
  const AbstractionParams& params() const { return params_; }
  const QuantizedInputs& inputs() const { return inputs_; }
  const WordCodec& codec() const { return codec_; }
  OutputKind output_kind() const { return kind_; }
  double eta() const { return eta_; }
  std::size_t ode_steps() const { return ode_steps_; }
  const SimConfig& sim() const { return sim_; }

  Vec noise_free_output(std::uint64_t s) const;

  /// First M endpoint samples of state s. Path i of state s always uses seed
  /// derive_seed(derive_seed(sim.seed, s), i), so a cached set is extended
  /// rather than redrawn when more samples are requested.
  std::shared_ptr<const EndpointSamples> endpoint_samples(std::uint64_t s, std::size_t M) const;
  std::size_t cached_states() const;

private:
  const ScsModel* model_;
  AbstractionParams params_;
  QuantizedInputs inputs_;
  WordCodec codec_;
  OutputKind kind_;
  double eta_;
  std::size_t ode_steps_;
  SimConfig sim_;
  NoiseFreeStepper stepper_;

  mutable std::shared_mutex cache_mutex_;
  mutable std::unordered_map<std::uint64_t, std::shared_ptr<const EndpointSamples>> cache_;
};

}  // namespace stochsynth
