#include "stochsynth/abstraction.hpp"

#include "stochsynth/errors.hpp"
#include "stochsynth/parallel.hpp"
#include "stochsynth/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

namespace stochsynth {

std::string_view to_string(BisimMode mode) {
  switch (mode) {
    case BisimMode::LyapunovNoiseFree: return "lyap-noise-free";
    case BisimMode::KLNoiseFree: return "kl-noise-free";
    case BisimMode::LyapunovProbabilistic: return "lyap-prob";
    case BisimMode::KLProbabilistic: return "kl-prob";
    case BisimMode::DeterministicLyapunov: return "det-lyap";
    case BisimMode::DeterministicKL: return "det-kl";
  }
  return "unknown";
}

BisimMode parse_mode(std::string_view s) {
  for (BisimMode m : {BisimMode::LyapunovNoiseFree, BisimMode::KLNoiseFree, BisimMode::LyapunovProbabilistic,
                      BisimMode::KLProbabilistic, BisimMode::DeterministicLyapunov, BisimMode::DeterministicKL})
    if (to_string(m) == s) return m;
  throw Error(ErrorKind::Parse, "unknown mode '" + std::string(s) + "'");
}

bool uses_lyapunov(BisimMode mode) {
  return mode == BisimMode::LyapunovNoiseFree || mode == BisimMode::LyapunovProbabilistic ||
         mode == BisimMode::DeterministicLyapunov;
}

bool is_probabilistic(BisimMode mode) {
  return mode == BisimMode::LyapunovProbabilistic || mode == BisimMode::KLProbabilistic;
}

bool is_deterministic(BisimMode mode) {
  return mode == BisimMode::DeterministicLyapunov || mode == BisimMode::DeterministicKL;
}

std::string_view to_string(FeasibilityStatus s) {
  switch (s) {
    case FeasibilityStatus::Feasible: return "Feasible";
    case FeasibilityStatus::InfeasibleAtTau: return "InfeasibleAtTau";
    case FeasibilityStatus::NoFeasibleN: return "NoFeasibleN";
    case FeasibilityStatus::InfeasibleAtPinnedN: return "InfeasibleAtPinnedN";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

WordCodec::WordCodec(std::size_t alphabet, std::size_t N) : R_(alphabet), N_(N) {
  require(alphabet >= 1, "alphabet must be non-empty");
  require(N >= 1, "word length must be at least 1");
  pow_.assign(N + 1, 1);
  for (std::size_t i = 1; i <= N; ++i) {
    if (pow_[i - 1] > std::numeric_limits<std::uint64_t>::max() / R_)
      throw Error(ErrorKind::Precondition, "state space |U_q|^N does not fit in 64 bits");
    pow_[i] = pow_[i - 1] * R_;
  }
  count_ = pow_[N];
  high_ = pow_[N - 1];
}

std::uint64_t WordCodec::encode(const std::vector<std::size_t>& word) const {
  require(word.size() == N_, "word length mismatch");
  std::uint64_t s = 0;
  for (std::size_t u : word) {
    require(u < R_, "input index out of range");
    s = s * R_ + u;
  }
  return s;
}

std::vector<std::size_t> WordCodec::decode(std::uint64_t s) const {
  require(s < count_, "state index out of range");
  std::vector<std::size_t> w(N_);
  for (std::size_t i = N_; i-- > 0;) {
    w[i] = static_cast<std::size_t>(s % R_);
    s /= R_;
  }
  return w;
}

bool WordCodec::ends_with_run(std::uint64_t s, std::size_t u, std::size_t k) const {
  require(k <= N_, "run length exceeds word length");
  for (std::size_t i = 0; i < k; ++i, s /= R_)
    if (s % R_ != u) return false;
  return true;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Vec> word_inputs(const QuantizedInputs& inputs, const std::vector<std::size_t>& word) {
  std::vector<Vec> out;
  out.reserve(word.size());
  for (std::size_t i : word) {
    require(i < inputs.size(), "input index out of range");
    out.push_back(inputs.points[i]);
  }
  return out;
}

}  // namespace

Vec noise_free_output(const ScsModel& model, const AbstractionParams& params, const QuantizedInputs& inputs,
                      const std::vector<std::size_t>& word, std::size_t ode_steps_per_tau) {
  require(ode_steps_per_tau >= 4, "need at least 4 RK4 steps per tau");
  require(word.size() == params.N, "word length must equal N");
  NoiseFreeStepper stepper(model, params.tau, ode_steps_per_tau);
  return stepper.run(params.x_s, word_inputs(inputs, word));
}

void for_each_noise_free_output(const ScsModel& model, const AbstractionParams& params, const QuantizedInputs& inputs,
                                std::size_t ode_steps_per_tau, const std::function<void(std::uint64_t, const Vec&)>& fn,
                                std::size_t threads) {
  require(ode_steps_per_tau >= 4, "need at least 4 RK4 steps per tau");
  const WordCodec codec(inputs.size(), params.N);
  const NoiseFreeStepper stepper(model, params.tau, ode_steps_per_tau);
  const std::size_t R = inputs.size();
  const std::size_t N = params.N;
  const std::size_t workers = resolve_threads(threads);

  // Split the trie at depth d so there are enough independent subtrees.
  std::size_t d = 0;
  std::uint64_t tasks = 1;
  while (d < N && tasks < 8 * workers) {
    tasks *= R;
    ++d;
  }

  parallel_for(static_cast<std::size_t>(tasks), workers, [&](std::size_t begin, std::size_t end) {
    std::vector<Vec> stack(N + 1);
    std::vector<std::size_t> digit(N + 1, 0);
    for (std::size_t t = begin; t < end; ++t) {
      // Integrate the task prefix (d letters, most significant first).
      stack[0] = params.x_s;
      std::uint64_t rem = t;
      std::vector<std::size_t> pre(d);
      for (std::size_t i = d; i-- > 0;) {
        pre[i] = static_cast<std::size_t>(rem % R);
        rem /= R;
      }
      for (std::size_t i = 0; i < d; ++i) stack[i + 1] = stepper.step(stack[i], inputs.points[pre[i]]);
      const std::uint64_t base = static_cast<std::uint64_t>(t);
      if (d == N) {
        if (!stack[N].allFinite()) throw Error(ErrorKind::NonFiniteState, "noise-free trajectory overflowed");
        fn(base, stack[N]);
        continue;
      }
      // Iterative DFS over the remaining N - d letters.
      std::size_t depth = d;
      std::uint64_t prefix = base;
      digit[depth] = 0;
      while (true) {
        if (digit[depth] == R) {
          if (depth == d) break;
          --depth;
          prefix /= R;
          ++digit[depth];
          continue;
        }
        stack[depth + 1] = stepper.step(stack[depth], inputs.points[digit[depth]]);
        if (depth + 1 == N) {
          if (!stack[N].allFinite()) throw Error(ErrorKind::NonFiniteState, "noise-free trajectory overflowed");
          fn(prefix * R + digit[depth], stack[N]);
          ++digit[depth];
        } else {
          prefix = prefix * R + digit[depth];
          ++depth;
          digit[depth] = 0;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------

double eta_base(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x_s, double tau,
                const QuantizedInputs& inputs, bool lyapunov, std::size_t ode_steps_per_tau) {
  const NoiseFreeStepper stepper(model, tau, ode_steps_per_tau);
  double best = 0.0;
  for (const Vec& u : inputs.points) {
    const Vec y = stepper.step(x_s, u);
    if (!y.allFinite()) throw Error(ErrorKind::NonFiniteState, "noise-free trajectory overflowed");
    const double v = lyapunov ? cert.V(y, x_s) : std::pow(inf_norm(Vec(y - x_s)), cert.q);
    best = std::max(best, v);
  }
  return best;
}

double eta_from_base(const LyapunovCertificate& cert, double base, double tau, std::size_t N, bool lyapunov) {
  const double decay = std::exp(-cert.kappa * tau * static_cast<double>(N));
  const double inner = lyapunov ? cert.alpha_lo_inv(decay * base) : KLBundle::from(cert).beta(base, tau * static_cast<double>(N));
  return std::pow(inner, 1.0 / cert.q);
}

double eta_bound(const ScsModel& model, const LyapunovCertificate& cert, const AbstractionParams& params,
                 const QuantizedInputs& inputs, std::size_t ode_steps_per_tau) {
  const bool lyap = uses_lyapunov(params.mode);
  const double base = eta_base(model, cert, params.x_s, params.tau, inputs, lyap, ode_steps_per_tau);
  return eta_from_base(cert, base, params.tau, params.N, lyap);
}

EtaHat eta_hat_base(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x_s, double tau,
                    const QuantizedInputs& inputs, bool lyapunov, const McSettings& mc) {
  require(mc.samples >= 100, "eta_hat needs at least 100 samples");
  EtaHat out;
  out.base = -1.0;
  std::vector<double> v(mc.samples);
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    SimConfig cfg;
    cfg.dt = mc.dt > 0.0 ? mc.dt : default_dt(tau);
    cfg.seed = derive_seed(mc.seed, j);
    cfg.samples = mc.samples;
    cfg.threads = mc.threads;
    const InputCurve curve({inputs.points[j]}, {}, tau);
    const EndpointSamples es = simulate_sde(model, x_s, curve, tau, cfg);
    for (std::size_t i = 0; i < mc.samples; ++i) {
      const Vec y = es.values.row(static_cast<Eigen::Index>(i)).transpose();
      v[i] = lyapunov ? cert.V(y, x_s) : std::pow(inf_norm(Vec(y - x_s)), cert.q);
    }
    const double M = static_cast<double>(mc.samples);
    const double mean = pairwise_sum(v.data(), v.size()) / M;
    for (double& e : v) e = (e - mean) * (e - mean);
    const double se = std::sqrt(pairwise_sum(v.data(), v.size()) / (M - 1.0) / M);
    if (mean > out.base) {
      out.base = mean;
      out.base_std_error = se;
    }
  }
  return out;
}

EtaHat eta_hat_bound(const ScsModel& model, const LyapunovCertificate& cert, const AbstractionParams& params,
                     const QuantizedInputs& inputs, const McSettings& mc) {
  const bool lyap = uses_lyapunov(params.mode);
  EtaHat e = eta_hat_base(model, cert, params.x_s, params.tau, inputs, lyap, mc);
  e.bound = eta_from_base(cert, e.base, params.tau, params.N, lyap);
  e.std_error = e.base > 0.0 ? e.bound / (cert.q * e.base) * e.base_std_error : 0.0;
  return e;
}

// ---------------------------------------------------------------------------

AbstractionParams FeasibilityReport::params() const {
  return {tau, terms.mu, terms.N, x_s, epsilon, mode};
}

ConditionTerms evaluate_condition(const LyapunovCertificate& cert, double tau, double epsilon, BisimMode mode,
                                 std::size_t N, double mu, double eta, double eta_se, double h) {
  ConditionTerms t;
  t.N = N;
  t.mu = mu;
  t.eta = eta;
  t.eta_std_error = eta_se;
  const bool noise_free = mode == BisimMode::LyapunovNoiseFree || mode == BisimMode::KLNoiseFree;
  t.h = noise_free ? h : 0.0;
  const double q = cert.q;
  const double eq = std::pow(epsilon, q);
  const double hq = std::pow(t.h, 1.0 / q);
  if (uses_lyapunov(mode)) {
    t.gamma_hat = effective_gamma_hat(cert);
    t.decay_term = std::exp(-cert.kappa * tau) * cert.alpha_lo * eq;
    t.mu_term = cert.rho(mu) / (std::exp(1.0) * cert.kappa);
    t.tau_term = t.decay_term + t.mu_term;
    t.mismatch_term = t.gamma_hat * (hq + eta);
    t.rhs = cert.alpha_lo * eq;
  } else {
    const KLBundle kl = KLBundle::from(cert);
    t.decay_term = kl.beta(eq, tau);
    t.mu_term = kl.gamma(mu);
    t.tau_term = std::pow(t.decay_term + t.mu_term, 1.0 / q);
    t.mismatch_term = hq + eta;
    t.rhs = epsilon;
  }
  t.lhs = t.tau_term + t.mismatch_term;
  t.holds = t.lhs <= t.rhs;
  return t;
}

FeasibilityReport search_parameters(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                                    double epsilon, BisimMode mode, const Vec& x_s, const SearchSettings& search) {
  require_supported_form(cert);
  require(tau > 0.0, "tau must be positive");
  require(epsilon > 0.0, "epsilon must be positive");
  require(search.N_max >= 1, "N_max must be at least 1");
  require(static_cast<std::size_t>(x_s.size()) == model.n(), "source state dimension must equal n");

  FeasibilityReport rep;
  rep.mode = mode;
  rep.tau = tau;
  rep.epsilon = epsilon;
  rep.q = cert.q;
  rep.x_s = x_s;
  rep.N_max = search.N_max;
  rep.pinned_N = search.pinned_N;

  // mu candidates, largest first.
  std::vector<double> mus;
  if (model.inputs().is_finite()) {
    mus = {0.0};
  } else {
    const double sp = span(model.inputs());
    for (double m : search.mu_grid)
      if (m > 0.0 && m <= sp) mus.push_back(m);
    require(!mus.empty(), "mu grid has no value in (0, span(U)]");
    std::sort(mus.rbegin(), mus.rend());
    mus.erase(std::unique(mus.begin(), mus.end()), mus.end());
  }

  const bool lyap = uses_lyapunov(mode);
  const bool prob = is_probabilistic(mode);
  struct PerMu {
    double mu;
    double base;
    double base_se;
  };
  std::vector<PerMu> per_mu;
  for (double mu : mus) {
    const QuantizedInputs qi = quantize_input_set(model.inputs(), mu);
    if (prob) {
      const EtaHat e = eta_hat_base(model, cert, x_s, tau, qi, lyap, search.mc);
      per_mu.push_back({mu, e.base, e.base_std_error});
    } else {
      per_mu.push_back({mu, eta_base(model, cert, x_s, tau, qi, lyap, search.ode_steps), 0.0});
    }
  }

  auto eta_at = [&](const PerMu& pm, std::size_t N) {
    const double eta = eta_from_base(cert, pm.base, tau, N, lyap);
    const double se = pm.base > 0.0 ? eta / (cert.q * pm.base) * pm.base_se : 0.0;
    return std::pair{eta, se};
  };

  const bool noise_free = mode == BisimMode::LyapunovNoiseFree || mode == BisimMode::KLNoiseFree;
  std::optional<HxScanner> hx;
  if (noise_free) hx.emplace(model, cert, x_s, tau, search.quad_steps);

  auto evaluate = [&](std::size_t N, const PerMu& pm) {
    const auto [eta, se] = eta_at(pm, N);
    const double h = hx ? hx->at(N + 1) : 0.0;
    return evaluate_condition(cert, tau, epsilon, mode, N, pm.mu, eta, se, h);
  };

  // The tau-only part is smallest at the finest mu; if it alone exceeds the
  // budget, no N can help.
  const std::size_t first_N = search.pinned_N.value_or(1);
  const ConditionTerms probe = evaluate(first_N, per_mu.back());
  if (probe.tau_term >= probe.rhs) {
    rep.status = FeasibilityStatus::InfeasibleAtTau;
    rep.terms = probe;
    rep.trace.push_back(probe);
    rep.message = "tau-only term " + std::to_string(probe.tau_term) + " already reaches the budget " +
                  std::to_string(probe.rhs);
    return rep;
  }

  const std::size_t last_N = search.pinned_N.value_or(search.N_max);
  for (std::size_t N = first_N; N <= last_N; ++N) {
    for (const PerMu& pm : per_mu) {
      ConditionTerms t = evaluate(N, pm);
      rep.trace.push_back(t);
      rep.terms = t;
      if (t.holds) {
        rep.status = FeasibilityStatus::Feasible;
        rep.message = "condition holds at N=" + std::to_string(N);
        return rep;
      }
    }
  }
  if (search.pinned_N) {
    rep.status = FeasibilityStatus::InfeasibleAtPinnedN;
    rep.message = "condition does not hold at the pinned N=" + std::to_string(*search.pinned_N);
  } else {
    rep.status = FeasibilityStatus::NoFeasibleN;
    rep.message = "no N <= " + std::to_string(search.N_max) + " satisfies the condition";
  }
  return rep;
}

AbstractionParams select_parameters(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                                    double epsilon, BisimMode mode, const Vec& x_s, const SearchSettings& search) {
  const FeasibilityReport rep = search_parameters(model, cert, tau, epsilon, mode, x_s, search);
  switch (rep.status) {
    case FeasibilityStatus::Feasible: return rep.params();
    case FeasibilityStatus::InfeasibleAtTau: throw Error(ErrorKind::InfeasibleAtTau, rep.message);
    default: throw Error(ErrorKind::NoFeasibleN, rep.message);
  }
}

double initial_set_radius(const LyapunovCertificate& cert, double epsilon, BisimMode mode) {
  require(epsilon >= 0.0, "epsilon must be nonnegative");
  if (!uses_lyapunov(mode)) return epsilon;
  const double v = cert.alpha_hi_inv(cert.alpha_lo * std::pow(epsilon, cert.q));
  return std::pow(v, 1.0 / cert.q);
}

double source_objective(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                        const QuantizedInputs& inputs, const Vec& x, std::size_t ode_steps_per_tau) {
  return eta_base(model, cert, x, tau, inputs, true, ode_steps_per_tau);
}

Vec optimize_source_state(const ScsModel& model, const LyapunovCertificate& cert, double tau,
                          const QuantizedInputs& inputs, const Vec& x0, std::size_t iters,
                          std::size_t ode_steps_per_tau) {
  require(iters >= 1, "optimize_source_state needs at least one iteration");
  Vec x = x0;
  double best = source_objective(model, cert, tau, inputs, x, ode_steps_per_tau);
  double step = 0.1 * std::max(1.0, inf_norm(x0));
  for (std::size_t it = 0; it < iters && best > 0.0; ++it) {
    bool improved = false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      for (double sign : {1.0, -1.0}) {
        Vec cand = x;
        cand[i] += sign * step;
        const double f = source_objective(model, cert, tau, inputs, cand, ode_steps_per_tau);
        if (f < best) {
          best = f;
          x = std::move(cand);
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return x;
}

GridComparison compare_with_grid(const ScsModel& model, const LyapunovCertificate& cert,
                                 const AbstractionParams& params, const QuantizedInputs& inputs,
                                 const Box& working_box, double nu) {
  require_supported_form(cert);
  require(nu > 0.0, "grid parameter nu must be positive");
  require(working_box.dim() == model.n(), "working box dimension must equal n");
  GridComparison g;
  const double n = static_cast<double>(model.n());
  const double R = static_cast<double>(inputs.size());
  g.criterion_value = R * std::exp(-cert.kappa * params.tau * n / cert.q);
  g.word_states = std::pow(R, static_cast<double>(params.N));
  g.grid_nu = nu;
  g.grid_states = 1.0;
  for (Eigen::Index i = 0; i < working_box.lo.size(); ++i) g.grid_states *= (working_box.hi[i] - working_box.lo[i]) / nu;
  g.prefer_words = g.criterion_value <= 1.0;
  return g;
}

// ---------------------------------------------------------------------------

SymbolicModel::SymbolicModel(const ScsModel& model, AbstractionParams params, QuantizedInputs inputs,
                             OutputKind kind, double eta, std::size_t ode_steps, SimConfig sim)
    : model_(&model), params_(std::move(params)), inputs_(std::move(inputs)), codec_(inputs_.size(), params_.N),
      kind_(kind), eta_(eta), ode_steps_(ode_steps), sim_(sim), stepper_(model, params_.tau, ode_steps) {
  require(ode_steps >= 4, "need at least 4 RK4 steps per tau");
  require(static_cast<std::size_t>(params_.x_s.size()) == model.n(), "source state dimension must equal n");
  if (sim_.dt <= 0.0) sim_.dt = default_dt(params_.tau);
  substeps_per_tau(params_.tau, sim_.dt);
}

Vec SymbolicModel::noise_free_output(std::uint64_t s) const {
  return stepper_.run(params_.x_s, word_inputs(inputs_, codec_.decode(s)));
}

std::shared_ptr<const EndpointSamples> SymbolicModel::endpoint_samples(std::uint64_t s, std::size_t M) const {
  require(M >= 1, "need at least one endpoint sample");
  std::shared_ptr<const EndpointSamples> have;
  {
    std::shared_lock lock(cache_mutex_);
    if (auto it = cache_.find(s); it != cache_.end()) have = it->second;
  }
  auto truncated = [M](const std::shared_ptr<const EndpointSamples>& es) {
    if (es->count() == M) return es;
    auto out = std::make_shared<EndpointSamples>(*es);
    out->values.conservativeResize(static_cast<Eigen::Index>(M), Eigen::NoChange);
    return std::shared_ptr<const EndpointSamples>(out);
  };
  if (have && have->count() >= M) return truncated(have);

  const std::size_t existing = have ? have->count() : 0;
  SimConfig cfg = sim_;
  cfg.seed = derive_seed(sim_.seed, s);
  cfg.samples = M - existing;
  cfg.first_path = existing;
  const InputCurve curve(word_inputs(inputs_, codec_.decode(s)), {}, params_.tau);
  EndpointSamples fresh = simulate_sde(*model_, params_.x_s, curve, params_.tau * static_cast<double>(params_.N), cfg);

  auto merged = std::make_shared<EndpointSamples>();
  merged->values.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(model_->n()));
  if (existing) merged->values.topRows(static_cast<Eigen::Index>(existing)) = have->values;
  merged->values.bottomRows(static_cast<Eigen::Index>(M - existing)) = fresh.values;
  merged->source = "state " + std::to_string(s);
  merged->seed = cfg.seed;
  merged->dt = cfg.dt;

  std::unique_lock lock(cache_mutex_);
  auto& slot = cache_[s];
  if (!slot || slot->count() < M) slot = merged;
  return truncated(slot);
}

std::size_t SymbolicModel::cached_states() const {
  std::shared_lock lock(cache_mutex_);
  return cache_.size();
}

}  // namespace stochsynth
