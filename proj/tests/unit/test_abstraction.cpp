#include <doctest.h>

#include "stochsynth/abstraction.hpp"
#include "stochsynth/errors.hpp"
#include "stochsynth/rng.hpp"
#include "toy.hpp"

#include <cmath>
#include <numbers>

using namespace stochsynth;

namespace {

constexpr double a = -0.5, b = 1.0, g = 0.2;

std::vector<std::size_t> digits(std::uint64_t s, std::size_t R, std::size_t N) {
  std::vector<std::size_t> w(N);
  for (std::size_t i = N; i-- > 0;) {
    w[i] = static_cast<std::size_t>(s % R);
    s /= R;
  }
  return w;
}

AbstractionParams params(std::size_t N, double tau = 0.1, double x_s = 0.0, double eps = 5.0,
                         BisimMode mode = BisimMode::LyapunovNoiseFree) {
  AbstractionParams p;
  p.tau = tau;
  p.N = N;
  p.x_s = toy::v1(x_s);
  p.epsilon = eps;
  p.mode = mode;
  return p;
}

double endpoint(const std::vector<std::size_t>& w, const std::vector<double>& us, double x0, double tau) {
  double x = x0;
  for (std::size_t i : w) x = toy::flow(a, b, x, us[i], tau);
  return x;
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (BisimMode m : {BisimMode::LyapunovNoiseFree, BisimMode::KLNoiseFree, BisimMode::LyapunovProbabilistic,
                      BisimMode::KLProbabilistic, BisimMode::DeterministicLyapunov, BisimMode::DeterministicKL})
    CHECK(parse_mode(to_string(m)) == m);
  CHECK(is_probabilistic(parse_mode("lyap-prob")));
  CHECK(uses_lyapunov(parse_mode("det-lyap")));
  CHECK_FALSE(uses_lyapunov(parse_mode("kl-noise-free")));
  CHECK_THROWS_AS(parse_mode("grid"), Error);
}

TEST_CASE("word codec arithmetic agrees with explicit word shifting") {
  for (std::size_t R : {2u, 3u, 5u}) {
    for (std::size_t N : {1u, 2u, 4u}) {
      const WordCodec c(R, N);
      CHECK(c.state_count() == static_cast<std::uint64_t>(std::pow(R, N)));
      for (std::uint64_t s = 0; s < c.state_count(); ++s) {
        const auto w = digits(s, R, N);
        CHECK(c.decode(s) == w);
        CHECK(c.encode(w) == s);
        CHECK(c.last(s) == w.back());
        for (std::size_t u = 0; u < R; ++u) {
          auto shifted = w;
          shifted.erase(shifted.begin());
          shifted.push_back(u);
          CHECK(c.decode(c.successor(s, u)) == shifted);
        }
        for (std::size_t j = 0; j < R; ++j) {
          const std::uint64_t p = c.predecessor(s, j);
          CHECK(c.decode(p).front() == j);
          CHECK(c.successor(p, c.last(s)) == s);
        }
        for (std::size_t k = 1; k <= N; ++k)
          for (std::size_t u = 0; u < R; ++u) {
            bool run = true;
            for (std::size_t i = N - k; i < N; ++i) run = run && w[i] == u;
            CHECK(c.ends_with_run(s, u, k) == run);
          }
      }
    }
  }
}

TEST_CASE("traffic-sized codec and overflow") {
  const WordCodec c(3, 14);
  CHECK(c.state_count() == 4782969u);
  CHECK(c.successor(c.state_count() - 1, 2) == c.state_count() - 1);
  CHECK_NOTHROW(WordCodec(3, 40));
  CHECK_THROWS_AS(WordCodec(3, 41), Error);
}

TEST_CASE("noise-free outputs follow the exact flow from x_s") {
  const ScsModel m = toy::scalar(a, b, g);
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  const AbstractionParams p = params(4, 0.2, 0.3);
  const WordCodec c(2, 4);
  std::vector<double> seen(c.state_count(), NAN);
  for_each_noise_free_output(m, p, qi, 16, [&](std::uint64_t s, const Vec& y) { seen[s] = y[0]; }, 2);
  for (std::uint64_t s = 0; s < c.state_count(); ++s) {
    const auto w = c.decode(s);
    const double exact = endpoint(w, {-1.0, 1.0}, 0.3, 0.2);
    CHECK(noise_free_output(m, p, qi, w, 16)[0] == doctest::Approx(exact).epsilon(1e-10));
    CHECK(seen[s] == doctest::Approx(exact).epsilon(1e-10));
  }
}

TEST_CASE("eta bounds") {
  const ScsModel m = toy::scalar(a, b, g);
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  c.alpha_lo = 0.8;
  c.alpha_hi = 1.25;
  const double xs = 0.3, tau = 0.1;
  double vmax = 0.0, dmax = 0.0;
  for (double u : {-1.0, 1.0}) {
    const double d = toy::flow(a, b, xs, u, tau) - xs;
    vmax = std::max(vmax, d * d);
    dmax = std::max(dmax, d * d);
  }
  CHECK(eta_base(m, c, toy::v1(xs), tau, qi, true) == doctest::Approx(vmax).epsilon(1e-9));
  for (std::size_t N : {1u, 3u, 10u}) {
    const double lyap = std::sqrt(std::exp(-0.5 * N * tau) * vmax / 0.8);
    const double kl = std::sqrt(1.25 / 0.8 * dmax * std::exp(-0.5 * N * tau));
    CHECK(eta_bound(m, c, params(N, tau, xs), qi) == doctest::Approx(lyap).epsilon(1e-9));
    CHECK(eta_bound(m, c, params(N, tau, xs, 5.0, BisimMode::KLNoiseFree), qi) == doctest::Approx(kl).epsilon(1e-9));
  }
}

TEST_CASE("eta_hat reduces to eta without noise") {
  const ScsModel m = toy::scalar(a, b, 0.0);
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  const LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  McSettings mc;
  mc.samples = 200;
  mc.seed = 5;
  mc.dt = 0.1 / 256;
  const EtaHat e = eta_hat_bound(m, c, params(3, 0.1, 0.3, 5.0, BisimMode::LyapunovProbabilistic), qi, mc);
  CHECK(e.bound == doctest::Approx(eta_bound(m, c, params(3, 0.1, 0.3), qi)).epsilon(2e-3));
  CHECK(e.std_error == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("condition terms follow the Lyapunov and KL inequalities") {
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  c.alpha_lo = 0.8;
  c.alpha_hi = 1.25;
  const double gh = effective_gamma_hat(c);
  const double tau = 0.1, eps = 2.0, mu = 0.05, eta = 0.03, h = 0.0004;
  const ConditionTerms L = evaluate_condition(c, tau, eps, BisimMode::LyapunovNoiseFree, 4, mu, eta, 0.0, h);
  const double lhs = std::exp(-0.5 * tau) * 0.8 * eps * eps + 2.2 * mu * mu / (std::numbers::e * 0.5) +
                     gh * (std::sqrt(h) + eta);
  CHECK(L.lhs == doctest::Approx(lhs));
  CHECK(L.rhs == doctest::Approx(0.8 * eps * eps));
  CHECK(L.holds == (lhs <= 0.8 * eps * eps));

  const ConditionTerms K = evaluate_condition(c, tau, eps, BisimMode::KLNoiseFree, 4, mu, eta, 0.0, h);
  const double beta = 1.25 / 0.8 * eps * eps * std::exp(-0.5 * tau);
  const double gamma = 2.2 * mu * mu / (std::numbers::e * 0.5) / 0.8;
  CHECK(K.tau_term == doctest::Approx(std::sqrt(beta + gamma)));
  CHECK(K.lhs == doctest::Approx(std::sqrt(beta + gamma) + std::sqrt(h) + eta));
  CHECK(K.rhs == eps);
}

TEST_CASE("zero diffusion collapses the stochastic condition onto the deterministic one") {
  const ScsModel m = toy::scalar(a, b, 0.0);
  const LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  SearchSettings s;
  s.N_max = 8;
  const auto st = search_parameters(m, c, 0.1, 5.0, BisimMode::LyapunovNoiseFree, toy::v1(0.0), s);
  const auto det = search_parameters(m, c, 0.1, 5.0, BisimMode::DeterministicLyapunov, toy::v1(0.0), s);
  REQUIRE(st.feasible());
  CHECK(st.terms.N == det.terms.N);
  CHECK(st.terms.lhs == det.terms.lhs);
  CHECK(st.terms.h == 0.0);
}

TEST_CASE("search returns the first N at which the condition holds") {
  const ScsModel m = toy::scalar(a, b, g);
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  SearchSettings s;
  s.N_max = 60;
  const double eps = 5.0;
  const auto rep = search_parameters(m, c, 0.1, eps, BisimMode::LyapunovNoiseFree, toy::v1(0.0), s);
  REQUIRE(rep.feasible());
  const std::size_t N = rep.terms.N;
  REQUIRE(rep.trace.size() == N);
  for (std::size_t i = 0; i + 1 < rep.trace.size(); ++i) CHECK_FALSE(rep.trace[i].holds);
  CHECK(rep.trace.back().holds);

  // Pinning one step earlier reports the failure without a descriptor-worthy status.
  REQUIRE(N > 1);
  {
    s.pinned_N = N - 1;
    const auto pinned = search_parameters(m, c, 0.1, eps, BisimMode::LyapunovNoiseFree, toy::v1(0.0), s);
    CHECK(pinned.status == FeasibilityStatus::InfeasibleAtPinnedN);
    CHECK(pinned.terms.N == N - 1);
  }
}

TEST_CASE("infeasibility is classified") {
  const ScsModel m = toy::scalar(a, b, g);
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  c.alpha_hi = 10.0;  // beta(eps^q, tau)^{1/q} > eps
  SearchSettings s;
  s.N_max = 10;
  const auto kl = search_parameters(m, c, 0.1, 1.0, BisimMode::KLNoiseFree, toy::v1(0.0), s);
  CHECK(kl.status == FeasibilityStatus::InfeasibleAtTau);
  CHECK(kl.terms.tau_term > 1.0);
  try {
    (void)select_parameters(m, c, 0.1, 1.0, BisimMode::KLNoiseFree, toy::v1(0.0), s);
    FAIL("expected InfeasibleAtTau");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasibleAtTau);
  }

  // A precision just above the tau term leaves no room for eta within N_max.
  const LyapunovCertificate c2 = toy::scalar_cert(1.0, 0.5, 2.2);
  const auto tight = search_parameters(m, c2, 0.1, 0.05, BisimMode::LyapunovNoiseFree, toy::v1(0.0), s);
  CHECK(tight.status == FeasibilityStatus::NoFeasibleN);
  CHECK(tight.trace.size() == 10);
  try {
    (void)select_parameters(m, c2, 0.1, 0.05, BisimMode::LyapunovNoiseFree, toy::v1(0.0), s);
    FAIL("expected NoFeasibleN");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoFeasibleN);
  }
}

TEST_CASE("initial set radius") {
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  c.alpha_lo = 0.5;
  c.alpha_hi = 2.0;
  CHECK(initial_set_radius(c, 0.4, BisimMode::LyapunovNoiseFree) == doctest::Approx(std::sqrt(0.25 * 0.16)));
  CHECK(initial_set_radius(c, 0.4, BisimMode::KLProbabilistic) == 0.4);
}

TEST_CASE("source-state search never worsens the objective") {
  const ScsModel m = toy::scalar(a, b, g, {0.0, 2.0});
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  const LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  const Vec x0 = toy::v1(-3.0);
  const Vec best = optimize_source_state(m, c, 0.3, qi, x0, 40);
  CHECK(source_objective(m, c, 0.3, qi, best) <= source_objective(m, c, 0.3, qi, x0));
  // The objective is minimized midway between the two equilibria 0 and 4.
  CHECK(best[0] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("grid comparison criterion") {
  const ScsModel m = toy::scalar(a, b, g, {-1.0, 0.0, 1.0});
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  const LyapunovCertificate c = toy::scalar_cert(1.0, 3.0, 2.2);
  const Box box(toy::v1(0.0), toy::v1(2.0));
  const GridComparison fast = compare_with_grid(m, c, params(5, 1.0), qi, box, 0.01);
  CHECK(fast.criterion_value == doctest::Approx(3.0 * std::exp(-1.5)));
  CHECK(fast.prefer_words);
  CHECK(fast.word_states == 243.0);
  CHECK(fast.grid_states == doctest::Approx(200.0));
  const GridComparison slow = compare_with_grid(m, c, params(5, 1e-9), qi, box, 0.01);
  CHECK(slow.criterion_value == doctest::Approx(3.0));
  CHECK_FALSE(slow.prefer_words);
}

TEST_CASE("symbolic model samples are reproducible and extend by prefix") {
  const ScsModel m = toy::scalar(a, b, g);
  const auto qi = quantize_input_set(m.inputs(), 0.0);
  SimConfig sim;
  sim.dt = 0.1 / 8;
  sim.seed = 17;
  const SymbolicModel sym(m, params(3, 0.1, 0.2, 5.0, BisimMode::LyapunovProbabilistic), qi, OutputKind::Probabilistic,
                          0.0, 16, sim);
  const auto s50 = sym.endpoint_samples(5, 50);
  CHECK(sym.cached_states() == 1);
  const auto s120 = sym.endpoint_samples(5, 120);
  REQUIRE(s120->count() == 120);
  CHECK(s120->values.topRows(50) == s50->values);
  CHECK(sym.endpoint_samples(5, 30)->count() >= 30);

  // The documented seed scheme, replayed directly.
  const auto w = sym.codec().decode(5);
  const InputCurve curve = InputCurve::from_indices(w, {}, qi, 0.1);
  SimConfig direct = sim;
  direct.seed = derive_seed(17, 5);
  direct.samples = 120;
  const EndpointSamples ref = simulate_sde(m, toy::v1(0.2), curve, 0.3, direct);
  CHECK(ref.values == s120->values);
  CHECK(sym.noise_free_output(5)[0] == doctest::Approx(endpoint(w, {-1.0, 1.0}, 0.2, 0.1)).epsilon(1e-10));
}
