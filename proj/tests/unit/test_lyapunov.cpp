#include <doctest.h>

#include "stochsynth/errors.hpp"
#include "stochsynth/lyapunov.hpp"
#include "oracles.hpp"
#include "toy.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace stochsynth;

namespace {

constexpr double a = -0.5, b = 1.0, g = 0.2;

Mat spd2() {
  Mat P(2, 2);
  P << 4.0, 1.0, 1.0, 2.0;
  return P;
}

}  // namespace

TEST_CASE("half-eigen slopes and symmetric square root") {
  const Mat P = spd2();
  // Eigenvalues of [[4,1],[1,2]] are 3 -+ sqrt 2.
  const auto [lo, hi] = half_eigen_slopes(P);
  CHECK(lo == doctest::Approx((3.0 - std::sqrt(2.0)) / 2.0));
  CHECK(hi == doctest::Approx((3.0 + std::sqrt(2.0)) / 2.0));
  const Mat S = symmetric_sqrt(P);
  CHECK((S * S - P).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("rho and KL bundle") {
  const RhoFunction rho{3.0, 2.0};
  CHECK(rho(2.0) == doctest::Approx(12.0));
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  c.alpha_lo = 0.5;
  c.alpha_hi = 2.0;
  const KLBundle kl = KLBundle::from(c);
  CHECK(kl.beta(3.0, 0.0) == doctest::Approx(12.0));
  CHECK(kl.beta(3.0, 2.0) == doctest::Approx(12.0 * std::exp(-1.0)));
  CHECK(kl.gamma(1.0) == doctest::Approx(2.2 / (std::numbers::e * 0.5) / 0.5));
}

TEST_CASE("quadratic generator matches the hand-derived scalar formula") {
  const ScsModel m = toy::scalar(a, b, g);
  const LyapunovCertificate c = toy::scalar_cert(1.7, 0.5, 2.2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double x = U(rng), xp = U(rng), u = U(rng), up = U(rng);
    const double d = x - xp;
    const double expect = 2.0 * 1.7 * d * (a * d + b * (u - up)) + 1.7 * g * g * d * d;
    CHECK(generator(m, c, toy::v1(x), toy::v1(xp), toy::v1(u), toy::v1(up)) == doctest::Approx(expect));
  }
}

TEST_CASE("sqrt generator: the Ito correction cancels for scalar multiplicative noise") {
  const ScsModel m = toy::scalar(a, b, g);
  LyapunovCertificate c = toy::scalar_cert(1.7, 0.4, 1.0);
  c.form = CertificateForm::SqrtQuadratic;
  c.q = 1.0;
  c.rho = {1.0, 1.0};
  const double x = 0.8, xp = -0.3, u = 1.0, up = -1.0;
  const double d = x - xp;
  const double expect = std::sqrt(1.7) * (a * d + b * (u - up));  // sign(d) = +1
  CHECK(generator(m, c, toy::v1(x), toy::v1(xp), toy::v1(u), toy::v1(up)) == doctest::Approx(expect));
}

TEST_CASE("check_certificate accepts a valid certificate and falsifies a bad rate") {
  const ScsModel m = toy::scalar(a, b, g);
  // 2a + g^2 = -0.96 leaves 0.46 of decay for Young's inequality: rho = b^2 / 0.46.
  const CertificateReport ok = check_certificate(m, toy::scalar_cert(1.0, 0.5, 2.2), 2000, 11);
  CHECK(ok.structure_ok);
  CHECK(ok.pass);
  CHECK(ok.max_margin <= 1e-8);

  const CertificateReport bad = check_certificate(m, toy::scalar_cert(1.0, 3.0, 2.2), 2000, 11);
  CHECK(bad.structure_ok);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_margin > 0.0);
}

TEST_CASE("structural defects are reported without sampling") {
  const ScsModel m = toy::scalar(a, b, g);
  LyapunovCertificate c = toy::scalar_cert(-1.0, 0.5, 2.2);
  const CertificateReport r = check_certificate(m, c, 100, 1);
  CHECK_FALSE(r.structure_ok);
  CHECK_FALSE(r.pass);
  CHECK_FALSE(r.problems.empty());

  LyapunovCertificate h;
  h.P = spd2();
  h.kappa = 1.0;
  h.alpha_lo = 0.1;
  h.alpha_hi = 3.0;
  h.half_eigen_convention = true;
  std::vector<std::string> problems;
  CHECK_FALSE(check_certificate_structure(h, 2, problems));
  const auto [lo, hi] = half_eigen_slopes(h.P);
  h.alpha_lo = lo;
  h.alpha_hi = hi;
  problems.clear();
  CHECK(check_certificate_structure(h, 2, problems));

  Mat asym = spd2();
  asym(0, 1) += 0.5;
  h.P = asym;
  problems.clear();
  CHECK_FALSE(check_certificate_structure(h, 2, problems));
}

TEST_CASE("form and q must agree") {
  const ScsModel m = toy::scalar(a, b, g);
  LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  c.q = 1.0;
  CHECK_THROWS_AS(check_certificate(m, c, 10, 1), Error);
  try {
    (void)check_certificate(m, c, 10, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedForm);
  }
}

TEST_CASE("gamma_hat slopes") {
  LyapunovCertificate c;
  c.P = spd2();
  c.q = 2.0;
  const Box D = cube(2, 0.0, 3.0);
  // max_i sum_j 2|P_ij| w_j with w = (3, 3): row 0 gives 2 (4 + 1) 3 = 30.
  CHECK(gamma_hat_slope(c, D) == doctest::Approx(30.0));
  c.form = CertificateForm::SqrtQuadratic;
  c.q = 1.0;
  const double lmin = 3.0 - std::sqrt(2.0), lmax = 3.0 + std::sqrt(2.0);
  CHECK(gamma_hat_slope(c, D) == doctest::Approx(lmax / std::sqrt(lmin)));
  c.gamma_hat = 7.0;
  CHECK(effective_gamma_hat(c) == 7.0);
}

TEST_CASE("h_x vanishes at t = 0 and when the diffusion is zero") {
  const ScsModel m = toy::scalar(a, b, g);
  const LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  CHECK(h_x(m, c, toy::v1(1.3), 0.0) == 0.0);
  const ScsModel quiet = toy::scalar(a, b, 0.0);
  for (double t : {0.1, 1.0, 10.0}) CHECK(h_x(quiet, c, toy::v1(1.3), t) == 0.0);
  HxScanner scan(quiet, c, toy::v1(1.3), 0.1);
  CHECK(scan.at(7) == 0.0);
}

TEST_CASE("h_x closed form for q = 2") {
  // With q = 2 the integrand is ratio |x|^2 e^{-kappa s} + gamma(sup|u|), so
  // h = (1/2) p g^2 e^{-kappa t} (ratio x^2 (1 - e^{-kappa t}) / kappa + gamma t) / p.
  const double p = 1.7, kappa = 0.5, rc = 2.2, x = 1.3;
  const ScsModel m = toy::scalar(a, b, g);
  const LyapunovCertificate c = toy::scalar_cert(p, kappa, rc);
  const double gam = rc * 1.0 / (std::numbers::e * kappa) / p;
  for (double t : {0.05, 0.7, 3.0}) {
    const double expect = 0.5 * p * g * g * std::exp(-kappa * t) * (x * x * (1 - std::exp(-kappa * t)) / kappa + gam * t) / p;
    CHECK(h_x(m, c, toy::v1(x), t) == doctest::Approx(expect).epsilon(1e-10));
  }

  // kappa t = 1 with no input term reduces the integral to 1 - e^{-1}.
  const ScsModel zero_u = toy::scalar(a, b, g, {0.0});
  const LyapunovCertificate c1 = toy::scalar_cert(1.0, 1.0, 2.2);
  const double expect = 0.5 * g * g * std::exp(-1.0) * (1.0 - std::exp(-1.0));
  CHECK(h_x(zero_u, c1, toy::v1(1.0), 1.0) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("h_x Simpson rule agrees with an independent trapezoid rule") {
  Mat A(2, 2);
  A << -2.0, 0.5, 0.0, -1.5;
  Mat G(2, 2);
  G << 0.3, 0.1, -0.2, 0.25;
  const ScsModel m = ScsModel::linear(A, Mat::Identity(2, 2), {G},
                                      InputSet::boxes({Box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0))}));
  LyapunovCertificate c;
  c.P = spd2();
  c.kappa = 1.2;
  c.q = 2.0;
  const auto [lo, hi] = half_eigen_slopes(c.P);
  c.alpha_lo = lo;
  c.alpha_hi = hi;
  c.rho = {0.8, 2.0};
  const Vec x = (Vec(2) << 0.7, -1.1).finished();

  const double sq = inf_norm(Mat(symmetric_sqrt(c.P)));
  const double Z = inf_norm(G);
  const double ratio = hi / lo;
  const double gam = 0.8 / (std::numbers::e * 1.2) / lo;
  const double r = std::pow(inf_norm(x), 2.0);
  for (double t : {0.3, 2.5}) {
    const double integral = oracle::trapezoid([&](double s) { return ratio * r * std::exp(-1.2 * s) + gam; }, 0.0, t, 200000);
    // n = 2, min(n, p) = 1.
    const double expect = 0.5 * sq * sq * 2.0 * 1.0 * Z * Z * std::exp(-1.2 * t) * integral / lo;
    const double got = h_x(m, c, x, t);
    CHECK(std::abs(got - expect) <= 1e-3 * expect);
  }
}

TEST_CASE("HxScanner reproduces h_x on the tau grid") {
  const ScsModel m = toy::scalar(a, b, g);
  const LyapunovCertificate c = toy::scalar_cert(1.0, 0.5, 2.2);
  HxScanner scan(m, c, toy::v1(0.4), 0.25);
  for (std::size_t k : {1u, 2u, 5u, 17u, 40u}) {
    const double t = 0.25 * static_cast<double>(k);
    CHECK(scan.at(k) == doctest::Approx(h_x(m, c, toy::v1(0.4), t, 256 * k)).epsilon(1e-9));
  }
}

TEST_CASE("h_x rejects models with f(0,0) != 0") {
  CustomDynamics dyn;
  dyn.drift = [](const Vec& x, const Vec& u) { return Vec(-x + u + Vec::Constant(1, 0.1)); };
  dyn.diffusion = [](const Vec& x) { return Mat(0.2 * x); };
  const ScsModel m = ScsModel::custom(1, 1, dyn, InputSet::finite({toy::v1(0.0)}), {1.0, 1.0, 0.2});
  try {
    (void)h_x(m, toy::scalar_cert(1.0, 0.5, 2.2), toy::v1(1.0), 1.0);
    FAIL("expected HypothesisViolated");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HypothesisViolated);
  }
}
