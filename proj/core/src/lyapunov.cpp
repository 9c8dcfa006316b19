#include "stochsynth/lyapunov.hpp"

#include "stochsynth/errors.hpp"
#include "stochsynth/rng.hpp"

#include "sampling.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>

namespace stochsynth {

using detail::sample_input;
using detail::uniform_in;

double RhoFunction::operator()(double r) const {
  if (coeff == 0.0 || r == 0.0) return 0.0;
  return coeff * std::pow(r, exp);
}

double LyapunovCertificate::V(const Vec& x, const Vec& y) const {
  const Vec d = x - y;
  const double quad = d.dot(P * d);
  return form == CertificateForm::Quadratic ? quad : std::sqrt(std::max(quad, 0.0));
}

Vec symmetric_eigenvalues(const Mat& P) {
  const Mat S = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

std::pair<double, double> half_eigen_slopes(const Mat& P) {
  const Vec ev = symmetric_eigenvalues(P);
  return {0.5 * ev.minCoeff(), 0.5 * ev.maxCoeff()};
}

Mat symmetric_sqrt(const Mat& P) {
  const Mat S = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  require(es.eigenvalues().minCoeff() >= 0.0, "square root needs a positive semidefinite matrix");
  return es.operatorSqrt();
}

KLBundle KLBundle::from(const LyapunovCertificate& cert) {
  return {cert.alpha_hi / cert.alpha_lo, cert.kappa, cert.alpha_lo, cert.rho};
}

double KLBundle::beta(double r, double s) const { return ratio * r * std::exp(-kappa * s); }

double KLBundle::gamma(double r) const { return rho(r) / (std::exp(1.0) * kappa) / alpha_lo; }

// ---------------------------------------------------------------------------

bool check_certificate_structure(const LyapunovCertificate& cert, std::size_t n, std::vector<std::string>& problems) {
  const std::size_t before = problems.size();
  const auto N = static_cast<Eigen::Index>(n);
  if (cert.P.rows() != N || cert.P.cols() != N) {
    problems.push_back("P must be n x n");
    return false;
  }
  if (!cert.P.allFinite()) {
    problems.push_back("P has non-finite entries");
    return false;
  }
  const double scale = std::max(1.0, cert.P.cwiseAbs().maxCoeff());
  if ((cert.P - cert.P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) problems.push_back("P is not symmetric");
  const Vec ev = symmetric_eigenvalues(cert.P);
  if (!(ev.minCoeff() > 0.0)) problems.push_back("P is not positive definite");
  if (!(cert.kappa > 0.0)) problems.push_back("kappa must be positive");
  if (!(cert.alpha_lo > 0.0 && cert.alpha_hi > 0.0)) problems.push_back("alpha slopes must be positive");
  if (!(cert.alpha_lo <= cert.alpha_hi)) problems.push_back("alpha_lo exceeds alpha_hi");
  if (!(cert.rho.coeff >= 0.0)) problems.push_back("rho coefficient must be nonnegative");
  if (cert.half_eigen_convention && problems.size() == before) {
    const auto [lo, hi] = half_eigen_slopes(cert.P);
    if (std::abs(cert.alpha_lo - lo) > 1e-9 * std::max(1.0, lo) ||
        std::abs(cert.alpha_hi - hi) > 1e-9 * std::max(1.0, hi))
      problems.push_back("alpha slopes do not match lambda(P)/2");
  }
  if (cert.working_box && cert.working_box->dim() != n) problems.push_back("working box dimension must equal n");
  return problems.size() == before;
}

void require_supported_form(const LyapunovCertificate& cert) {
  const bool ok = (cert.form == CertificateForm::Quadratic && cert.q == 2.0) ||
                  (cert.form == CertificateForm::SqrtQuadratic && cert.q == 1.0);
  if (!ok) throw Error(ErrorKind::UnsupportedForm, "certificate form and q disagree (quadratic needs q=2, sqrt needs q=1)");
}

double generator(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x, const Vec& xp, const Vec& u,
                 const Vec& up) {
  const Mat& P = cert.P;
  const Vec d = x - xp;
  const Vec df = model.drift(x, u) - model.drift(xp, up);
  const Mat ds = model.diffusion(x) - model.diffusion(xp);
  const Vec Pd = P * d;

  if (cert.form == CertificateForm::Quadratic) {
    double lv = 2.0 * Pd.dot(df);
    for (Eigen::Index k = 0; k < ds.cols(); ++k) lv += ds.col(k).dot(P * ds.col(k));
    return lv;
  }
  // sqrt(d'Pd): gradient Pd/s, Hessian P/s - Pd d'P / s^3. Not differentiable at d = 0.
  const double s2 = d.dot(Pd);
  if (s2 <= 0.0) return 0.0;
  const double s = std::sqrt(s2);
  double lv = Pd.dot(df) / s;
  for (Eigen::Index k = 0; k < ds.cols(); ++k) {
    const double a = ds.col(k).dot(P * ds.col(k));
    const double b = Pd.dot(ds.col(k));
    lv += 0.5 * (a / s - b * b / (s * s2));
  }
  return lv;
}

CertificateReport check_certificate(const ScsModel& model, const LyapunovCertificate& cert, std::size_t samples,
                                    std::uint64_t seed) {
  require(samples >= 1, "check_certificate needs at least one sample");
  require_supported_form(cert);
  CertificateReport rep;
  rep.samples = samples;
  rep.seed = seed;
  rep.structure_ok = check_certificate_structure(cert, model.n(), rep.problems);
  if (!rep.structure_ok) return rep;

  const Box D = cert.working_box ? *cert.working_box : cube(model.n(), -1.0, 1.0);
  Engine eng(derive_seed(seed, 1));
  std::bernoulli_distribution same_input(0.25);
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec x = uniform_in(D, eng);
    const Vec xp = uniform_in(D, eng);
    const Vec u = sample_input(model.inputs(), eng);
    const Vec up = same_input(eng) ? u : sample_input(model.inputs(), eng);
    const double lv = generator(model, cert, x, xp, u, up);
    const double margin = lv + cert.kappa * cert.V(x, xp) - cert.rho(inf_norm(Vec(u - up)));
    if (!std::isfinite(margin)) {
      rep.problems.push_back("generator evaluated to a non-finite value");
      rep.max_margin = HUGE_VAL;
      break;
    }
    rep.max_margin = std::max(rep.max_margin, margin);
  }
  rep.pass = rep.max_margin <= 1e-8;
  if (!rep.pass) rep.problems.push_back("generator inequality violated");
  return rep;
}

// ---------------------------------------------------------------------------

double gamma_hat_slope(const LyapunovCertificate& cert, const Box& D) {
  require(!D.degenerate(), "gamma_hat needs a non-degenerate box");
  require(static_cast<Eigen::Index>(D.dim()) == cert.P.rows(), "box dimension must equal n");
  if (cert.form == CertificateForm::SqrtQuadratic) {
    const Vec ev = symmetric_eigenvalues(cert.P);
    return ev.maxCoeff() / std::sqrt(ev.minCoeff());
  }
  // max over x - y in [-w, w] of |2 P (x - y)|: row i peaks at sum_j 2|P_ij| w_j.
  const Vec w = D.edges();
  return (2.0 * cert.P.cwiseAbs() * w).maxCoeff();
}

double effective_gamma_hat(const LyapunovCertificate& cert) {
  if (cert.gamma_hat) return *cert.gamma_hat;
  if (cert.form == CertificateForm::SqrtQuadratic) {
    const Vec ev = symmetric_eigenvalues(cert.P);
    return ev.maxCoeff() / std::sqrt(ev.minCoeff());
  }
  require(cert.working_box.has_value(), "a quadratic certificate needs a working box or an explicit gamma_hat");
  return gamma_hat_slope(cert, *cert.working_box);
}

// ---------------------------------------------------------------------------

namespace {

void check_h_hypotheses(const ScsModel& model, const LyapunovCertificate& cert, std::size_t quad_steps) {
  require_supported_form(cert);
  require(cert.q >= 2.0, "h_x needs q >= 2");
  require(quad_steps >= 16, "h_x needs at least 16 quadrature panels");
  const Vec zx = Vec::Zero(static_cast<Eigen::Index>(model.n()));
  const Vec zu = Vec::Zero(static_cast<Eigen::Index>(model.m()));
  if (inf_norm(model.drift(zx, zu)) != 0.0) throw Error(ErrorKind::HypothesisViolated, "f(0,0) != 0");
  if (inf_norm(Mat(model.diffusion(zx))) != 0.0) throw Error(ErrorKind::HypothesisViolated, "sigma(0) != 0");
}

double h_prefactor(const ScsModel& model, const LyapunovCertificate& cert) {
  const double Z = model.lipschitz().Z;
  const double sq = inf_norm(symmetric_sqrt(cert.P));
  const double n = static_cast<double>(model.n());
  const double np = static_cast<double>(std::min(model.n(), model.p()));
  return 0.5 * sq * sq * n * np * Z * Z;
}

// Composite Simpson on [a, b] with `panels` (even) subintervals.
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double acc = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + static_cast<double>(i) * h);
  return acc * h / 3.0;
}

}  // namespace

double h_x(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x, double t, std::size_t quad_steps) {
  require(t >= 0.0, "h_x needs t >= 0");
  check_h_hypotheses(model, cert, quad_steps);
  const double pre = h_prefactor(model, cert);
  if (t == 0.0 || pre == 0.0) return 0.0;
  const KLBundle kl = KLBundle::from(cert);
  const double r = std::pow(inf_norm(x), cert.q);
  const double g = kl.gamma(model.inputs().sup_norm());
  const double e = 2.0 / cert.q;
  auto integrand = [&](double s) { return std::pow(kl.beta(r, s) + g, e); };
  const double integral = simpson(integrand, 0.0, t, quad_steps);
  return cert.alpha_lo_inv(pre * std::exp(-cert.kappa * t) * integral);
}

HxScanner::HxScanner(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x, double tau,
                     std::size_t quad_steps)
    : tau_(tau), steps_(quad_steps), q_(cert.q), kappa_(cert.kappa), alpha_lo_(cert.alpha_lo),
      kl_(KLBundle::from(cert)) {
  require(tau > 0.0, "tau must be positive");
  check_h_hypotheses(model, cert, quad_steps);
  prefactor_ = h_prefactor(model, cert);
  beta_arg_ = std::pow(inf_norm(x), cert.q);
  gamma_term_ = kl_.gamma(model.inputs().sup_norm());
}

double HxScanner::at(std::size_t k) {
  if (prefactor_ == 0.0 || k == 0) return 0.0;
  const double e = 2.0 / q_;
  auto integrand = [&](double s) { return std::pow(kl_.beta(beta_arg_, s) + gamma_term_, e); };
  while (integral_.size() <= k) {
    const double a = tau_ * static_cast<double>(integral_.size() - 1);
    integral_.push_back(integral_.back() + simpson(integrand, a, a + tau_, steps_));
  }
  const double t = tau_ * static_cast<double>(k);
  return prefactor_ * std::exp(-kappa_ * t) * integral_[k] / alpha_lo_;
}

}  // namespace stochsynth
