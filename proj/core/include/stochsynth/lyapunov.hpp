#pragma once

#include "stochsynth/model.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace stochsynth {

enum class CertificateForm {
  Quadratic,      // V = d'Pd, q = 2
  SqrtQuadratic,  // V = sqrt(d'Pd), q = 1
};

/// rho(r) = coeff * r^exp.
struct RhoFunction {
  double coeff = 0.0;
  double exp = 1.0;
  double operator()(double r) const;
};

/// Incremental Lyapunov certificate V(x, x') with linear comparison slopes.
struct LyapunovCertificate {
  Mat P;
  double kappa = 0.0;
  double q = 2.0;
  CertificateForm form = CertificateForm::Quadratic;
  double alpha_lo = 0.0;  // alpha_lo(r) = alpha_lo * r
  double alpha_hi = 0.0;  // alpha_hi(r) = alpha_hi * r
  /// Slopes follow the half-eigenvalue convention (lambda_min/2, lambda_max/2).
  bool half_eigen_convention = false;
  RhoFunction rho;
  std::optional<Box> working_box;
  /// Explicit gamma_hat slope; derived from the working box when absent.
  std::optional<double> gamma_hat;

  double V(const Vec& x, const Vec& y) const;
  double alpha_lo_inv(double v) const { return v / alpha_lo; }
  double alpha_hi_inv(double v) const { return v / alpha_hi; }
};

/// Returns (lambda_min(P)/2, lambda_max(P)/2).
std::pair<double, double> half_eigen_slopes(const Mat& P);

/// Eigenvalues of the symmetric part of P, ascending.
Vec symmetric_eigenvalues(const Mat& P);

/// Principal symmetric square root of an SPD matrix.
Mat symmetric_sqrt(const Mat& P);

/// beta(r, s) = alpha_lo^-1(alpha_hi(r) e^{-kappa s}),
/// gamma(r) = alpha_lo^-1(rho(r) / (e kappa)).
struct KLBundle {
  double ratio = 1.0;  // alpha_hi / alpha_lo
  double kappa = 1.0;
  double alpha_lo = 1.0;
  RhoFunction rho;

  static KLBundle from(const LyapunovCertificate& cert);
  double beta(double r, double s) const;
  double gamma(double r) const;
};

struct CertificateReport {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  bool structure_ok = false;
  std::vector<std::string> problems;
  /// max over samples of L V + kappa V - rho(|u - u'|); the inequality holds where it is <= 0.
  double max_margin = -HUGE_VAL;
  bool pass = false;
};

/// Structural checks (symmetry, definiteness, slope ordering, convention) that
/// do not need the model. Problems are appended to `problems`.
bool check_certificate_structure(const LyapunovCertificate& cert, std::size_t n, std::vector<std::string>& problems);

/// Throws UnsupportedForm unless the form is quadratic with q = 2 or sqrt with q = 1.
void require_supported_form(const LyapunovCertificate& cert);

/// Falsification check of the generator inequality
///   L^{u,u'} V(x, x') <= -kappa V(x, x') + rho(|u - u'|)
/// at random tuples from D x D x U x U, D the working box (default [-1,1]^n).
/// Throws UnsupportedForm when form and q disagree.
CertificateReport check_certificate(const ScsModel& model, const LyapunovCertificate& cert, std::size_t samples,
                                    std::uint64_t seed);

/// Generator L^{u,u'} V at one tuple.
double generator(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x, const Vec& xp, const Vec& u,
                 const Vec& up);

/// Slope of the linear gamma_hat bounding |V(x,y) - V(x,z)| <= gamma_hat |y - z| on D.
double gamma_hat_slope(const LyapunovCertificate& cert, const Box& D);

/// gamma_hat slope used by the bisimulation conditions: explicit value if the
/// certificate carries one, else gamma_hat_slope over the working box.
double effective_gamma_hat(const LyapunovCertificate& cert);

inline constexpr std::size_t kDefaultQuadSteps = 256;

/// Bound h_x(t) on the q-th moment gap between the SDE and its noise-free solution.
double h_x(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x, double t,
           std::size_t quad_steps = kDefaultQuadSteps);

/// h_x evaluated on t = k tau for increasing k, reusing the accumulated integral.
/// Each tau-interval gets its own composite Simpson rule with quad_steps panels.
class HxScanner {
public:
  HxScanner(const ScsModel& model, const LyapunovCertificate& cert, const Vec& x, double tau,
            std::size_t quad_steps = kDefaultQuadSteps);

  double at(std::size_t k);

private:
  double tau_;
  std::size_t steps_;
  double prefactor_;  // 1/2 |sqrt P|^2 n min(n,p) Z^2
  double beta_arg_;   // |x|^q
  double gamma_term_;
  double q_;
  double kappa_;
  double alpha_lo_;
  KLBundle kl_;
  std::vector<double> integral_{0.0};  // integral over [0, k tau]
};

}  // namespace stochsynth
