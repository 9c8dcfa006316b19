#pragma once

#include "stochsynth/lyapunov.hpp"
#include "stochsynth/model.hpp"

#include <cmath>
#include <vector>

// Small models shared by the unit suites.
namespace toy {

using stochsynth::Mat;
using stochsynth::Vec;

inline Mat m1(double v) { return Mat::Constant(1, 1, v); }
inline Vec v1(double v) { return Vec::Constant(1, v); }

/// dx = (a x + b u) dt + g x dW over the finite inputs `us`.
inline stochsynth::ScsModel scalar(double a, double b, double g, std::vector<double> us = {-1.0, 1.0}) {
  std::vector<Vec> pts;
  for (double u : us) pts.push_back(v1(u));
  return stochsynth::ScsModel::linear(m1(a), m1(b), {m1(g)}, stochsynth::InputSet::finite(pts));
}

/// V = p d^2 with explicit slopes lo = hi = p.
inline stochsynth::LyapunovCertificate scalar_cert(double p, double kappa, double rho_coeff, double box = 2.0) {
  stochsynth::LyapunovCertificate c;
  c.P = m1(p);
  c.kappa = kappa;
  c.q = 2.0;
  c.alpha_lo = p;
  c.alpha_hi = p;
  c.rho = {rho_coeff, 2.0};
  c.working_box = stochsynth::cube(1, -box, box);
  return c;
}

/// Exact noise-free flow of the scalar model under a constant input.
inline double flow(double a, double b, double x, double u, double t) {
  const double e = std::exp(a * t);
  return e * x + (e - 1.0) / a * b * u;
}

}  // namespace toy
