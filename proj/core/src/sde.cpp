#include "stochsynth/sde.hpp"

#include "stochsynth/errors.hpp"
#include "stochsynth/parallel.hpp"
#include "stochsynth/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace stochsynth {

InputCurve::InputCurve(std::vector<Vec> prefix, std::vector<Vec> period, double tau)
    : prefix_(std::move(prefix)), period_(std::move(period)), tau_(tau) {
  require(tau > 0.0, "input curve needs tau > 0");
  require(!prefix_.empty() || !period_.empty(), "input curve must not be empty");
}

InputCurve InputCurve::from_indices(const std::vector<std::size_t>& prefix, const std::vector<std::size_t>& period,
                                    const QuantizedInputs& inputs, double tau) {
  auto map = [&](const std::vector<std::size_t>& w) {
    std::vector<Vec> out;
    out.reserve(w.size());
    for (std::size_t i : w) {
      require(i < inputs.size(), "input index out of range");
      out.push_back(inputs.points[i]);
    }
    return out;
  };
  return InputCurve(map(prefix), map(period), tau);
}

const Vec& InputCurve::at_step(std::size_t k) const {
  if (k < prefix_.size()) return prefix_[k];
  require(!period_.empty(), "finite input curve queried past its end");
  return period_[(k - prefix_.size()) % period_.size()];
}

const Vec& InputCurve::at(double t) const {
  require(t >= 0.0, "input curve time must be nonnegative");
  return at_step(static_cast<std::size_t>(std::floor(t / tau_)));
}

std::size_t InputCurve::length() const {
  return period_.empty() ? prefix_.size() : std::numeric_limits<std::size_t>::max();
}

// ---------------------------------------------------------------------------

namespace {

Vec rk4_step(const ScsModel& model, const Vec& x, const Vec& u, double h) {
  const Vec k1 = model.drift(x, u);
  const Vec k2 = model.drift(x + 0.5 * h * k1, u);
  const Vec k3 = model.drift(x + 0.5 * h * k2, u);
  const Vec k4 = model.drift(x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

NoiseFreeStepper::NoiseFreeStepper(const ScsModel& model, double tau, std::size_t steps)
    : model_(&model), tau_(tau), steps_(steps) {
  require(tau > 0.0, "tau must be positive");
  require(steps >= 1, "need at least one RK4 step per tau");
  if (const auto* lin = model.linear_dynamics()) {
    // RK4 on x' = Ax + Bu with step h is x -> R(hA) x + h S(hA) B u with
    // R(z) = 1 + z + z^2/2 + z^3/6 + z^4/24, S(z) = 1 + z/2 + z^2/6 + z^3/24.
    const auto n = lin->A.rows();
    const double h = tau / static_cast<double>(steps);
    const Mat I = Mat::Identity(n, n);
    const Mat Z = h * lin->A;
    const Mat Z2 = Z * Z;
    const Mat Z3 = Z2 * Z;
    const Mat R = I + Z + Z2 / 2.0 + Z3 / 6.0 + Z3 * Z / 24.0;
    const Mat S = h * (I + Z / 2.0 + Z2 / 6.0 + Z3 / 24.0) * lin->B;
    M_ = I;
    K_ = Mat::Zero(n, lin->B.cols());
    for (std::size_t i = 0; i < steps; ++i) {
      K_ = R * K_ + S;
      M_ = R * M_;
    }
    closed_form_ = true;
  }
}

Vec NoiseFreeStepper::step(const Vec& x, const Vec& u) const {
  if (closed_form_) return M_ * x + K_ * u;
  const double h = tau_ / static_cast<double>(steps_);
  Vec y = x;
  for (std::size_t i = 0; i < steps_; ++i) y = rk4_step(*model_, y, u, h);
  return y;
}

Vec NoiseFreeStepper::run(const Vec& x0, const std::vector<Vec>& word) const {
  Vec x = x0;
  for (const Vec& u : word) {
    x = step(x, u);
    if (!x.allFinite()) throw Error(ErrorKind::NonFiniteState, "noise-free trajectory overflowed");
  }
  return x;
}

Vec integrate_noise_free(const ScsModel& model, const Vec& x0, const InputCurve& curve, std::size_t horizon_steps,
                         std::size_t ode_steps_per_tau) {
  require(ode_steps_per_tau >= 1, "need at least one RK4 step per tau");
  const double h = curve.tau() / static_cast<double>(ode_steps_per_tau);
  Vec x = x0;
  for (std::size_t k = 0; k < horizon_steps; ++k) {
    const Vec& u = curve.at_step(k);
    for (std::size_t i = 0; i < ode_steps_per_tau; ++i) x = rk4_step(model, x, u, h);
    if (!x.allFinite()) throw Error(ErrorKind::NonFiniteState, "noise-free trajectory overflowed");
  }
  return x;
}

// ---------------------------------------------------------------------------

std::size_t substeps_per_tau(double tau, double dt) {
  require(dt > 0.0 && std::isfinite(dt), "dt must be positive");
  const double k = std::round(tau / dt);
  require(k >= 1.0 && std::abs(k * dt - tau) <= 1e-12 * std::max(1.0, tau), "dt must divide tau");
  return static_cast<std::size_t>(k);
}

namespace {

// Advances one Euler-Maruyama path by `steps` increments of dt under input u.
void em_advance(const ScsModel& model, Vec& x, const Vec& u, double dt, std::size_t steps, Engine& eng, Vec& z) {
  std::normal_distribution<double> N01(0.0, 1.0);
  const double sq = std::sqrt(dt);
  for (std::size_t i = 0; i < steps; ++i) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = sq * N01(eng);
    x += model.drift(x, u) * dt + model.diffusion_times(x, z);
  }
}

}  // namespace

EndpointSamples simulate_sde(const ScsModel& model, const Vec& x0, const InputCurve& curve, double horizon,
                             const SimConfig& cfg) {
  require(cfg.samples >= 1, "simulation needs at least one sample");
  require(horizon >= 0.0, "horizon must be nonnegative");
  const std::size_t per_tau = substeps_per_tau(curve.tau(), cfg.dt);
  const double total = std::round(horizon / cfg.dt);
  require(std::abs(total * cfg.dt - horizon) <= 1e-9 * std::max(1.0, horizon), "horizon must be a multiple of dt");
  const auto total_steps = static_cast<std::size_t>(total);

  EndpointSamples out;
  out.values.resize(static_cast<Eigen::Index>(cfg.samples), x0.size());
  out.seed = cfg.seed;
  out.dt = cfg.dt;

  parallel_for(cfg.samples, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Vec z(static_cast<Eigen::Index>(model.p()));
    for (std::size_t i = begin; i < end; ++i) {
      Engine eng(derive_seed(cfg.seed, cfg.first_path + i));
      Vec x = x0;
      std::size_t done = 0;
      for (std::size_t k = 0; done < total_steps; ++k) {
        const std::size_t n = std::min(per_tau, total_steps - done);
        em_advance(model, x, curve.at_step(k), cfg.dt, n, eng, z);
        done += n;
      }
      if (!x.allFinite()) throw Error(ErrorKind::NonFinitePath, "Euler-Maruyama path diverged");
      out.values.row(static_cast<Eigen::Index>(i)) = x.transpose();
    }
  });
  return out;
}

double moment_distance(const EndpointSamples& samples, const Vec& target, double q) {
  require(q >= 1.0, "moment order must be >= 1");
  require(samples.count() >= 1, "no samples");
  std::vector<double> v(samples.count());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::pow(inf_norm(Vec(samples.values.row(static_cast<Eigen::Index>(i)).transpose() - target)), q);
  return std::pow(pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size()), 1.0 / q);
}

double moment_distance(const EndpointSamples& samples, const Box& target, double q) {
  require(q >= 1.0, "moment order must be >= 1");
  require(samples.count() >= 1, "no samples");
  std::vector<double> v(samples.count());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::pow(target.distance(samples.values.row(static_cast<Eigen::Index>(i)).transpose()), q);
  return std::pow(pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size()), 1.0 / q);
}

// ---------------------------------------------------------------------------

double ClosedLoopResult::max_mean() const {
  return mean_distance.empty() ? 0.0 : *std::max_element(mean_distance.begin(), mean_distance.end());
}

std::size_t ClosedLoopResult::argmax() const {
  return static_cast<std::size_t>(std::max_element(mean_distance.begin(), mean_distance.end()) - mean_distance.begin());
}

double ClosedLoopResult::time_average() const {
  if (mean_distance.empty()) return 0.0;
  return pairwise_sum(mean_distance.data(), mean_distance.size()) / static_cast<double>(mean_distance.size());
}

void ClosedLoopResult::write_csv(std::ostream& os) const {
  os << "time,mean_distance,stderr\n";
  char buf[96];
  for (std::size_t k = 0; k < time.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.9g,%.12g,%.12g\n", time[k], mean_distance[k], std_error[k]);
    os << buf;
  }
}

ClosedLoopResult closed_loop_run(const ScsModel& model, const InputCurve& curve, const Vec& x0, const Box& W,
                                 std::size_t runs, std::size_t horizon_steps, const SimConfig& cfg, double q) {
  require(runs >= 1, "closed loop needs at least one run");
  require(q >= 1.0, "moment order must be >= 1");
  const std::size_t per_tau = substeps_per_tau(curve.tau(), cfg.dt);
  const std::size_t T = horizon_steps + 1;

  // dist[k * runs + i]: distance of path i at time k tau.
  std::vector<double> dist(T * runs);
  parallel_for(runs, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Vec z(static_cast<Eigen::Index>(model.p()));
    for (std::size_t i = begin; i < end; ++i) {
      Engine eng(derive_seed(cfg.seed, i));
      Vec x = x0;
      dist[i] = W.distance(x);
      for (std::size_t k = 0; k < horizon_steps; ++k) {
        em_advance(model, x, curve.at_step(k), cfg.dt, per_tau, eng, z);
        if (!x.allFinite()) throw Error(ErrorKind::NonFinitePath, "closed-loop path diverged");
        dist[(k + 1) * runs + i] = W.distance(x);
      }
    }
  });

  ClosedLoopResult res;
  res.runs = runs;
  res.seed = cfg.seed;
  res.dt = cfg.dt;
  std::vector<double> buf(runs);
  const double R = static_cast<double>(runs);
  for (std::size_t k = 0; k < T; ++k) {
    const double* d = dist.data() + k * runs;
    const double mean = pairwise_sum(d, runs) / R;
    for (std::size_t i = 0; i < runs; ++i) buf[i] = (d[i] - mean) * (d[i] - mean);
    const double var = runs > 1 ? pairwise_sum(buf.data(), runs) / (R - 1.0) : 0.0;
    for (std::size_t i = 0; i < runs; ++i) buf[i] = std::pow(d[i], q);
    res.time.push_back(curve.tau() * static_cast<double>(k));
    res.mean_distance.push_back(mean);
    res.std_error.push_back(std::sqrt(var / R));
    res.moment_distance.push_back(std::pow(pairwise_sum(buf.data(), runs) / R, 1.0 / q));
  }
  return res;
}

}  // namespace stochsynth
