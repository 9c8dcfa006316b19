#include "stochsynth/mc_label.hpp"

#include "stochsynth/errors.hpp"
#include "stochsynth/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace stochsynth {

void LabelingConfig::validate(double epsilon) const {
  require(theta > 0.0, "theta must be positive");
  require(r > 0.0, "cover pitch r must be positive");
  if (r >= 2.0 * theta) throw Error(ErrorKind::InvalidCover, "cover pitch r must be below 2 theta");
  require(pi > 0.0 && pi < 1.0, "pi must lie in (0, 1)");
  require(delta > 0.0 && delta < epsilon, "delta must lie in (0, epsilon)");
  require(q >= 1.0, "moment order must be >= 1");
  require(sample_cap >= 1.0, "sample cap must be at least 1");
}

GridCover grid_cover(const Box& A, double r) {
  require(r > 0.0, "cover pitch r must be positive");
  require(A.dim() >= 1, "cover needs a non-empty box");
  const std::size_t n = A.dim();
  std::vector<long long> lo(n), cnt(n);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k0 = static_cast<long long>(std::floor((A.lo[i] + 0.5 * r) / r));
    const auto k1 = std::max(k0, static_cast<long long>(std::ceil((A.hi[i] - 0.5 * r) / r)));
    lo[i] = k0;
    cnt[i] = k1 - k0 + 1;
    total *= static_cast<std::size_t>(cnt[i]);
  }
  GridCover c;
  c.r = r;
  c.points.reserve(total);
  std::vector<long long> k(n, 0);
  for (std::size_t t = 0; t < total; ++t) {
    Vec p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(lo[i] + k[i]) * r;
    c.points.push_back(std::move(p));
    for (std::size_t i = n; i-- > 0;) {
      if (++k[i] < cnt[i]) break;
      k[i] = 0;
    }
  }
  return c;
}

double sample_count(const LabelingConfig& cfg, const GridCover& cover, const ScsModel& model,
                    const AbstractionParams& params) {
  if (cover.r >= 2.0 * cfg.theta) throw Error(ErrorKind::InvalidCover, "cover pitch r must be below 2 theta");
  require(cfg.theta > 0.0 && cfg.pi > 0.0 && cfg.pi < 1.0, "theta > 0 and pi in (0, 1) required");
  require(cover.size() >= 1, "cover must be non-empty");
  double far = 0.0;
  for (const Vec& a : cover.points) far = std::max(far, inf_norm(Vec(params.x_s - a)));
  const double p = 2.0 * cfg.q;
  const double L = std::max(model.lipschitz().L_x, model.lipschitz().Z);
  const double horizon = static_cast<double>(params.N) * params.tau;
  const double b = (1.0 + std::pow(far, p)) * std::exp(p * (p + 1.0) * L * horizon);
  const double M = static_cast<double>(cover.size()) * b / (cfg.pi * std::pow(cfg.theta - 0.5 * cover.r, p));
  return std::ceil(M);
}

double empirical_distance(const EndpointSamples& samples, const GridCover& cover, double q) {
  require(samples.count() >= 1, "need at least one sample");
  require(cover.size() >= 1, "cover must be non-empty");
  require(q >= 1.0, "moment order must be >= 1");
  const std::size_t M = samples.count();
  std::vector<double> v(M);
  double best = HUGE_VAL;
  for (const Vec& a : cover.points) {
    for (std::size_t i = 0; i < M; ++i)
      v[i] = std::pow(inf_norm(Vec(samples.values.row(static_cast<Eigen::Index>(i)).transpose() - a)), q);
    best = std::min(best, pairwise_sum(v.data(), M) / static_cast<double>(M));
  }
  return std::pow(best, 1.0 / q);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> box_key(const Box& A) {
  std::vector<double> k(A.lo.begin(), A.lo.end());
  k.insert(k.end(), A.hi.begin(), A.hi.end());
  return k;
}

}  // namespace

MonteCarloLabeler::MonteCarloLabeler(const SymbolicModel& symbolic, LabelingConfig cfg)
    : symbolic_(&symbolic), cfg_(cfg) {
  require(symbolic.output_kind() == OutputKind::Probabilistic, "Monte-Carlo labeling needs probabilistic outputs");
  cfg_.validate(symbolic.params().epsilon);
}

const MonteCarloLabeler::Plan& MonteCarloLabeler::plan_for(const Box& A) const {
  require(A.dim() == symbolic_->model().n(), "label set dimension must equal n");
  const auto key = box_key(A);
  std::lock_guard lock(mutex_);
  if (auto it = plans_.find(key); it != plans_.end()) return it->second;
  GridCover cover = grid_cover(A, cfg_.r);
  const double M = sample_count(cfg_, cover, symbolic_->model(), symbolic_->params());
  if (!(M <= cfg_.sample_cap))
    throw Error(ErrorKind::SampleBudgetExceeded,
                "required sample count " + std::to_string(M) + " exceeds the cap " + std::to_string(cfg_.sample_cap));
  return plans_.emplace(key, Plan{std::move(cover), static_cast<std::size_t>(M)}).first->second;
}

std::size_t MonteCarloLabeler::samples_for(const Box& A) const { return plan_for(A).M; }

LabelResult MonteCarloLabeler::label(std::uint64_t state, const Box& A) const {
  const Plan& plan = plan_for(A);
  auto key = std::make_pair(state, box_key(A));
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const auto samples = symbolic_->endpoint_samples(state, plan.M);
  LabelResult res;
  res.M = plan.M;
  res.distance = empirical_distance(*samples, plan.cover, cfg_.q);
  res.label = res.distance < cfg_.delta - cfg_.theta ? Label::Safe : Label::Unsafe;
  res.confidence = 1.0 - cfg_.pi;
  std::lock_guard lock(mutex_);
  memo_.emplace(std::move(key), res);
  return res;
}

LabelResult label_state(const SymbolicModel& symbolic, std::uint64_t state, const Box& A, const LabelingConfig& cfg) {
  return MonteCarloLabeler(symbolic, cfg).label(state, A);
}

}  // namespace stochsynth
