#include "stochsynth/model.hpp"

#include "stochsynth/errors.hpp"
#include "stochsynth/rng.hpp"

#include "sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace stochsynth {

using detail::sample_input;
using detail::uniform_in;

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  require(lo.size() == hi.size(), "box bounds must have equal dimension");
  require(lo.allFinite() && hi.allFinite(), "box bounds must be finite");
  require((lo.array() <= hi.array()).all(), "box lower bound exceeds upper bound");
}

double Box::span() const { return dim() == 0 ? 0.0 : edges().minCoeff(); }

bool Box::contains(const Vec& x, double tol) const {
  return ((x.array() >= lo.array() - tol) && (x.array() <= hi.array() + tol)).all();
}

Vec Box::clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

Box Box::shrunk(double margin) const {
  require(margin >= 0.0, "shrink margin must be nonnegative");
  const Vec l = lo.array() + margin;
  const Vec h = hi.array() - margin;
  require((l.array() <= h.array()).all(), "box degenerates after shrinking");
  return Box(l, h);
}

bool Box::degenerate() const { return dim() == 0 || !(edges().array() > 0.0).all(); }

Box cube(std::size_t n, double lo, double hi) {
  return Box(Vec::Constant(static_cast<Eigen::Index>(n), lo), Vec::Constant(static_cast<Eigen::Index>(n), hi));
}

// ---------------------------------------------------------------------------

InputSet InputSet::boxes(std::vector<Box> boxes) {
  require(!boxes.empty(), "input set needs at least one box");
  const std::size_t m = boxes.front().dim();
  require(m >= 1, "input dimension must be positive");
  for (const Box& b : boxes) {
    require(b.dim() == m, "input boxes must share one dimension");
    if (b.degenerate()) throw Error(ErrorKind::InvalidModel, "input box has an empty edge");
  }
  return InputSet(Boxes{std::move(boxes)}, m);
}

InputSet InputSet::finite(std::vector<Vec> points) {
  require(!points.empty(), "finite input set must be non-empty");
  const auto m = points.front().size();
  require(m >= 1, "input dimension must be positive");
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(points[i].size() == m, "finite inputs must share one dimension");
    require(points[i].allFinite(), "finite inputs must be finite");
    for (std::size_t j = 0; j < i; ++j)
      if (points[i] == points[j]) throw Error(ErrorKind::InvalidModel, "finite input set has duplicates");
  }
  return InputSet(Finite{std::move(points)}, static_cast<std::size_t>(m));
}

const std::vector<Box>& InputSet::box_list() const {
  if (const auto* b = std::get_if<Boxes>(&data_)) return b->boxes;
  throw Error(ErrorKind::Precondition, "input set is finite, not a box union");
}

const std::vector<Vec>& InputSet::points() const {
  if (const auto* f = std::get_if<Finite>(&data_)) return f->points;
  throw Error(ErrorKind::Precondition, "input set is a box union, not finite");
}

double InputSet::sup_norm() const {
  double s = 0.0;
  if (is_finite()) {
    for (const Vec& p : points()) s = std::max(s, inf_norm(p));
  } else {
    for (const Box& b : box_list()) s = std::max({s, inf_norm(b.lo), inf_norm(b.hi)});
  }
  return s;
}

double span(const InputSet& inputs) {
  if (inputs.is_finite()) throw Error(ErrorKind::SpanUndefinedForFinite, "span is undefined for a finite input set");
  double s = std::numeric_limits<double>::infinity();
  for (const Box& b : inputs.box_list()) s = std::min(s, b.span());
  return s;
}

QuantizedInputs quantize_input_set(const InputSet& inputs, double mu) {
  require(std::isfinite(mu) && mu >= 0.0, "mu must be finite and nonnegative");
  if (inputs.is_finite()) {
    if (mu != 0.0) throw Error(ErrorKind::NonzeroMuOnFiniteSet, "finite input sets require mu = 0");
    return {0.0, inputs.points()};
  }
  const double sp = span(inputs);
  if (mu > sp) throw Error(ErrorKind::MuExceedsSpan, "mu exceeds span(U)");
  require(mu > 0.0, "box input sets require mu > 0");

  // Lattice indices per axis, with a relative tolerance so that bounds that are
  // integer multiples of mu up to rounding are included.
  const double tol = 1e-9;
  std::vector<Vec> pts;
  const std::size_t m = inputs.dim();
  for (const Box& b : inputs.box_list()) {
    std::vector<long long> lo(m), cnt(m);
    std::size_t total = 1;
    for (std::size_t i = 0; i < m; ++i) {
      lo[i] = static_cast<long long>(std::ceil(b.lo[i] / mu - tol));
      const auto hi = static_cast<long long>(std::floor(b.hi[i] / mu + tol));
      cnt[i] = std::max<long long>(0, hi - lo[i] + 1);
      total *= static_cast<std::size_t>(cnt[i]);
    }
    std::vector<long long> k(m, 0);
    for (std::size_t c = 0; c < total; ++c) {
      Vec u(m);
      for (std::size_t i = 0; i < m; ++i) u[i] = static_cast<double>(lo[i] + k[i]) * mu;
      pts.push_back(std::move(u));
      for (std::size_t i = m; i-- > 0;) {
        if (++k[i] < cnt[i]) break;
        k[i] = 0;
      }
    }
  }
  auto lex = [](const Vec& a, const Vec& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  std::sort(pts.begin(), pts.end(), lex);
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Vec& a, const Vec& b) { return a == b; }), pts.end());
  if (pts.empty()) throw Error(ErrorKind::InvalidModel, "quantized input set is empty");
  return {mu, std::move(pts)};
}

// ---------------------------------------------------------------------------

double diffusion_lipschitz(const std::vector<Mat>& G) {
  if (G.empty()) return 0.0;
  Vec rows = Vec::Zero(G.front().rows());
  for (const Mat& g : G) rows += g.cwiseAbs().rowwise().sum();
  return rows.size() == 0 ? 0.0 : rows.maxCoeff();
}

ScsModel ScsModel::linear(Mat A, Mat B, std::vector<Mat> G, InputSet inputs,
                          std::optional<LipschitzConstants> lipschitz) {
  const auto n = A.rows();
  if (n < 1 || A.cols() != n) throw Error(ErrorKind::InvalidModel, "A must be square with n >= 1");
  if (B.rows() != n || B.cols() != static_cast<Eigen::Index>(inputs.dim()))
    throw Error(ErrorKind::InvalidModel, "B must be n x m with m the input dimension");
  if (G.empty()) throw Error(ErrorKind::InvalidModel, "at least one diffusion channel is required");
  for (const Mat& g : G)
    if (g.rows() != n || g.cols() != n) throw Error(ErrorKind::InvalidModel, "each G_k must be n x n");
  bool finite = A.allFinite() && B.allFinite();
  for (const Mat& g : G) finite = finite && g.allFinite();
  if (!finite) throw Error(ErrorKind::InvalidModel, "model matrices must be finite");

  const double Z = diffusion_lipschitz(G);
  LipschitzConstants lc{inf_norm(A), inf_norm(B), Z};
  if (lipschitz) {
    if (std::abs(lipschitz->Z - Z) > 1e-9 * std::max(1.0, Z))
      throw Error(ErrorKind::InvalidModel, "stored Z disagrees with |[G_1 ... G_p]|");
    lc = *lipschitz;
  }
  ScsModel mdl;
  mdl.n_ = static_cast<std::size_t>(n);
  mdl.p_ = G.size();
  mdl.kind_ = LinearDynamics{std::move(A), std::move(B)};
  mdl.G_ = std::move(G);
  mdl.inputs_ = std::move(inputs);
  mdl.lipschitz_ = lc;
  return mdl;
}

ScsModel ScsModel::custom(std::size_t n, std::size_t p, CustomDynamics dyn, InputSet inputs,
                          LipschitzConstants lipschitz) {
  if (n < 1 || p < 1) throw Error(ErrorKind::InvalidModel, "n and p must be at least 1");
  if (!dyn.drift || !dyn.diffusion) throw Error(ErrorKind::InvalidModel, "custom model needs both evaluators");
  if (!(lipschitz.L_x >= 0 && lipschitz.L_u >= 0 && lipschitz.Z >= 0))
    throw Error(ErrorKind::InvalidModel, "Lipschitz constants must be nonnegative");
  ScsModel mdl;
  mdl.n_ = n;
  mdl.p_ = p;
  mdl.kind_ = std::move(dyn);
  mdl.inputs_ = std::move(inputs);
  mdl.lipschitz_ = lipschitz;
  return mdl;
}

const LinearDynamics* ScsModel::linear_dynamics() const { return std::get_if<LinearDynamics>(&kind_); }

Vec ScsModel::drift(const Vec& x, const Vec& u) const {
  if (const auto* lin = std::get_if<LinearDynamics>(&kind_)) return lin->A * x + lin->B * u;
  return std::get<CustomDynamics>(kind_).drift(x, u);
}

Mat ScsModel::diffusion(const Vec& x) const {
  if (is_linear()) {
    Mat s(n_, p_);
    for (std::size_t k = 0; k < p_; ++k) s.col(static_cast<Eigen::Index>(k)) = G_[k] * x;
    return s;
  }
  return std::get<CustomDynamics>(kind_).diffusion(x);
}

Vec ScsModel::diffusion_times(const Vec& x, const Vec& w) const {
  if (is_linear()) {
    Vec out = Vec::Zero(static_cast<Eigen::Index>(n_));
    for (std::size_t k = 0; k < p_; ++k) out.noalias() += w[static_cast<Eigen::Index>(k)] * (G_[k] * x);
    return out;
  }
  return std::get<CustomDynamics>(kind_).diffusion(x) * w;
}

// ---------------------------------------------------------------------------

namespace {

Vec sign_of(const Eigen::RowVectorXd& row) {
  Vec s(row.size());
  for (Eigen::Index j = 0; j < row.size(); ++j) s[j] = row[j] >= 0 ? 1.0 : -1.0;
  return s;
}

}  // namespace

ModelValidationReport validate_model(const ScsModel& model, std::size_t samples, std::uint64_t seed,
                                     const std::optional<Box>& region) {
  require(samples >= 1, "validate_model needs at least one sample");
  const std::size_t n = model.n();
  const Box D = region ? *region : cube(n, -1.0, 1.0);
  require(D.dim() == n, "validation region dimension must equal n");
  const auto& L = model.lipschitz();

  ModelValidationReport rep;
  rep.samples = samples;
  rep.seed = seed;

  auto probe = [&](const Vec& x, const Vec& xp, const Vec& u, const Vec& up) {
    const double dx = inf_norm(Vec(x - xp));
    const double du = inf_norm(Vec(u - up));
    const double df = inf_norm(Vec(model.drift(x, u) - model.drift(xp, up)));
    const double denom = L.L_x * dx + L.L_u * du;
    if (df > 0) rep.drift_ratio = std::max(rep.drift_ratio, denom > 0 ? df / denom : HUGE_VAL);
    const double ds = inf_norm(Mat(model.diffusion(x) - model.diffusion(xp)));
    if (ds > 0) rep.diffusion_ratio = std::max(rep.diffusion_ratio, L.Z * dx > 0 ? ds / (L.Z * dx) : HUGE_VAL);
  };

  Engine eng(derive_seed(seed, 0));
  for (std::size_t s = 0; s < samples; ++s) {
    probe(uniform_in(D, eng), uniform_in(D, eng), sample_input(model.inputs(), eng), sample_input(model.inputs(), eng));
  }

  // Operator norms are attained on sign vectors of the maximizing rows.
  if (const auto* lin = model.linear_dynamics()) {
    const Vec zero_x = Vec::Zero(static_cast<Eigen::Index>(n));
    const Vec zero_u = Vec::Zero(static_cast<Eigen::Index>(model.m()));
    for (Eigen::Index i = 0; i < lin->A.rows(); ++i) {
      probe(sign_of(lin->A.row(i)), zero_x, zero_u, zero_u);
      probe(zero_x, zero_x, sign_of(lin->B.row(i)), zero_u);
      probe(sign_of(model.diffusion_channels().front().row(i)), zero_x, zero_u, zero_u);
    }
  }
  rep.pass = rep.drift_ratio <= 1.0 + 1e-6 && rep.diffusion_ratio <= 1.0 + 1e-6;
  return rep;
}

}  // namespace stochsynth
