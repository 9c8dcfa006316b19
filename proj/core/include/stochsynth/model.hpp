#pragma once

#include "stochsynth/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace stochsynth {

/// Input set U: a finite union of boxes or a finite list of points.
class InputSet {
public:
  struct Boxes {
    std::vector<Box> boxes;
  };
  struct Finite {
    std::vector<Vec> points;
  };

  static InputSet boxes(std::vector<Box> boxes);
  static InputSet finite(std::vector<Vec> points);

  bool is_finite() const { return std::holds_alternative<Finite>(data_); }
  std::size_t dim() const { return dim_; }
  const std::vector<Box>& box_list() const;
  const std::vector<Vec>& points() const;
  /// sup_{u in U} |u|.
  double sup_norm() const;

private:
  explicit InputSet(std::variant<Boxes, Finite> d, std::size_t dim) : data_(std::move(d)), dim_(dim) {}
  std::variant<Boxes, Finite> data_;
  std::size_t dim_ = 0;
};

/// The quantized input alphabet U_q. Point i is input index i of abstract words.
struct QuantizedInputs {
  double mu = 0.0;
  std::vector<Vec> points;

  std::size_t size() const { return points.size(); }
};

/// Minimum edge length over all boxes of U.
double span(const InputSet& inputs);

/// [U]_mu for box unions (lexicographic, deduplicated), or the finite set
/// itself in declaration order when U is finite and mu == 0.
QuantizedInputs quantize_input_set(const InputSet& inputs, double mu);

struct LipschitzConstants {
  double L_x = 0.0;
  double L_u = 0.0;
  double Z = 0.0;
};

struct LinearDynamics {
  Mat A;
  Mat B;
};

/// Evaluator hooks for drift and diffusion that are not linear.
struct CustomDynamics {
  std::function<Vec(const Vec& x, const Vec& u)> drift;
  std::function<Mat(const Vec& x)> diffusion;  // n x p
};

/// Stochastic control system dx = f(x,u) dt + sigma(x) dW.
///
/// Linear models carry the multiplicative diffusion sigma(x) = [G_1 x, ..., G_p x];
/// custom models route both terms through evaluators and must supply their own
/// Lipschitz constants.
class ScsModel {
public:
  /// Builds a linear model. When `lipschitz` is empty, L_x = |A|, L_u = |B| and
  /// Z = |[G_1 ... G_p]|. A supplied Z must agree with that value to 1e-9.
  static ScsModel linear(Mat A, Mat B, std::vector<Mat> G, InputSet inputs,
                         std::optional<LipschitzConstants> lipschitz = std::nullopt);
  static ScsModel custom(std::size_t n, std::size_t p, CustomDynamics dyn, InputSet inputs,
                         LipschitzConstants lipschitz);

  std::size_t n() const { return n_; }
  std::size_t m() const { return inputs_.dim(); }
  std::size_t p() const { return p_; }
  const InputSet& inputs() const { return inputs_; }
  const LipschitzConstants& lipschitz() const { return lipschitz_; }
  const LinearDynamics* linear_dynamics() const;
  const std::vector<Mat>& diffusion_channels() const { return G_; }
  bool is_linear() const { return std::holds_alternative<LinearDynamics>(kind_); }

  Vec drift(const Vec& x, const Vec& u) const;
  Mat diffusion(const Vec& x) const;
  /// sigma(x) * w for a p-vector w, without materializing sigma(x) for linear models.
  Vec diffusion_times(const Vec& x, const Vec& w) const;

private:
  ScsModel() = default;

  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::variant<LinearDynamics, CustomDynamics> kind_;
  std::vector<Mat> G_;
  InputSet inputs_ = InputSet::finite({Vec::Zero(1)});
  LipschitzConstants lipschitz_;
};

/// |[G_1 ... G_p]| in the induced infinity norm.
double diffusion_lipschitz(const std::vector<Mat>& G);

struct ModelValidationReport {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double drift_ratio = 0.0;      // max |f(x,u)-f(x',u')| / (L_x|x-x'| + L_u|u-u'|)
  double diffusion_ratio = 0.0;  // max |sigma(x)-sigma(x')| / (Z|x-x'|)
  bool pass = false;
};

/// Spot-checks the Lipschitz inequalities on random pairs drawn from `region`
/// (default [-1,1]^n) and from U. Linear models additionally probe the sign
/// vectors of each row of A, B and G_1, where the operator norms are attained.
ModelValidationReport validate_model(const ScsModel& model, std::size_t samples, std::uint64_t seed,
                                     const std::optional<Box>& region = std::nullopt);

}  // namespace stochsynth
