#pragma once

#include "stochsynth/abstraction.hpp"
#include "stochsynth/lyapunov.hpp"
#include "stochsynth/mc_label.hpp"
#include "stochsynth/model.hpp"
#include "stochsynth/safety.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace stochsynth {

using json = nlohmann::json;

/// Reads and parses a JSON file; throws Error{Parse} on I/O or syntax errors.
json read_json_file(const std::filesystem::path& path);
/// Writes `doc` with two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& doc);

Vec vec_from_json(const json& j);
Mat mat_from_json(const json& j);
json to_json(const Vec& v);
json to_json(const Mat& m);

/// Boxes are written as [[lo_1, hi_1], ..., [lo_n, hi_n]].
Box box_from_json(const json& j);
json to_json(const Box& b);

/// {"n", "p", "A", "B", "G", "lipschitz"?, "inputs": {"finite": [...]} | {"boxes": [...]}}
ScsModel model_from_json(const json& j);
json to_json(const ScsModel& model);

/// {"P", "kappa", "q", "form": "quadratic"|"sqrt", "rho": {"coeff", "exp"},
///  "alpha": {"lo", "hi"} | "half-eigen", "working_box"?, "gamma_hat"?}
LyapunovCertificate certificate_from_json(const json& j);
json to_json(const LyapunovCertificate& cert);

/// {"W", "shrink"?, "fairness_k"?, "preference"?}
SafetySpec spec_from_json(const json& j);
json to_json(const SafetySpec& spec);

struct ProjectConfig {
  explicit ProjectConfig(ScsModel m) : model(std::move(m)) {}

  std::filesystem::path path;  // the config file itself
  ScsModel model;
  LyapunovCertificate cert;
  SafetySpec spec;

  // Abstraction parameters.
  double tau = 0.0;
  double epsilon = 0.0;
  BisimMode mode = BisimMode::LyapunovNoiseFree;
  Vec x_s;
  SearchSettings search;
  std::size_t source_iters = 0;  // > 0 runs optimize_source_state from x_s

  // Simulation.
  double dt = 0.0;
  std::uint64_t seed = 0;
  Vec x0;
  std::size_t runs = 100;
  std::size_t periods = 1;
  std::vector<std::size_t> reference_schedule;

  // Validation sampling.
  std::size_t validation_samples = 1000;

  // Monte-Carlo labeling (probabilistic modes).
  std::optional<LabelingConfig> labeling;

  // Grid comparison.
  std::optional<double> grid_nu;
  std::optional<Box> grid_box;

  std::filesystem::path output_dir;
};

/// Loads a project file; model, certificate and spec paths are resolved relative
/// to the project file. Cross-validates dimensions.
ProjectConfig load_project(const std::filesystem::path& path);

json to_json(const ModelValidationReport& r);
json to_json(const CertificateReport& r);
json to_json(const ConditionTerms& t);
json to_json(const FeasibilityReport& r);
json to_json(const GridComparison& g);
json to_json(const Schedule& s);
json to_json(const ScheduleAudit& a);
json to_json(const QuantizedInputs& qi);

/// Controller document {"prefix", "period", "metric": {"preferred_fraction"}}.
json controller_json(const Schedule& s);
Schedule schedule_from_json(const json& j);

}  // namespace stochsynth
