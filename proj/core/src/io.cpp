#include "stochsynth/io.hpp"

#include "stochsynth/errors.hpp"

#include <fstream>
#include <sstream>

namespace stochsynth {

namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Parse, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// Wraps nlohmann type errors so every malformed document surfaces as Parse.
template <class F>
static auto parsing(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string(what) + ": " + e.what());
  }
}

Vec vec_from_json(const json& j) {
  return parsing("vector", [&] {
    if (!j.is_array()) throw Error(ErrorKind::Parse, "expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
  });
}

Mat mat_from_json(const json& j) {
  return parsing("matrix", [&] {
    if (!j.is_array() || j.empty()) throw Error(ErrorKind::Parse, "expected a non-empty array of rows");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      if (!j[r].is_array() || j[r].size() != cols) throw Error(ErrorKind::Parse, "matrix rows differ in length");
      for (std::size_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
  });
}

json to_json(const Vec& v) {
  json j = json::array();
  for (double x : v) j.push_back(x);
  return j;
}

json to_json(const Mat& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Vec(m.row(r).transpose())));
  return j;
}

Box box_from_json(const json& j) {
  return parsing("box", [&] {
    if (!j.is_array() || j.empty()) throw Error(ErrorKind::Parse, "box must be a non-empty list of [lo, hi]");
    Vec lo(static_cast<Eigen::Index>(j.size())), hi(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_array() || j[i].size() != 2) throw Error(ErrorKind::Parse, "box edge must be [lo, hi]");
      lo[static_cast<Eigen::Index>(i)] = j[i][0].get<double>();
      hi[static_cast<Eigen::Index>(i)] = j[i][1].get<double>();
    }
    if ((lo.array() > hi.array()).any()) throw Error(ErrorKind::Parse, "box edge has lo > hi");
    return Box(lo, hi);
  });
}

json to_json(const Box& b) {
  json j = json::array();
  for (std::size_t i = 0; i < b.dim(); ++i) j.push_back({b.lo[static_cast<Eigen::Index>(i)], b.hi[static_cast<Eigen::Index>(i)]});
  return j;
}

// ---------------------------------------------------------------------------

static InputSet inputs_from_json(const json& j) {
  if (j.contains("finite")) {
    std::vector<Vec> pts;
    for (const json& p : j.at("finite")) pts.push_back(vec_from_json(p));
    return InputSet::finite(std::move(pts));
  }
  if (j.contains("boxes")) {
    std::vector<Box> boxes;
    for (const json& b : j.at("boxes")) boxes.push_back(box_from_json(b));
    return InputSet::boxes(std::move(boxes));
  }
  throw Error(ErrorKind::Parse, "inputs must have a 'finite' or 'boxes' member");
}

ScsModel model_from_json(const json& j) {
  return parsing("model", [&] {
    const auto n = j.at("n").get<std::size_t>();
    const auto p = j.at("p").get<std::size_t>();
    Mat A = mat_from_json(j.at("A"));
    Mat B = mat_from_json(j.at("B"));
    std::vector<Mat> G;
    for (const json& g : j.at("G")) G.push_back(mat_from_json(g));
    if (static_cast<std::size_t>(A.rows()) != n) throw Error(ErrorKind::InvalidModel, "A does not have n rows");
    if (G.size() != p) throw Error(ErrorKind::InvalidModel, "G must list p matrices");
    std::optional<LipschitzConstants> lc;
    if (j.contains("lipschitz")) {
      const json& l = j.at("lipschitz");
      lc = LipschitzConstants{l.at("L_x").get<double>(), l.at("L_u").get<double>(), l.at("Z").get<double>()};
    }
    return ScsModel::linear(std::move(A), std::move(B), std::move(G), inputs_from_json(j.at("inputs")), lc);
  });
}

json to_json(const ScsModel& model) {
  json j;
  j["n"] = model.n();
  j["p"] = model.p();
  if (const auto* lin = model.linear_dynamics()) {
    j["A"] = to_json(lin->A);
    j["B"] = to_json(lin->B);
  }
  json G = json::array();
  for (const Mat& g : model.diffusion_channels()) G.push_back(to_json(g));
  j["G"] = G;
  j["lipschitz"] = {{"L_x", model.lipschitz().L_x}, {"L_u", model.lipschitz().L_u}, {"Z", model.lipschitz().Z}};
  json in;
  if (model.inputs().is_finite()) {
    in["finite"] = json::array();
    for (const Vec& p : model.inputs().points()) in["finite"].push_back(to_json(p));
  } else {
    in["boxes"] = json::array();
    for (const Box& b : model.inputs().box_list()) in["boxes"].push_back(to_json(b));
  }
  j["inputs"] = in;
  return j;
}

LyapunovCertificate certificate_from_json(const json& j) {
  return parsing("certificate", [&] {
    LyapunovCertificate c;
    c.P = mat_from_json(j.at("P"));
    c.kappa = j.at("kappa").get<double>();
    c.q = j.at("q").get<double>();
    const auto form = j.value("form", std::string("quadratic"));
    if (form == "quadratic") c.form = CertificateForm::Quadratic;
    else if (form == "sqrt") c.form = CertificateForm::SqrtQuadratic;
    else throw Error(ErrorKind::Parse, "form must be 'quadratic' or 'sqrt'");
    if (j.contains("rho")) c.rho = {j.at("rho").at("coeff").get<double>(), j.at("rho").value("exp", 1.0)};
    const json& a = j.at("alpha");
    if (a.is_string()) {
      if (a.get<std::string>() != "half-eigen") throw Error(ErrorKind::Parse, "alpha must be {lo, hi} or 'half-eigen'");
      c.half_eigen_convention = true;
      if (c.P.rows() == c.P.cols()) std::tie(c.alpha_lo, c.alpha_hi) = half_eigen_slopes(c.P);
    } else {
      c.alpha_lo = a.at("lo").get<double>();
      c.alpha_hi = a.at("hi").get<double>();
    }
    if (j.contains("working_box")) c.working_box = box_from_json(j.at("working_box"));
    if (j.contains("gamma_hat")) c.gamma_hat = j.at("gamma_hat").get<double>();
    return c;
  });
}

json to_json(const LyapunovCertificate& c) {
  json j;
  j["P"] = to_json(c.P);
  j["kappa"] = c.kappa;
  j["q"] = c.q;
  j["form"] = c.form == CertificateForm::Quadratic ? "quadratic" : "sqrt";
  j["rho"] = {{"coeff", c.rho.coeff}, {"exp", c.rho.exp}};
  j["alpha"] = {{"lo", c.alpha_lo}, {"hi", c.alpha_hi}};
  if (c.working_box) j["working_box"] = to_json(*c.working_box);
  if (c.gamma_hat) j["gamma_hat"] = *c.gamma_hat;
  return j;
}

SafetySpec spec_from_json(const json& j) {
  return parsing("spec", [&] {
    SafetySpec s;
    s.W = box_from_json(j.at("W"));
    s.shrink = j.value("shrink", 0.0);
    s.fairness_k = j.value("fairness_k", std::size_t{3});
    if (j.contains("preference")) s.preference = j.at("preference").get<std::vector<std::size_t>>();
    require(s.shrink >= 0.0, "shrink must be nonnegative");
    require(s.fairness_k >= 1, "fairness_k must be at least 1");
    if (s.safe_box().degenerate()) throw Error(ErrorKind::Parse, "W is degenerate after shrinking");
    return s;
  });
}

json to_json(const SafetySpec& s) {
  return {{"W", to_json(s.W)}, {"shrink", s.shrink}, {"fairness_k", s.fairness_k}, {"preference", s.preference}};
}

// ---------------------------------------------------------------------------

ProjectConfig load_project(const fs::path& path) {
  const json j = read_json_file(path);
  const fs::path dir = path.parent_path();
  auto resolve = [&](const char* key) {
    const fs::path p = parsing(key, [&] { return fs::path(j.at(key).get<std::string>()); });
    return p.is_absolute() ? p : dir / p;
  };
  ProjectConfig cfg(model_from_json(read_json_file(resolve("model"))));
  cfg.path = path;
  cfg.cert = certificate_from_json(read_json_file(resolve("certificate")));
  cfg.spec = spec_from_json(read_json_file(resolve("spec")));

  const std::size_t n = cfg.model.n();
  if (static_cast<std::size_t>(cfg.cert.P.rows()) != n)
    throw Error(ErrorKind::Parse, "certificate dimension does not match the model");
  if (cfg.spec.W.dim() != n) throw Error(ErrorKind::Parse, "spec W dimension does not match the model");

  parsing("project", [&] {
    const json& p = j.at("params");
    cfg.tau = p.at("tau").get<double>();
    cfg.epsilon = p.at("epsilon").get<double>();
    cfg.mode = parse_mode(p.value("mode", std::string("lyap-noise-free")));
    cfg.x_s = vec_from_json(p.at("x_s"));
    cfg.search.N_max = p.value("N_max", cfg.search.N_max);
    if (p.contains("mu_grid")) cfg.search.mu_grid = p.at("mu_grid").get<std::vector<double>>();
    if (p.contains("N")) cfg.search.pinned_N = p.at("N").get<std::size_t>();
    cfg.search.quad_steps = p.value("quad_steps", cfg.search.quad_steps);
    cfg.search.ode_steps = p.value("ode_steps", cfg.search.ode_steps);
    cfg.search.mc.samples = p.value("eta_samples", cfg.search.mc.samples);
    cfg.source_iters = p.value("source_iters", std::size_t{0});

    const json s = j.value("sim", json::object());
    if (s.contains("dt")) cfg.dt = s.at("dt").get<double>();
    else if (s.contains("dt_divisor")) cfg.dt = cfg.tau / s.at("dt_divisor").get<double>();
    else cfg.dt = default_dt(cfg.tau);
    cfg.seed = s.value("seed", std::uint64_t{0});
    cfg.x0 = s.contains("x0") ? vec_from_json(s.at("x0")) : cfg.x_s;
    cfg.runs = s.value("runs", cfg.runs);
    cfg.periods = s.value("periods", cfg.periods);
    if (s.contains("reference_schedule"))
      cfg.reference_schedule = s.at("reference_schedule").get<std::vector<std::size_t>>();
    cfg.search.mc.seed = cfg.seed;
    cfg.search.mc.dt = cfg.dt;

    cfg.validation_samples = j.value("validation", json::object()).value("samples", cfg.validation_samples);

    if (j.contains("labeling")) {
      const json& l = j.at("labeling");
      LabelingConfig lc;
      lc.theta = l.at("theta").get<double>();
      lc.pi = l.value("pi", lc.pi);
      lc.r = l.at("r").get<double>();
      lc.delta = l.value("delta", default_delta(cfg.epsilon));
      lc.q = cfg.cert.q;
      lc.sample_cap = l.value("sample_cap", lc.sample_cap);
      cfg.labeling = lc;
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      cfg.grid_nu = g.at("nu").get<double>();
      if (g.contains("box")) cfg.grid_box = box_from_json(g.at("box"));
    }
    cfg.output_dir = j.contains("output") ? resolve("output") : dir / "out";
    return 0;
  });

  if (static_cast<std::size_t>(cfg.x_s.size()) != n) throw Error(ErrorKind::Parse, "x_s dimension does not match the model");
  if (static_cast<std::size_t>(cfg.x0.size()) != n) throw Error(ErrorKind::Parse, "x0 dimension does not match the model");
  if (!(cfg.tau > 0.0) || !(cfg.epsilon > 0.0)) throw Error(ErrorKind::Parse, "tau and epsilon must be positive");
  return cfg;
}

// ---------------------------------------------------------------------------

json to_json(const ModelValidationReport& r) {
  return {{"samples", r.samples}, {"seed", r.seed}, {"drift_ratio", r.drift_ratio},
          {"diffusion_ratio", r.diffusion_ratio}, {"pass", r.pass}};
}

json to_json(const CertificateReport& r) {
  return {{"samples", r.samples}, {"seed", r.seed},          {"structure_ok", r.structure_ok},
          {"problems", r.problems}, {"max_margin", r.max_margin}, {"pass", r.pass}};
}

json to_json(const ConditionTerms& t) {
  return {{"N", t.N},
          {"mu", t.mu},
          {"eta", t.eta},
          {"eta_std_error", t.eta_std_error},
          {"h", t.h},
          {"gamma_hat", t.gamma_hat},
          {"decay_term", t.decay_term},
          {"mu_term", t.mu_term},
          {"tau_term", t.tau_term},
          {"mismatch_term", t.mismatch_term},
          {"lhs", t.lhs},
          {"rhs", t.rhs},
          {"holds", t.holds}};
}

json to_json(const FeasibilityReport& r) {
  json trace = json::array();
  for (const ConditionTerms& t : r.trace) trace.push_back({t.N, t.mu, t.lhs, t.rhs});
  json j = {{"status", std::string(to_string(r.status))},
            {"mode", std::string(to_string(r.mode))},
            {"tau", r.tau},
            {"epsilon", r.epsilon},
            {"q", r.q},
            {"x_s", to_json(r.x_s)},
            {"N_max", r.N_max},
            {"terms", to_json(r.terms)},
            {"trace_columns", {"N", "mu", "lhs", "rhs"}},
            {"trace", trace},
            {"message", r.message}};
  j["pinned_N"] = r.pinned_N ? json(*r.pinned_N) : json(nullptr);
  return j;
}

json to_json(const GridComparison& g) {
  return {{"criterion_value", g.criterion_value},
          {"word_states", g.word_states},
          {"grid_nu", g.grid_nu},
          {"grid_states", g.grid_states},
          {"recommendation", g.prefer_words ? "words" : "grid"}};
}

json to_json(const Schedule& s) {
  return {{"source", s.source}, {"prefix", s.prefix}, {"period", s.period},
          {"metric", {{"preferred_fraction", s.preferred_fraction}}}};
}

json to_json(const ScheduleAudit& a) {
  return {{"winning_ok", a.winning_ok}, {"fairness_ok", a.fairness_ok}, {"fairness_checked", a.fairness_checked},
          {"cycle_ok", a.cycle_ok},     {"visited", a.visited},         {"problems", a.problems},
          {"pass", a.pass()}};
}

json to_json(const QuantizedInputs& qi) {
  json pts = json::array();
  for (const Vec& p : qi.points) pts.push_back(to_json(p));
  return {{"mu", qi.mu}, {"points", pts}};
}

json controller_json(const Schedule& s) {
  return {{"prefix", s.prefix}, {"period", s.period}, {"source", s.source},
          {"metric", {{"preferred_fraction", s.preferred_fraction}}}};
}

Schedule schedule_from_json(const json& j) {
  return parsing("controller", [&] {
    Schedule s;
    s.prefix = j.value("prefix", std::vector<std::size_t>{});
    s.period = j.at("period").get<std::vector<std::size_t>>();
    s.source = j.value("source", std::uint64_t{0});
    if (j.contains("metric")) s.preferred_fraction = j.at("metric").value("preferred_fraction", 0.0);
    return s;
  });
}

}  // namespace stochsynth
