#include "stochsynth/cli.hpp"

#include "stochsynth/abstraction.hpp"
#include "stochsynth/errors.hpp"
#include "stochsynth/io.hpp"
#include "stochsynth/lyapunov.hpp"
#include "stochsynth/mc_label.hpp"
#include "stochsynth/safety.hpp"
#include "stochsynth/sde.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>

namespace stochsynth::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFeasibility = "feasibility.json";
constexpr const char* kDescriptor = "abstraction.json";
constexpr const char* kController = "controller.json";

struct Context {
  ProjectConfig cfg;
  fs::path out;
  std::size_t threads;

  explicit Context(const Options& opt) : cfg(load_project(opt.config)), threads(opt.threads) {
    if (opt.seed) {
      cfg.seed = *opt.seed;
      cfg.search.mc.seed = *opt.seed;
    }
    if (opt.epsilon) cfg.epsilon = *opt.epsilon;
    if (opt.tau) {
      // Keep the configured number of Euler-Maruyama steps per tau.
      const double ratio = cfg.tau / cfg.dt;
      cfg.tau = *opt.tau;
      cfg.dt = cfg.tau / std::round(ratio);
      cfg.search.mc.dt = cfg.dt;
    }
    if (opt.mode) cfg.mode = parse_mode(*opt.mode);
    if (opt.runs) cfg.runs = *opt.runs;
    if (opt.periods) cfg.periods = *opt.periods;
    cfg.search.mc.threads = opt.threads;
    require(cfg.epsilon > 0.0 && cfg.tau > 0.0, "epsilon and tau must be positive");
    out = opt.out ? *opt.out : cfg.output_dir;
    fs::create_directories(out);
  }
};

// Abstraction descriptor as written by `abstract`.
struct Descriptor {
  AbstractionParams params;
  bool certified = false;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

json descriptor_json(const ProjectConfig& cfg, const FeasibilityReport& rep, const QuantizedInputs& qi,
                     std::uint64_t state_count) {
  const AbstractionParams p = rep.params();
  return {{"tau", p.tau},
          {"mu", p.mu},
          {"N", p.N},
          {"x_s", to_json(p.x_s)},
          {"epsilon", p.epsilon},
          {"mode", std::string(to_string(p.mode))},
          {"output_kind", is_probabilistic(p.mode) ? "probabilistic" : "noise-free"},
          {"inputs", to_json(qi)},
          {"state_count", state_count},
          {"eta", rep.terms.eta},
          {"initial_set_radius", initial_set_radius(cfg.cert, p.epsilon, p.mode)},
          {"certified", rep.feasible()},
          {"status", std::string(to_string(rep.status))},
          {"seed", cfg.seed}};
}

Descriptor load_descriptor(const fs::path& out) {
  const fs::path path = out / kDescriptor;
  if (!fs::exists(path)) throw Error(ErrorKind::Parse, "missing " + path.string() + " (run `abstract` first)");
  const json j = read_json_file(path);
  try {
    Descriptor d;
    d.params.tau = j.at("tau").get<double>();
    d.params.mu = j.at("mu").get<double>();
    d.params.N = j.at("N").get<std::size_t>();
    d.params.x_s = vec_from_json(j.at("x_s"));
    d.params.epsilon = j.at("epsilon").get<double>();
    d.params.mode = parse_mode(j.at("mode").get<std::string>());
    d.certified = j.at("certified").get<bool>();
    d.eta = j.at("eta").get<double>();
    d.seed = j.value("seed", std::uint64_t{0});
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

SimConfig sim_config(const Context& ctx, std::size_t samples = 1) {
  SimConfig s;
  s.dt = ctx.cfg.dt;
  s.seed = ctx.cfg.seed;
  s.samples = samples;
  s.threads = ctx.threads;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_validate(const Options& opt) {
  Context ctx(opt);
  const ProjectConfig& cfg = ctx.cfg;
  const ModelValidationReport mrep = validate_model(cfg.model, cfg.validation_samples, cfg.seed, cfg.cert.working_box);
  json doc = {{"seed", cfg.seed}, {"model", to_json(mrep)}};
  bool cert_ok = false;
  try {
    const CertificateReport crep = check_certificate(cfg.model, cfg.cert, cfg.validation_samples, cfg.seed);
    doc["certificate"] = to_json(crep);
    cert_ok = crep.pass;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UnsupportedForm) throw;
    doc["certificate"] = {{"pass", false}, {"problems", {e.what()}}};
  }
  const bool ok = mrep.pass && cert_ok;
  doc["pass"] = ok;
  write_json_file(ctx.out / "validation.json", doc);
  std::cout << "validate: model " << (mrep.pass ? "ok" : "FAILED") << ", certificate " << (cert_ok ? "ok" : "FAILED")
            << '\n';
  return ok ? kOk : kCertificateFailed;
}

int cmd_abstract(const Options& opt) {
  Context ctx(opt);
  ProjectConfig& cfg = ctx.cfg;
  Vec x_s = cfg.x_s;
  if (cfg.source_iters > 0) {
    const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), cfg.search.mu_grid.empty() ? 0.0 : cfg.search.mu_grid.front());
    x_s = optimize_source_state(cfg.model, cfg.cert, cfg.tau, qi, x_s, cfg.source_iters, cfg.search.ode_steps);
  }
  const FeasibilityReport rep = search_parameters(cfg.model, cfg.cert, cfg.tau, cfg.epsilon, cfg.mode, x_s, cfg.search);

  json doc = to_json(rep);
  doc["seed"] = cfg.seed;
  if (cfg.search.pinned_N) {
    // Record what the unpinned search concludes so the pin is auditable.
    SearchSettings free = cfg.search;
    free.pinned_N.reset();
    const FeasibilityReport alt = search_parameters(cfg.model, cfg.cert, cfg.tau, cfg.epsilon, cfg.mode, x_s, free);
    doc["unpinned"] = {{"status", std::string(to_string(alt.status))},
                       {"N", alt.feasible() ? json(alt.terms.N) : json(nullptr)}};
  }
  if (cfg.grid_nu) {
    const Box box = cfg.grid_box ? *cfg.grid_box : cfg.cert.working_box ? *cfg.cert.working_box : cfg.spec.W;
    const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), rep.terms.mu);
    doc["comparison"] = to_json(compare_with_grid(cfg.model, cfg.cert, rep.params(), qi, box, *cfg.grid_nu));
  }
  write_json_file(ctx.out / kFeasibility, doc);

  const bool has_N = rep.status == FeasibilityStatus::Feasible || rep.status == FeasibilityStatus::InfeasibleAtPinnedN;
  fs::remove(ctx.out / kDescriptor);
  if (has_N) {
    const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), rep.terms.mu);
    std::uint64_t count = 0;
    try {
      count = WordCodec(qi.size(), rep.terms.N).state_count();
    } catch (const Error&) {
      count = 0;  // too large to index; recorded as 0
    }
    write_json_file(ctx.out / kDescriptor, descriptor_json(cfg, rep, qi, count));
  }
  std::cout << "abstract: " << to_string(rep.status) << " (" << rep.message << ")\n";
  return rep.feasible() ? kOk : kInfeasible;
}

int cmd_synthesize(const Options& opt) {
  Context ctx(opt);
  const ProjectConfig& cfg = ctx.cfg;
  const Descriptor d = load_descriptor(ctx.out);
  const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), d.params.mu);
  const bool prob = is_probabilistic(d.params.mode);
  const SymbolicModel sym(cfg.model, d.params, qi, prob ? OutputKind::Probabilistic : OutputKind::NoiseFree, d.eta,
                          cfg.search.ode_steps, sim_config(ctx));

  json doc = {{"seed", cfg.seed},
              {"certified", d.certified},
              {"N", d.params.N},
              {"state_count", sym.codec().state_count()},
              {"spec", to_json(cfg.spec)},
              {"fairness_enforced", fairness_enforced(d.params.N, cfg.spec.fairness_k)}};
  std::optional<MonteCarloLabeler> labeler;
  if (prob) {
    require(cfg.labeling.has_value(), "probabilistic modes need a 'labeling' section");
    labeler.emplace(sym, *cfg.labeling);
  }
  Bitset win;
  try {
    win = compute_winning_set(sym, cfg.spec, labeler ? &*labeler : nullptr, ctx.threads);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyWinningSet) throw;
    doc["winning_count"] = 0;
    doc["message"] = e.what();
    write_json_file(ctx.out / "synthesis.json", doc);
    fs::remove(ctx.out / kController);
    std::cout << "synthesize: empty winning set\n";
    return kEmptyWinningSet;
  }
  const Schedule sched = extract_schedule(sym.codec(), win, cfg.spec);
  const ScheduleAudit audit = audit_schedule(sym.codec(), win, cfg.spec, sched);
  doc["winning_count"] = win.count();
  doc["schedule"] = to_json(sched);
  doc["audit"] = to_json(audit);
  if (!cfg.reference_schedule.empty()) {
    const Schedule ref = periodic_schedule(sym.codec(), cfg.reference_schedule);
    doc["reference_audit"] = to_json(audit_schedule(sym.codec(), win, cfg.spec, ref));
  }
  write_json_file(ctx.out / "synthesis.json", doc);
  json ctrl = controller_json(sched);
  ctrl["certified"] = d.certified;
  ctrl["seed"] = cfg.seed;
  write_json_file(ctx.out / kController, ctrl);
  std::cout << "synthesize: " << win.count() << " winning states, period length " << sched.period.size()
            << (d.certified ? "" : " (uncertified abstraction)") << '\n';
  return audit.pass() ? kOk : kInfeasible;
}

int cmd_simulate(const Options& opt) {
  Context ctx(opt);
  const ProjectConfig& cfg = ctx.cfg;
  const Descriptor d = load_descriptor(ctx.out);
  const fs::path cpath = ctx.out / kController;
  if (!fs::exists(cpath)) throw Error(ErrorKind::Parse, "missing " + cpath.string() + " (run `synthesize` first)");
  const Schedule sched = schedule_from_json(read_json_file(cpath));
  const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), d.params.mu);
  const InputCurve curve = refine_controller(sched, qi, d.params.tau);
  const std::size_t horizon = sched.prefix.size() + cfg.periods * sched.period.size();
  SimConfig sc = sim_config(ctx);
  sc.dt = d.params.tau / std::round(d.params.tau / cfg.dt);
  const ClosedLoopResult res = closed_loop_run(cfg.model, curve, cfg.x0, cfg.spec.W, cfg.runs, horizon, sc, cfg.cert.q);

  std::ofstream csv(ctx.out / "closed_loop.csv");
  if (!csv) throw Error(ErrorKind::Parse, "cannot write closed_loop.csv");
  res.write_csv(csv);
  const double max_moment = *std::max_element(res.moment_distance.begin(), res.moment_distance.end());
  const json doc = {{"seed", cfg.seed},
                    {"runs", cfg.runs},
                    {"periods", cfg.periods},
                    {"horizon_steps", horizon},
                    {"dt", sc.dt},
                    {"x0", to_json(cfg.x0)},
                    {"max_mean_distance", res.max_mean()},
                    {"argmax_time", res.time[res.argmax()]},
                    {"time_average_distance", res.time_average()},
                    {"max_moment_distance", max_moment},
                    {"epsilon", d.params.epsilon},
                    {"below_epsilon", res.max_mean() < d.params.epsilon}};
  write_json_file(ctx.out / "simulation.json", doc);
  std::cout << "simulate: max mean distance to W " << res.max_mean() << " over " << cfg.runs << " runs\n";
  return kOk;
}

int cmd_compare(const Options& opt) {
  Context ctx(opt);
  const ProjectConfig& cfg = ctx.cfg;
  if (!cfg.grid_nu) throw Error(ErrorKind::Parse, "compare needs a 'grid' section with 'nu'");
  AbstractionParams p{cfg.tau, 0.0, cfg.search.pinned_N.value_or(1), cfg.x_s, cfg.epsilon, cfg.mode};
  if (fs::exists(ctx.out / kDescriptor)) p = load_descriptor(ctx.out).params;
  const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), p.mu);
  const Box box = cfg.grid_box ? *cfg.grid_box : cfg.cert.working_box ? *cfg.cert.working_box : cfg.spec.W;
  const GridComparison g = compare_with_grid(cfg.model, cfg.cert, p, qi, box, *cfg.grid_nu);
  json doc = to_json(g);
  doc["N"] = p.N;
  doc["tau"] = p.tau;
  doc["box"] = to_json(box);
  write_json_file(ctx.out / "comparison.json", doc);
  std::cout << "compare: criterion " << g.criterion_value << ", recommend " << (g.prefer_words ? "words" : "grid")
            << '\n';
  return kOk;
}

int cmd_label(const Options& opt) {
  Context ctx(opt);
  const ProjectConfig& cfg = ctx.cfg;
  if (!cfg.labeling) throw Error(ErrorKind::Parse, "label needs a 'labeling' section");
  const Descriptor d = load_descriptor(ctx.out);
  const QuantizedInputs qi = quantize_input_set(cfg.model.inputs(), d.params.mu);
  const SymbolicModel sym(cfg.model, d.params, qi, OutputKind::Probabilistic, d.eta, cfg.search.ode_steps,
                          sim_config(ctx));
  const Box A = cfg.spec.safe_box();
  json doc = {{"seed", cfg.seed}, {"set", to_json(A)}, {"theta", cfg.labeling->theta}, {"pi", cfg.labeling->pi},
              {"r", cfg.labeling->r},  {"delta", cfg.labeling->delta}};
  const MonteCarloLabeler labeler(sym, *cfg.labeling);
  try {
    doc["M"] = labeler.samples_for(A);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SampleBudgetExceeded) throw;
    doc["message"] = e.what();
    doc["states"] = json::array();
    write_json_file(ctx.out / "labels.json", doc);
    std::cout << "label: " << e.what() << '\n';
    return kInfeasible;
  }
  const std::uint64_t S = sym.codec().state_count();
  require(S <= (1u << 16), "label writes one entry per state; the abstraction is too large");
  json states = json::array();
  for (std::uint64_t s = 0; s < S; ++s) {
    const LabelResult r = labeler.label(s, A);
    states.push_back({{"state", s},
                      {"word", sym.codec().decode(s)},
                      {"d_rM", r.distance},
                      {"M", r.M},
                      {"label", r.label == Label::Safe ? "safe" : "unsafe"},
                      {"confidence", r.confidence}});
  }
  doc["states"] = states;
  write_json_file(ctx.out / "labels.json", doc);
  std::cout << "label: " << S << " states labeled\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"stochsynth: symbolic controller synthesis for stochastic control systems"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "project configuration file")->required();
    sub->add_option("--seed", opt.seed, "random seed (overrides the config)");
    sub->add_option("--threads", opt.threads, "worker threads (0: STOCHSYNTH_THREADS or hardware)");
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
  };
  auto* validate = app.add_subcommand("validate", "check the model's Lipschitz constants and the certificate");
  auto* abstract = app.add_subcommand("abstract", "select abstraction parameters and write the descriptor");
  auto* synthesize = app.add_subcommand("synthesize", "solve the safety game and extract a schedule");
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo closed-loop simulation of the controller");
  auto* compare = app.add_subcommand("compare", "compare the word abstraction with a state grid");
  auto* label = app.add_subcommand("label", "Monte-Carlo labeling of abstract states against the safe set");
  for (auto* sub : {validate, abstract, synthesize, simulate, compare, label}) common(sub);
  for (auto* sub : {abstract, compare}) {
    sub->add_option("--epsilon", opt.epsilon, "precision");
    sub->add_option("--tau", opt.tau, "sampling time");
    sub->add_option("--mode", opt.mode,
                    "lyap-noise-free | kl-noise-free | lyap-prob | kl-prob | det-lyap | det-kl");
  }
  simulate->add_option("--runs", opt.runs, "number of simulated runs");
  simulate->add_option("--periods", opt.periods, "schedule periods to simulate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoError;
  }

  const std::pair<CLI::App*, std::function<int(const Options&)>> table[] = {
      {validate, cmd_validate}, {abstract, cmd_abstract}, {synthesize, cmd_synthesize},
      {simulate, cmd_simulate}, {compare, cmd_compare},   {label, cmd_label}};
  try {
    for (const auto& [sub, fn] : table)
      if (sub->parsed()) return fn(opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::UnsupportedForm: return kCertificateFailed;
      case ErrorKind::InfeasibleAtTau:
      case ErrorKind::NoFeasibleN:
      case ErrorKind::SampleBudgetExceeded: return kInfeasible;
      case ErrorKind::EmptyWinningSet: return kEmptyWinningSet;
      default: return kIoError;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kIoError;
}

}  // namespace stochsynth::cli
