#pragma once

// The four CLI commands as library functions. Each one takes a fully
// resolved ExperimentConfig, writes its outputs plus config.json under
// `out`, and is deterministic in (config, seed).

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctkrm/experiment.hpp"
#include "ctkrm/io.hpp"
#include "ctkrm/validation.hpp"

namespace ctkrm {

inline constexpr const char* kVersion = "1.0.0";

struct GridSpec {
  double step = 0.0002;
  double end = 10.0;
};

struct ExperimentConfig {
  std::string command;
  DataBankSpec bank = databank_spec("D1");
  std::uint64_t seed = 0;
  std::optional<long> trials;  // overrides bank.trials
  int jobs = 1;
  std::string out;
  std::string data;       // generated data bank (estimate, evaluate)
  std::string estimates;  // estimate outputs (evaluate)
  Combo combo = Combo::ZohZa;
  bool transient = true;
  OptimizeOptions hyperopt;
  GridSpec grid;
  ValidationOptions validation;

  long trial_count() const { return trials.value_or(bank.trials); }
};

namespace detail {

inline void require_keys(const io::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
T get_checked(const io::json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const io::json::exception&) {
    throw std::invalid_argument("config: '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline io::json to_json(const ExperimentConfig& c) {
  io::json j;
  j["command"] = c.command;
  j["version"] = kVersion;
  j["bank"] = io::to_json(c.bank);
  j["seed"] = c.seed;
  j["trials"] = c.trial_count();
  if (!c.data.empty()) j["data"] = c.data;
  if (!c.estimates.empty()) j["estimates"] = c.estimates;
  j["estimator"] = {{"combo", std::string(to_string(c.combo))}, {"kernel", "dc"}, {"transient", c.transient}};
  const HyperBox& b = c.hyperopt.box;
  j["hyperopt"] = {{"starts", c.hyperopt.n_starts},
                   {"screen_evals", c.hyperopt.screen_evals},
                   {"max_evals", c.hyperopt.max_evals},
                   {"refine_starts", c.hyperopt.refine_starts},
                   {"box",
                    {{"alpha_min", b.alpha_min},
                     {"alpha_max", b.alpha_max},
                     {"ratio_max", b.ratio_max},
                     {"lambda_min", b.lambda_min},
                     {"lambda_max", b.lambda_max},
                     {"sigma2_min_rel", b.sigma2_min_rel},
                     {"sigma2_max_rel", b.sigma2_max_rel},
                     {"alpha_t_max", b.alpha_t_max}}}};
  j["grid"] = {{"step", c.grid.step}, {"end", c.grid.end}};
  io::json combos = io::json::array();
  for (Combo cb : c.validation.combos) combos.push_back(std::string(to_string(cb)));
  j["validation"] = {{"draws", c.validation.draws},
                     {"combos", combos},
                     {"covariance_instances", c.validation.covariance_instances},
                     {"tolerance", c.validation.tolerance},
                     {"lambda1_perturbation", c.validation.lambda1_perturbation}};
  return j;
}

/// Applies a JSON config document on top of `c`; unknown keys and wrong types are errors.
inline void apply_config(ExperimentConfig& c, const io::json& j) {
  detail::require_keys(j,
                       {"command", "version", "bank", "seed", "trials", "jobs", "out", "data", "estimates", "estimator",
                        "hyperopt", "grid", "validation"},
                       "config");
  if (j.contains("command")) c.command = detail::get_checked<std::string>(j, "command", "config");
  if (j.contains("bank")) {
    const auto& b = j.at("bank");
    if (b.is_string()) {
      c.bank = databank_spec(b.get<std::string>());
    } else {
      detail::require_keys(b,
                           {"name", "ts", "n", "snr_db", "trials", "window_start", "record_length", "validation_length",
                            "prbs_order", "prbs_divider", "den_a3"},
                           "bank");
      c.bank = io::bank_from_json(b);
    }
  }
  if (j.contains("seed")) c.seed = detail::get_checked<std::uint64_t>(j, "seed", "config");
  if (j.contains("trials")) c.trials = detail::get_checked<long>(j, "trials", "config");
  if (j.contains("jobs")) c.jobs = detail::get_checked<int>(j, "jobs", "config");
  if (j.contains("out")) c.out = detail::get_checked<std::string>(j, "out", "config");
  if (j.contains("data")) c.data = detail::get_checked<std::string>(j, "data", "config");
  if (j.contains("estimates")) c.estimates = detail::get_checked<std::string>(j, "estimates", "config");
  if (j.contains("estimator")) {
    const auto& e = j.at("estimator");
    detail::require_keys(e, {"combo", "kernel", "transient"}, "estimator");
    if (e.contains("combo")) c.combo = parse_combo(detail::get_checked<std::string>(e, "combo", "estimator"));
    if (e.contains("kernel") && detail::get_checked<std::string>(e, "kernel", "estimator") != "dc") {
      throw std::invalid_argument("config: only the 'dc' kernel is available");
    }
    if (e.contains("transient")) c.transient = detail::get_checked<bool>(e, "transient", "estimator");
  }
  if (j.contains("hyperopt")) {
    const auto& h = j.at("hyperopt");
    detail::require_keys(h, {"starts", "screen_evals", "max_evals", "refine_starts", "box", "seed"}, "hyperopt");
    if (h.contains("starts")) c.hyperopt.n_starts = detail::get_checked<int>(h, "starts", "hyperopt");
    if (h.contains("screen_evals")) c.hyperopt.screen_evals = detail::get_checked<long>(h, "screen_evals", "hyperopt");
    if (h.contains("max_evals")) c.hyperopt.max_evals = detail::get_checked<long>(h, "max_evals", "hyperopt");
    if (h.contains("refine_starts")) c.hyperopt.refine_starts = detail::get_checked<int>(h, "refine_starts", "hyperopt");
    if (h.contains("box")) {
      const auto& b = h.at("box");
      detail::require_keys(b,
                           {"alpha_min", "alpha_max", "ratio_max", "lambda_min", "lambda_max", "sigma2_min_rel",
                            "sigma2_max_rel", "alpha_t_max"},
                           "hyperopt.box");
      HyperBox& x = c.hyperopt.box;
      x.alpha_min = b.value("alpha_min", x.alpha_min);
      x.alpha_max = b.value("alpha_max", x.alpha_max);
      x.ratio_max = b.value("ratio_max", x.ratio_max);
      x.lambda_min = b.value("lambda_min", x.lambda_min);
      x.lambda_max = b.value("lambda_max", x.lambda_max);
      x.sigma2_min_rel = b.value("sigma2_min_rel", x.sigma2_min_rel);
      x.sigma2_max_rel = b.value("sigma2_max_rel", x.sigma2_max_rel);
      x.alpha_t_max = b.value("alpha_t_max", x.alpha_t_max);
    }
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    detail::require_keys(g, {"step", "end"}, "grid");
    c.grid.step = g.value("step", c.grid.step);
    c.grid.end = g.value("end", c.grid.end);
  }
  if (j.contains("validation")) {
    const auto& v = j.at("validation");
    detail::require_keys(v, {"draws", "combos", "covariance_instances", "tolerance", "lambda1_perturbation"},
                         "validation");
    c.validation.draws = v.value("draws", c.validation.draws);
    c.validation.covariance_instances = v.value("covariance_instances", c.validation.covariance_instances);
    c.validation.tolerance = v.value("tolerance", c.validation.tolerance);
    c.validation.lambda1_perturbation = v.value("lambda1_perturbation", c.validation.lambda1_perturbation);
    if (v.contains("combos")) {
      c.validation.combos.clear();
      for (const auto& s : v.at("combos")) c.validation.combos.push_back(parse_combo(s.get<std::string>()));
    }
  }
}

/// Checks the invariants every command relies on.
inline void validate_config(const ExperimentConfig& c) {
  c.bank.validate();
  if (c.trial_count() < 1) throw std::invalid_argument("config: trials must be >= 1");
  if (c.jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
  if (!(c.grid.step > 0.0) || !(c.grid.end > c.grid.step)) throw std::invalid_argument("config: bad grid");
  if (c.hyperopt.n_starts < 0 || c.hyperopt.screen_evals < 1 || c.hyperopt.max_evals < c.hyperopt.screen_evals) {
    throw std::invalid_argument("config: bad hyperopt budget");
  }
  const HyperBox& b = c.hyperopt.box;
  if (!(b.alpha_min > 0.0 && b.alpha_min < b.alpha_max && b.ratio_max >= 0.0 && b.ratio_max < 1.0 &&
        b.lambda_min > 0.0 && b.lambda_min < b.lambda_max && b.sigma2_min_rel > 0.0 &&
        b.sigma2_min_rel < b.sigma2_max_rel && b.alpha_t_max >= 0.0)) {
    throw std::invalid_argument("config: inconsistent hyperparameter box");
  }
  if (c.command == "estimate" || c.command == "evaluate") {
    if (c.data.empty() || !std::filesystem::is_directory(c.data)) {
      throw std::invalid_argument("config: data bank directory '" + c.data + "' does not exist");
    }
  }
  if (c.command == "evaluate" && (c.estimates.empty() || !std::filesystem::is_directory(c.estimates))) {
    throw std::invalid_argument("config: estimates directory '" + c.estimates + "' does not exist");
  }
}

inline std::string trial_dir_name(long index) {
  std::ostringstream os;
  os << "trial_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

// ---- generate ------------------------------------------------------------

inline void write_trial(const std::filesystem::path& dir, const Trial& t) {
  io::write_signal(dir / "train_u.csv", t.train_u);
  io::write_columns(dir / "train_y.csv", {"y", "y0"}, {io::to_std(t.train_y), io::to_std(t.train_y0)});
  io::write_signal(dir / "validation_u.csv", t.validation_u);
  io::write_columns(dir / "validation_y0.csv", {"y0"}, {io::to_std(t.validation_y0)});
  io::write_json(dir / "trial.json", {{"index", t.index},
                                      {"input_seed", t.input_seed},
                                      {"noise_seed", t.noise_seed},
                                      {"validation_seed", t.validation_seed},
                                      {"noise_variance", t.sigma2},
                                      {"validation_first", t.validation_first}});
}

inline Trial read_trial(const std::filesystem::path& dir) {
  const io::json meta = io::read_json(dir / "trial.json");
  const io::Table ty = io::read_columns(dir / "train_y.csv");
  Trial t{meta.at("index").get<long>(),
          meta.at("input_seed").get<std::uint64_t>(),
          meta.at("noise_seed").get<std::uint64_t>(),
          meta.at("validation_seed").get<std::uint64_t>(),
          io::read_signal(dir / "train_u.csv"),
          io::to_eigen(ty.column("y")),
          io::to_eigen(ty.column("y0")),
          meta.at("noise_variance").get<double>(),
          io::read_signal(dir / "validation_u.csv"),
          io::to_eigen(io::read_columns(dir / "validation_y0.csv").column("y0")),
          meta.at("validation_first").get<long>()};
  return t;
}

inline StateSpace bank_system(const DataBankSpec& spec) { return to_state_space(rao_garnier(spec.den_a3)); }

/// Writes `out/trial_XXXX/` for every trial plus manifest.json and config.json.
inline void cmd_generate(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  validate_config(cfg);
  if (cfg.out.empty()) throw std::invalid_argument("generate: --out is required");
  const std::filesystem::path out(cfg.out);
  DataBankSpec spec = cfg.bank;
  spec.trials = cfg.trial_count();
  const StateSpace ss = bank_system(spec);
  std::vector<io::json> entries(static_cast<std::size_t>(spec.trials));
  detail::parallel_for(static_cast<int>(spec.trials), cfg.jobs, [&](int i) {
    const Trial t = make_trial(spec, ss, cfg.seed, i);
    write_trial(out / trial_dir_name(i), t);
    entries[static_cast<std::size_t>(i)] = {{"index", i},
                                            {"dir", trial_dir_name(i)},
                                            {"input_seed", t.input_seed},
                                            {"noise_seed", t.noise_seed},
                                            {"validation_seed", t.validation_seed},
                                            {"noise_variance", t.sigma2}};
  });
  const CtTransferFunction tf = rao_garnier(spec.den_a3);
  io::json manifest = {{"tool", "ctkrm"},
                       {"version", kVersion},
                       {"command", "generate"},
                       {"seed", cfg.seed},
                       {"bank", io::to_json(spec)},
                       {"system", {{"num", tf.num}, {"den", tf.den}}},
                       {"input", {{"kind", "prbs"}, {"order", spec.prbs_order}, {"divider", spec.prbs_divider}}},
                       {"trials", entries}};
  io::write_json(out / "manifest.json", manifest);
  io::write_json(out / "config.json", to_json(cfg));
  log << "generate: " << spec.trials << " trials of bank " << spec.name << " (ts=" << spec.ts << ", n=" << spec.n
      << ") in " << out.string() << "\n";
}

// ---- estimate ------------------------------------------------------------

struct ManifestView {
  DataBankSpec bank;
  std::vector<std::string> dirs;
};

inline ManifestView read_manifest(const std::filesystem::path& data) {
  const io::json m = io::read_json(data / "manifest.json");
  ManifestView v;
  v.bank = io::bank_from_json(m.at("bank"));
  for (const auto& t : m.at("trials")) v.dirs.push_back(t.at("dir").get<std::string>());
  return v;
}

/// Per trial: hyperparameter search, estimate, g_hat on the grid and y_hat on
/// the validation window. Failures are written as error.json and do not stop
/// the other trials.
inline long cmd_estimate(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  validate_config(cfg);
  if (cfg.out.empty()) throw std::invalid_argument("estimate: --out is required");
  const std::filesystem::path data(cfg.data);
  const std::filesystem::path out(cfg.out);
  const ManifestView mv = read_manifest(data);
  const long count = std::min<long>(cfg.trial_count(), static_cast<long>(mv.dirs.size()));
  if (count < 1) throw std::invalid_argument("estimate: the data bank has no trials");
  const std::vector<double> grid = fit_grid(cfg.grid.step, cfg.grid.end);
  std::mutex log_mutex;
  std::atomic<long> failures{0};
  OptimizeOptions per = cfg.hyperopt;
  per.jobs = 1;
  per.model = ModelSpec{cfg.combo, cfg.transient};
  detail::parallel_for(static_cast<int>(count), cfg.jobs, [&](int i) {
    const std::string name = mv.dirs[static_cast<std::size_t>(i)];
    const std::filesystem::path dir = out / name;
    std::filesystem::create_directories(dir);
    std::filesystem::remove(dir / "error.json");
    try {
      const Trial t = read_trial(data / name);
      OptimizeOptions o = per;
      o.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(t.index), 4);
      const OptimizeResult res = optimize(t.train_u, t.train_y, o);
      const RegularizedEstimate est = estimate_with(t.train_u, t.train_y, res.best, cfg.combo, cfg.transient);
      const Eigen::VectorXd g_hat = eval_impulse(est, grid);
      const long horizon = default_horizon(est, t.validation_u.ts());
      const Eigen::VectorXd y_hat = predict_output(est, t.validation_u, horizon, t.validation_first);
      io::json starts = io::json::array();
      for (const auto& s : res.starts) starts.push_back({{"objective", s.value}, {"evals", s.evals}});
      io::json hp = {{"trial", t.index},
                     {"combo", std::string(to_string(cfg.combo))},
                     {"transient", cfg.transient},
                     {"hyperparameters", io::to_json(res.best)},
                     {"objective", res.value},
                     {"best_start", res.best_start},
                     {"infeasible_evals", res.infeasible_evals},
                     {"solve_residual", est.residual},
                     {"starts", starts}};
      io::write_json(dir / "hyperparams.json", hp);
      io::write_columns(dir / "g_hat.csv", {"t", "g_hat"}, {grid, io::to_std(g_hat)});
      io::write_columns(dir / "y_hat.csv", {"y_hat"}, {io::to_std(y_hat)});
      std::lock_guard<std::mutex> lock(log_mutex);
      log << "estimate: " << name << " objective " << res.value << "\n";
    } catch (const std::exception& e) {
      ++failures;
      for (const char* f : {"hyperparams.json", "g_hat.csv", "y_hat.csv"}) std::filesystem::remove(dir / f);
      io::write_json(dir / "error.json", {{"trial", name}, {"error", e.what()}});
      std::lock_guard<std::mutex> lock(log_mutex);
      log << "estimate: " << name << " failed: " << e.what() << "\n";
    }
  });
  io::write_json(out / "config.json", to_json(cfg));
  return failures.load();
}

// ---- evaluate ------------------------------------------------------------

struct EvaluationResult {
  FitReport report;
  io::json summary;
};

/// Per-trial FIT table (fits.csv) and a summary.json with mean and sample std.
inline EvaluationResult cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
  validate_config(cfg);
  const std::filesystem::path data(cfg.data);
  const std::filesystem::path est(cfg.estimates);
  const ManifestView mv = read_manifest(data);
  const StateSpace ss = bank_system(mv.bank);
  EvaluationResult res;
  std::vector<io::json> missing;
  for (std::size_t i = 0; i < mv.dirs.size(); ++i) {
    const std::filesystem::path dir = est / mv.dirs[i];
    if (!std::filesystem::exists(dir / "g_hat.csv") || !std::filesystem::exists(dir / "y_hat.csv")) {
      std::string why = "no estimate";
      if (std::filesystem::exists(dir / "error.json")) why = io::read_json(dir / "error.json").value("error", why);
      res.report.missing.push_back(static_cast<long>(i));
      missing.push_back({{"trial", mv.dirs[i]}, {"reason", why}});
      continue;
    }
    const io::Table g = io::read_columns(dir / "g_hat.csv");
    const std::vector<double>& t = g.column("t");
    const Eigen::VectorXd g_true = impulse_response(ss, t);
    const double fg = fit_g(io::to_eigen(g.column("g_hat")), g_true);
    const Eigen::VectorXd y0 = io::to_eigen(io::read_columns(data / mv.dirs[i] / "validation_y0.csv").column("y0"));
    const double fy = fit_y(io::to_eigen(io::read_columns(dir / "y_hat.csv").column("y_hat")), y0);
    res.report.add(static_cast<long>(i), fg, fy);
  }
  if (res.report.trials.empty()) {
    throw std::runtime_error("evaluate: no estimates found in '" + est.string() + "'");
  }
  std::vector<double> trial_col(res.report.trials.begin(), res.report.trials.end());
  const std::filesystem::path out = cfg.out.empty() ? est : std::filesystem::path(cfg.out);
  io::write_columns(out / "fits.csv", {"trial", "fit_g", "fit_y"}, {trial_col, res.report.fit_g, res.report.fit_y});
  res.summary = {{"bank", mv.bank.name},
                 {"trials", mv.dirs.size()},
                 {"completed", res.report.trials.size()},
                 {"partial", !missing.empty()},
                 {"missing", missing},
                 {"fit_g", io::to_json(res.report.summary_g())},
                 {"fit_y", io::to_json(res.report.summary_y())}};
  io::write_json(out / "summary.json", res.summary);
  io::write_json(out / "evaluate_config.json", to_json(cfg));
  const Summary sg = res.report.summary_g();
  const Summary sy = res.report.summary_y();
  log << std::fixed << std::setprecision(2) << "evaluate: bank " << mv.bank.name << " FIT_g " << sg.mean << " ("
      << sg.std << ")  FIT_y " << sy.mean << " (" << sy.std << ")  over " << sg.count << " trials";
  if (!missing.empty()) log << ", " << missing.size() << " missing";
  log << "\n" << std::defaultfloat;
  return res;
}

// ---- validate-kernels ----------------------------------------------------

/// Closed forms against oracles; prints one line per check and returns the report.
inline ValidationReport cmd_validate_kernels(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
  ValidationOptions opt = cfg.validation;
  opt.seed = cfg.seed;
  const ValidationReport rep = validate_kernels(opt);
  for (const auto& c : rep.checks) {
    log << (rep.passed(c) ? "PASS " : "FAIL ") << std::left << std::setw(28) << c.name << std::right << " n=" << std::setw(3)
        << c.count << "  worst rel err " << std::scientific << std::setprecision(3) << c.worst << std::defaultfloat;
    if (!rep.passed(c)) log << "  [" << c.worst_case << "]";
    for (const auto& e : c.errors) log << "\n     error: " << e;
    log << "\n";
  }
  log << (rep.passed() ? "validate-kernels: all checks pass" : "validate-kernels: FAILED") << " (tolerance "
      << rep.tolerance << ", " << std::fixed << std::setprecision(1) << rep.seconds << " s)\n"
      << std::defaultfloat;
  if (!cfg.out.empty()) {
    io::json j = io::to_json(rep);
    j["seed"] = cfg.seed;
    j["draws"] = opt.draws;
    io::write_json(std::filesystem::path(cfg.out) / "validation.json", j);
    io::write_json(std::filesystem::path(cfg.out) / "config.json", to_json(cfg));
  }
  return rep;
}

}  // namespace ctkrm
