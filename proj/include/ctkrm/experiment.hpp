#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ctkrm/covariance.hpp"
#include "ctkrm/estimator.hpp"
#include "ctkrm/hyperopt.hpp"
#include "ctkrm/metrics.hpp"
#include "ctkrm/simulator.hpp"

namespace ctkrm {

struct TrialOptions {
  OptimizeOptions optimizer;
  Combo combo = Combo::ZohZa;  // behavior assumed for the training input
  bool transient = true;       // add the transient term for the unknown training past
  std::vector<double> grid = fit_grid();
};

struct TrialResult {
  long index = 0;
  HyperParams hp;
  double objective = 0.0;
  double fit_g = 0.0;
  double fit_y = 0.0;
  double seconds = 0.0;
  long infeasible_evals = 0;
};

/// Fitted estimate for given hyperparameters, with the training input read under `combo`.
inline RegularizedEstimate estimate_with(const SampledSignal& u, const Eigen::VectorXd& y, const HyperParams& hp,
                                         Combo combo, bool transient) {
  require_excitation(u);
  const SampledSignal ua = assume_behavior(u, combo);
  CovariancePair cov = build_covariance(ua, hp.kernel());
  RegularizedEstimate est = transient ? fit_with_transient(cov, hp.transient(), y, hp.sigma2) : fit(cov, y, hp.sigma2);
  est.train_input = ua;
  return est;
}

/// Hyperparameter search, estimate, and both fit scores for one trial.
inline TrialResult run_trial(const Trial& trial, const StateSpace& ss, const TrialOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  OptimizeOptions o = opt.optimizer;
  o.model = ModelSpec{opt.combo, opt.transient};
  o.seed = derive_seed(o.seed, static_cast<std::uint64_t>(trial.index), 4);
  const OptimizeResult res = optimize(trial.train_u, trial.train_y, o);

  TrialResult out;
  out.index = trial.index;
  out.hp = res.best;
  out.objective = res.value;
  out.infeasible_evals = res.infeasible_evals;
  const RegularizedEstimate est = estimate_with(trial.train_u, trial.train_y, res.best, opt.combo, opt.transient);
  out.fit_g = fit_g(eval_impulse(est, opt.grid), impulse_response(ss, opt.grid));
  const long horizon = default_horizon(est, trial.validation_u.ts());
  const Eigen::VectorXd y_hat = predict_output(est, trial.validation_u, horizon, trial.validation_first);
  out.fit_y = fit_y(y_hat, trial.validation_y0);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Runs trials [0, count) of a bank; trial i depends only on (seed, i).
/// `jobs` threads work on different trials, each running its starts serially.
template <class Callback>
FitReport run_bank(const DataBankSpec& spec, std::uint64_t seed, long count, const TrialOptions& opt, int jobs,
                   Callback&& on_trial) {
  spec.validate();
  const StateSpace ss = to_state_space(rao_garnier(spec.den_a3));
  std::vector<std::optional<TrialResult>> results(static_cast<std::size_t>(count));
  TrialOptions per = opt;
  per.optimizer.jobs = 1;
  std::mutex cb_mutex;
  detail::parallel_for(static_cast<int>(count), jobs, [&](int i) {
    const Trial trial = make_trial(spec, ss, seed, i);
    TrialResult r = run_trial(trial, ss, per);
    {
      std::lock_guard<std::mutex> lock(cb_mutex);
      on_trial(r);
    }
    results[static_cast<std::size_t>(i)] = r;
  });
  FitReport report;
  for (long i = 0; i < count; ++i) {
    const auto& r = results[static_cast<std::size_t>(i)];
    if (r) {
      report.add(i, r->fit_g, r->fit_y);
    } else {
      report.missing.push_back(i);
    }
  }
  return report;
}

inline FitReport run_bank(const DataBankSpec& spec, std::uint64_t seed, long count, const TrialOptions& opt,
                          int jobs = 1) {
  return run_bank(spec, seed, count, opt, jobs, [](const TrialResult&) {});
}

}  // namespace ctkrm
