#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctkrm/covariance.hpp"
#include "ctkrm/estimator.hpp"
#include "ctkrm/kernels.hpp"
#include "ctkrm/signals.hpp"
#include "ctkrm/simulator.hpp"

namespace ctkrm {

/// Empirical-Bayes decision variables.
struct HyperParams {
  double alpha = 1.0;
  double beta = 0.5;
  double lambda = 1.0;
  double sigma2 = 1.0;
  double alpha_t = 0.0;

  DcKernel kernel() const { return {alpha, beta, lambda}; }
  TransientKernel<DcKernel> transient() const { return {kernel(), alpha_t}; }
};

/// Admissible box. The sigma2 limits are relative to the sample variance of y.
struct HyperBox {
  double alpha_min = 1e-2;
  double alpha_max = 1e2;
  double ratio_max = 0.99;  // beta / alpha
  double lambda_min = 1e-6;
  double lambda_max = 1e6;
  double sigma2_min_rel = 1e-8;
  double sigma2_max_rel = 10.0;
  double alpha_t_max = 1e3;

  bool contains(const HyperParams& hp, double var_y) const {
    const double tol = 1e-12;
    return hp.alpha >= alpha_min * (1 - tol) && hp.alpha <= alpha_max * (1 + tol) && hp.beta >= 0.0 &&
           hp.beta <= ratio_max * hp.alpha * (1 + tol) && hp.lambda >= lambda_min * (1 - tol) &&
           hp.lambda <= lambda_max * (1 + tol) && hp.sigma2 >= sigma2_min_rel * var_y * (1 - tol) &&
           hp.sigma2 <= sigma2_max_rel * var_y * (1 + tol) && hp.alpha_t >= 0.0 &&
           hp.alpha_t <= alpha_t_max * (1 + tol);
  }
};

/// Scale of the log1p map used for alpha_t, so that alpha_t = 0 is interior to the map.
inline constexpr double kAlphaTScale = 1e-6;

/// (log alpha, beta/alpha, log lambda, log sigma2, log1p(alpha_t / kAlphaTScale)).
inline std::array<double, 5> to_search(const HyperParams& hp) {
  return {std::log(hp.alpha), hp.beta / hp.alpha, std::log(hp.lambda), std::log(hp.sigma2),
          std::log1p(hp.alpha_t / kAlphaTScale)};
}

inline HyperParams from_search(const std::array<double, 5>& x) {
  HyperParams hp;
  hp.alpha = std::exp(x[0]);
  hp.beta = x[1] * hp.alpha;
  hp.lambda = std::exp(x[2]);
  hp.sigma2 = std::exp(x[3]);
  hp.alpha_t = kAlphaTScale * std::expm1(x[4]);
  return hp;
}

/// Which covariance model the objective uses.
struct ModelSpec {
  Combo combo = Combo::ZohZa;
  bool transient = true;
};

/// Past = Unknown means ZOH with a zero-appended assumption plus the transient term.
inline ModelSpec default_model(const SampledSignal& u) {
  if (u.intersample() == Intersample::Bl) return {Combo::BlPa, u.past() == Past::Unknown};
  if (u.past() == Past::Pa) return {Combo::ZohPa, false};
  if (u.past() == Past::Za) return {Combo::ZohZa, false};
  return {Combo::ZohZa, true};
}

/// Rejects an all-zero input, for which no impulse response is identifiable.
inline void require_excitation(const SampledSignal& u) {
  for (double v : u.samples()) {
    if (v != 0.0) return;
  }
  throw std::invalid_argument("input is identically zero: the impulse response is not identifiable from this record");
}

/// The input as the model sees it: intersample and past behavior set by the combo.
inline SampledSignal assume_behavior(const SampledSignal& u, Combo combo) {
  switch (combo) {
    case Combo::ZohZa: return u.with_behavior(Intersample::Zoh, Past::Za);
    case Combo::ZohPa: return u.with_behavior(Intersample::Zoh, Past::Pa);
    case Combo::BlPa: break;
  }
  return u.with_behavior(Intersample::Bl, Past::Pa);
}

inline SampledSignal assumed_input(const SampledSignal& u, const ModelSpec& model) {
  return assume_behavior(u, model.combo);
}

/// Negative log marginal likelihood and its lambda-profiled variant for one data record.
class MarginalLikelihood {
 public:
  MarginalLikelihood(const SampledSignal& u, Eigen::VectorXd y, ModelSpec model, HyperBox box = {})
      : u_(assumed_input(u, model)), y_(std::move(y)), model_(model), box_(box) {
    if (static_cast<std::size_t>(y_.size()) != u_.size()) {
      throw std::invalid_argument("marginal likelihood: output and input lengths differ");
    }
    if (!y_.allFinite()) throw std::invalid_argument("marginal likelihood: non-finite outputs");
    var_y_ = sample_variance(y_);
    if (model_.combo == Combo::ZohZa) phi_ = zoh_regressors(u_);
  }

  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  double var_y() const { return var_y_; }
  const HyperBox& box() const { return box_; }
  const ModelSpec& model() const { return model_; }
  long infeasible_count() const { return infeasible_.load(); }

  /// Sigma_y (without noise) for unit lambda, including alpha_t times the unit-lambda time Gram.
  Eigen::MatrixXd unit_gram(double alpha, double beta, double alpha_t) const {
    const DcKernel k(alpha, beta, 1.0);
    Eigen::MatrixXd m;
    if (model_.combo == Combo::ZohZa) {
      m = dc_cell_congruence(phi_, k.cell_structure(u_.ts()));
    } else {
      m = build_covariance(u_, k).sigma_y;
    }
    if (model_.transient && alpha_t > 0.0) add_time_gram(m, alpha, beta, alpha_t);
    return m;
  }

  /// y^T M^{-1} y + logdet M + N log 2 pi with M = Sigma + alpha_t K_t + sigma2 I.
  /// Returns +inf when M cannot be factorized.
  double value(const HyperParams& hp) const {
    Eigen::MatrixXd m = unit_gram(hp.alpha, hp.beta, hp.alpha_t) * hp.lambda;
    m.diagonal().array() += hp.sigma2;
    double quad = 0.0;
    double logdet = 0.0;
    if (!factor(m, quad, logdet)) return std::numeric_limits<double>::infinity();
    return quad + logdet + static_cast<double>(size()) * std::log(2.0 * std::numbers::pi);
  }

  struct Profiled {
    double value = std::numeric_limits<double>::infinity();
    double lambda = 0.0;
  };

  /// Minimum of value() over lambda with sigma2 = nu * lambda, both kept inside the box.
  Profiled profiled(double alpha, double beta, double nu, double alpha_t) const {
    Eigen::MatrixXd m = unit_gram(alpha, beta, alpha_t);
    m.diagonal().array() += nu;
    double quad = 0.0;
    double logdet = 0.0;
    Profiled out;
    if (!factor(m, quad, logdet)) return out;
    const double n = static_cast<double>(size());
    const double lo = std::max(box_.lambda_min, box_.sigma2_min_rel * var_y_ / nu);
    const double hi = std::min(box_.lambda_max, box_.sigma2_max_rel * var_y_ / nu);
    if (!(lo <= hi)) return out;
    const double lam = std::clamp(quad / n, lo, hi);
    out.lambda = lam;
    out.value = quad / lam + n * std::log(lam) + logdet + n * std::log(2.0 * std::numbers::pi);
    return out;
  }

 private:
  void add_time_gram(Eigen::MatrixXd& m, double alpha, double beta, double alpha_t) const {
    const Eigen::Index n = m.rows();
    const double ts = u_.ts();
    Eigen::VectorXd d(n);
    Eigen::VectorXd pw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      d(i) = std::exp(-alpha * ts * static_cast<double>(i));
      pw(i) = std::exp(-beta * ts * static_cast<double>(i));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) {
        const double v = alpha_t * d(i) * d(j) * pw(i - j);
        m(i, j) += v;
        if (i != j) m(j, i) += v;
      }
    }
  }

  bool factor(const Eigen::MatrixXd& m, double& quad, double& logdet) const {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      ++infeasible_;
      return false;
    }
    const Eigen::VectorXd z = llt.matrixL().solve(y_);
    quad = z.squaredNorm();
    logdet = 2.0 * llt.matrixL().nestedExpression().diagonal().array().log().sum();
    if (!std::isfinite(quad) || !std::isfinite(logdet)) {
      ++infeasible_;
      return false;
    }
    return true;
  }

  SampledSignal u_;
  Eigen::VectorXd y_;
  ModelSpec model_;
  HyperBox box_;
  double var_y_ = 0.0;
  Eigen::MatrixXd phi_;
  mutable std::atomic<long> infeasible_{0};
};

/// Negative log marginal likelihood for the model implied by u's declared behavior.
inline double neg_log_marginal(const SampledSignal& u, const Eigen::VectorXd& y, const HyperParams& hp) {
  ModelSpec model = default_model(u);
  if (!model.transient && hp.alpha_t > 0.0) model.transient = true;
  return MarginalLikelihood(u, y, model).value(hp);
}

/// Bounded Nelder-Mead; points are projected onto the box. Can be resumed.
class NelderMead {
 public:
  template <class F>
  NelderMead(F&& f, Eigen::VectorXd x0, Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXd step)
      : f_(std::forward<F>(f)), lo_(std::move(lo)), hi_(std::move(hi)) {
    const Eigen::Index d = x0.size();
    simplex_.resize(d + 1);
    values_.resize(d + 1);
    simplex_[0] = project(x0);
    for (Eigen::Index i = 0; i < d; ++i) {
      Eigen::VectorXd x = simplex_[0];
      x(i) += step(i);
      if (x(i) > hi_(i)) x(i) = simplex_[0](i) - step(i);
      simplex_[static_cast<std::size_t>(i + 1)] = project(x);
    }
    for (std::size_t i = 0; i < simplex_.size(); ++i) values_[i] = eval(simplex_[i]);
    order();
    trace_.push_back(values_[0]);
  }

  /// Runs until converged or `max_evals` total evaluations.
  void run(long max_evals, double ftol = 1e-9, double xtol = 1e-7) {
    const std::size_t d = simplex_.size() - 1;
    while (evals_ < max_evals && !converged(ftol, xtol)) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
      for (std::size_t i = 0; i < d; ++i) c += simplex_[i];
      c /= static_cast<double>(d);
      const Eigen::VectorXd& worst = simplex_[d];
      const Eigen::VectorXd xr = project(c + (c - worst));
      const double fr = eval(xr);
      if (fr < values_[0]) {
        const Eigen::VectorXd xe = project(c + 2.0 * (c - worst));
        const double fe = eval(xe);
        if (fe < fr) {
          replace_worst(xe, fe);
        } else {
          replace_worst(xr, fr);
        }
      } else if (fr < values_[d - 1]) {
        replace_worst(xr, fr);
      } else {
        const bool outside = fr < values_[d];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(c + 0.5 * (xr - c)) : Eigen::VectorXd(c + 0.5 * (worst - c));
        const double fc = eval(xc);
        if (outside ? fc <= fr : fc < values_[d]) {
          replace_worst(xc, fc);
        } else {
          for (std::size_t i = 1; i <= d; ++i) {
            simplex_[i] = project(simplex_[0] + 0.5 * (simplex_[i] - simplex_[0]));
            values_[i] = eval(simplex_[i]);
          }
        }
      }
      order();
      trace_.push_back(values_[0]);
    }
  }

  bool converged(double ftol, double xtol) const {
    if (!std::isfinite(values_[0])) return true;
    const double fspread = std::abs(values_.back() - values_.front());
    double xspread = 0.0;
    for (std::size_t i = 1; i < simplex_.size(); ++i) {
      xspread = std::max(xspread, (simplex_[i] - simplex_[0]).cwiseAbs().maxCoeff());
    }
    return fspread <= ftol * (1.0 + std::abs(values_[0])) && xspread <= xtol;
  }

  const Eigen::VectorXd& best() const { return simplex_[0]; }
  double best_value() const { return values_[0]; }
  long evals() const { return evals_; }
  const std::vector<double>& trace() const { return trace_; }

 private:
  Eigen::VectorXd project(const Eigen::VectorXd& x) const { return x.cwiseMax(lo_).cwiseMin(hi_); }

  double eval(const Eigen::VectorXd& x) {
    ++evals_;
    const double v = f_(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  }

  void replace_worst(const Eigen::VectorXd& x, double v) {
    simplex_.back() = x;
    values_.back() = v;
  }

  // Stable sort keeps earlier vertices first on ties.
  void order() {
    std::vector<std::size_t> idx(simplex_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values_[a] < values_[b]; });
    std::vector<Eigen::VectorXd> s;
    std::vector<double> v;
    for (std::size_t i : idx) {
      s.push_back(simplex_[i]);
      v.push_back(values_[i]);
    }
    simplex_ = std::move(s);
    values_ = std::move(v);
  }

  std::function<double(const Eigen::VectorXd&)> f_;
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  std::vector<Eigen::VectorXd> simplex_;
  std::vector<double> values_;
  std::vector<double> trace_;
  long evals_ = 0;
};

struct OptimizeOptions {
  int n_starts = 0;  // 0 picks 5 x (number of hyperparameters)
  std::uint64_t seed = 0;
  int jobs = 1;
  long screen_evals = 40;  // budget every start gets
  long max_evals = 300;    // budget for start 0 and the best screened starts
  int refine_starts = 4;   // screened starts continued to max_evals besides start 0
  std::optional<ModelSpec> model;
  HyperBox box;
};

struct StartRecord {
  Eigen::VectorXd start;  // profiled search coordinates
  Eigen::VectorXd end;
  double value = std::numeric_limits<double>::infinity();
  long evals = 0;
  std::vector<double> trace;
};

struct OptimizeResult {
  HyperParams best;
  double value = std::numeric_limits<double>::infinity();
  int best_start = -1;
  std::vector<StartRecord> starts;
  long infeasible_evals = 0;
};

namespace detail {

// Latin hypercube on [0, 1]^d with `count` points.
inline std::vector<Eigen::VectorXd> latin_hypercube(int count, int dims, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(count), Eigen::VectorXd(dims));
  for (int j = 0; j < dims; ++j) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(count), static_cast<std::uint64_t>(j)));
    std::vector<int> perm(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < count; ++i) {
      pts[static_cast<std::size_t>(i)](j) = (perm[static_cast<std::size_t>(i)] + unit(rng)) / count;
    }
  }
  return pts;
}

template <class F>
void parallel_for(int count, int jobs, F&& body) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < std::min(jobs, count); ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Multistart Empirical-Bayes optimization. lambda is profiled out in closed
/// form; the simplex searches (log alpha, beta/alpha, log(sigma2/lambda)
/// [, log1p(alpha_t / 1e-6)]). Start 0 is a fixed heuristic point, the others
/// come from a seeded Latin hypercube. Every start is screened with a short
/// budget; start 0 and the best screened starts then run to completion.
inline OptimizeResult optimize(const SampledSignal& u, const Eigen::VectorXd& y, const OptimizeOptions& opt = {}) {
  require_excitation(u);
  const ModelSpec model = opt.model.value_or(default_model(u));
  const MarginalLikelihood ml(u, y, model, opt.box);
  const HyperBox& box = opt.box;
  const double var_y = ml.var_y();
  if (!(var_y > 0.0)) throw std::invalid_argument("optimize: output record is constant");
  const int dims = model.transient ? 4 : 3;
  const int n_starts = opt.n_starts > 0 ? opt.n_starts : 5 * (dims + 1);

  Eigen::VectorXd lo(dims), hi(dims);
  lo.head<3>() << std::log(box.alpha_min), 0.0, std::log(box.sigma2_min_rel * var_y / box.lambda_max);
  hi.head<3>() << std::log(box.alpha_max), box.ratio_max, std::log(box.sigma2_max_rel * var_y / box.lambda_min);
  if (model.transient) {
    lo(3) = 0.0;
    hi(3) = std::log1p(box.alpha_t_max / kAlphaTScale);
  }

  auto unpack = [&](const Eigen::VectorXd& x) {
    const double alpha = std::exp(x(0));
    return std::array<double, 4>{alpha, x(1) * alpha, std::exp(x(2)),
                                 model.transient ? kAlphaTScale * std::expm1(x(3)) : 0.0};
  };
  auto objective = [&](const Eigen::VectorXd& x) {
    const auto p = unpack(x);
    return ml.profiled(p[0], p[1], p[2], p[3]).value;
  };

  // Start 0 and the sampling range for the noise ratio are scaled by the
  // prior output variance at alpha = 1, beta = 0.5.
  const double alpha0 = std::clamp(1.0, box.alpha_min, box.alpha_max);
  const double prior_scale = ml.unit_gram(alpha0, 0.5 * alpha0, 0.0).diagonal().mean();
  const double nu_ref = prior_scale > 0.0 ? prior_scale : 1.0;
  Eigen::VectorXd x0(dims);
  x0.head<3>() << std::log(alpha0), 0.5, std::log(0.1 * nu_ref);
  if (model.transient) x0(3) = std::log1p(1.0 / kAlphaTScale);
  x0 = x0.cwiseMax(lo).cwiseMin(hi);

  Eigen::VectorXd sample_lo = lo, sample_hi = hi;
  sample_lo(2) = std::clamp(std::log(1e-4 * nu_ref), lo(2), hi(2));
  sample_hi(2) = std::clamp(std::log(10.0 * nu_ref), lo(2), hi(2));

  std::vector<Eigen::VectorXd> starts{x0};
  if (n_starts > 1) {
    for (const auto& p : detail::latin_hypercube(n_starts - 1, dims, opt.seed)) {
      starts.push_back(sample_lo + (sample_hi - sample_lo).cwiseProduct(p));
    }
  }
  const Eigen::VectorXd step = 0.1 * (sample_hi - sample_lo);

  std::vector<std::unique_ptr<NelderMead>> runs(static_cast<std::size_t>(n_starts));
  detail::parallel_for(n_starts, opt.jobs, [&](int i) {
    auto nm = std::make_unique<NelderMead>(objective, starts[static_cast<std::size_t>(i)], lo, hi, step);
    nm->run(opt.screen_evals);
    runs[static_cast<std::size_t>(i)] = std::move(nm);
  });

  std::vector<int> order(static_cast<std::size_t>(n_starts));
  for (int i = 0; i < n_starts; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return runs[static_cast<std::size_t>(a)]->best_value() < runs[static_cast<std::size_t>(b)]->best_value();
  });
  std::vector<int> refine{0};
  for (int i : order) {
    if (static_cast<int>(refine.size()) > opt.refine_starts) break;
    if (i != 0) refine.push_back(i);
  }
  detail::parallel_for(static_cast<int>(refine.size()), opt.jobs,
                       [&](int r) { runs[static_cast<std::size_t>(refine[static_cast<std::size_t>(r)])]->run(opt.max_evals); });

  OptimizeResult res;
  for (int i = 0; i < n_starts; ++i) {
    const auto& nm = *runs[static_cast<std::size_t>(i)];
    StartRecord rec{starts[static_cast<std::size_t>(i)], nm.best(), nm.best_value(), nm.evals(), nm.trace()};
    if (rec.value < res.value) {
      res.value = rec.value;
      res.best_start = i;
    }
    res.starts.push_back(std::move(rec));
  }
  res.infeasible_evals = ml.infeasible_count();
  if (res.best_start < 0) throw NumericalError("optimize: every start was infeasible");

  const Eigen::VectorXd& xb = res.starts[static_cast<std::size_t>(res.best_start)].end;
  const auto p = unpack(xb);
  const auto prof = ml.profiled(p[0], p[1], p[2], p[3]);
  res.best.alpha = p[0];
  res.best.beta = p[1];
  res.best.alpha_t = p[3];
  res.best.lambda = prof.lambda;
  res.best.sigma2 = p[2] * prof.lambda;
  return res;
}

/// Best hyperparameters from n_starts starts.
inline HyperParams optimize(const SampledSignal& u, const Eigen::VectorXd& y, int n_starts, std::uint64_t seed) {
  OptimizeOptions opt;
  opt.n_starts = n_starts;
  opt.seed = seed;
  return optimize(u, y, opt).best;
}

}  // namespace ctkrm
