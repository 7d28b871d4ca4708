#pragma once

// Closed form vs oracle sweeps for the derived kernels and the covariance
// builders. Used by `ctkrm validate-kernels` and by the acceptance checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <sstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctkrm/covariance.hpp"
#include "ctkrm/kernels.hpp"
#include "ctkrm/oracle.hpp"
#include "ctkrm/quadrature.hpp"
#include "ctkrm/signals.hpp"
#include "ctkrm/simulator.hpp"

namespace ctkrm {

/// One randomized admissible DC configuration.
struct KernelDraw {
  double alpha = 1.0;
  double beta = 0.0;
  double lambda = 1.0;
  double ts = 0.1;
  long n_period = 10;

  DcKernel kernel() const { return {alpha, beta, lambda}; }
  double period() const { return ts * static_cast<double>(n_period); }
};

/// alpha log-uniform on [0.05, 20], beta uniform on [0, 0.95 alpha],
/// lambda log-uniform on [1e-3, 1e3], ts uniform on [0.01, 0.5]. The record
/// length is chosen so that alpha * P >= 2, which keeps the periodic series short.
inline KernelDraw draw_kernel(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return std::exp(std::log(lo) + unit(rng) * std::log(hi / lo)); };
  KernelDraw d;
  d.alpha = log_uniform(0.05, 20.0);
  d.beta = unit(rng) * 0.95 * d.alpha;
  d.lambda = log_uniform(1e-3, 1e3);
  d.ts = 0.01 + unit(rng) * 0.49;
  d.n_period = std::clamp(static_cast<long>(std::ceil(2.0 / (d.alpha * d.ts))), 4L, 4000L);
  return d;
}

/// |a - b| / |b|; exact zeros compare by absolute difference.
inline double relative_error(double a, double b) {
  const double den = std::abs(b);
  return den > 0.0 ? std::abs(a - b) / den : std::abs(a - b);
}

inline double relative_error(std::complex<double> a, std::complex<double> b) {
  const double den = std::abs(b);
  return den > 0.0 ? std::abs(a - b) / den : std::abs(a - b);
}

/// max |A - B| / max |B| for matrices and rows whose entries may cancel to zero.
template <class A, class B>
double normwise_error(const A& a, const B& b) {
  const double den = b.cwiseAbs().maxCoeff();
  const double num = (a - b).cwiseAbs().maxCoeff();
  return den > 0.0 ? num / den : num;
}

struct CheckRecord {
  std::string name;
  std::string combo;  // zoh-za, zoh-pa, bl-pa
  long count = 0;
  double worst = 0.0;
  std::string worst_case;  // description of the draw with the worst error
  std::vector<std::string> errors;  // oracle failures
};

struct ValidationReport {
  double tolerance = 1e-6;
  double seconds = 0.0;
  std::vector<CheckRecord> checks;

  bool passed(const CheckRecord& c) const { return c.errors.empty() && c.count > 0 && c.worst <= tolerance; }
  bool passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [&](const auto& c) { return passed(c); });
  }
};

struct ValidationOptions {
  long draws = 100;
  std::uint64_t seed = 1;
  double tolerance = 1e-6;
  std::vector<Combo> combos{Combo::ZohZa, Combo::ZohPa, Combo::BlPa};
  bool kernels = true;
  bool covariance = true;
  long covariance_instances = 10;
  /// Test mode: scales the off-diagonal cell integrals (the lambda_1 factor)
  /// by (1 + x) before comparison. A correct sweep must then fail.
  double lambda1_perturbation = 0.0;
};

namespace detail {

inline std::string describe(const KernelDraw& d) {
  std::ostringstream os;
  os.precision(6);
  os << "alpha=" << d.alpha << " beta=" << d.beta << " lambda=" << d.lambda << " ts=" << d.ts << " N=" << d.n_period;
  return os.str();
}

class Recorder {
 public:
  explicit Recorder(ValidationReport& rep) : rep_(rep) {}

  template <class F>
  void run(const std::string& name, Combo combo, const std::string& where, F&& f) {
    CheckRecord& rec = get(name, combo);
    try {
      double e = f();
      if (std::isnan(e)) e = std::numeric_limits<double>::infinity();
      if (rec.count++ == 0 || e > rec.worst) {
        rec.worst = e;
        rec.worst_case = where;
      }
    } catch (const std::exception& ex) {
      rec.errors.push_back(where + ": " + ex.what());
    }
  }

 private:
  CheckRecord& get(const std::string& name, Combo combo) {
    for (auto& c : rep_.checks) {
      if (c.name == name) return c;
    }
    rep_.checks.push_back(CheckRecord{name, std::string(to_string(combo)), 0, 0.0, {}, {}});
    return rep_.checks.back();
  }
  ValidationReport& rep_;
};

// Off-diagonal cell integral with the optional lambda_1 perturbation.
inline double perturbed_gd(const DcKernel& k, double ts, long s, long s2, double p) {
  const double v = k.gd(ts, s, s2);
  return s == s2 ? v : v * (1.0 + p);
}

}  // namespace detail

/// Direct quadrature of the output covariance and the cross row of the
/// defining double integral, using only pointwise kernel evaluations on
/// finite records. Periodic inputs fold the integral onto one period with
/// the periodized kernels gp / ggp.
struct CovarianceOracle {
  SampledSignal u;
  DcKernel k;
  Combo combo;
  quad::Options opt = oracle::default_options();

  double input(double t) const {
    return u.intersample() == Intersample::Zoh ? eval_zoh(u, t) : eval_bl(u, t);
  }

  std::vector<double> breaks(double hi, double extra) const {
    std::vector<double> b;
    if (u.intersample() == Intersample::Zoh) {
      for (long m = 1; m * u.ts() < hi; ++m) b.push_back(static_cast<double>(m) * u.ts());
    }
    b.push_back(extra);
    return b;
  }

  // Integration range for the lag variable of output sample i.
  double upper(long i) const {
    return combo == Combo::ZohZa ? static_cast<double>(i) * u.ts() : u.period();
  }

  double sigma(long i, long j) const {
    const double ti = static_cast<double>(i) * u.ts();
    const double tj = static_cast<double>(j) * u.ts();
    const double hi = upper(i);
    const double hj = upper(j);
    if (hi == 0.0 || hj == 0.0) return 0.0;
    auto kern = [&](double x, double y) { return combo == Combo::ZohZa ? k(x, y) : k.gp(u.period(), x, y); };
    auto inner = [&](double x) {
      auto f = [&](double y) { return kern(x, y) * input(tj - y); };
      return quad::integrate_pieces(f, 0.0, hj, breaks(hj, x), opt).value * input(ti - x);
    };
    return quad::integrate_pieces(inner, 0.0, hi, breaks(hi, 0.0), opt).value;
  }

  Eigen::MatrixXd sigma() const {
    const auto n = static_cast<long>(u.size());
    return symmetric_gram(n, [&](long i, long j) { return sigma(i, j); });
  }

  Eigen::RowVectorXd cross(double tau) const {
    const auto n = static_cast<long>(u.size());
    Eigen::RowVectorXd row(n);
    for (long i = 0; i < n; ++i) {
      const double ti = static_cast<double>(i) * u.ts();
      const double hi = upper(i);
      if (hi == 0.0) {
        row(i) = 0.0;
        continue;
      }
      auto f = [&](double y) {
        const double kv = combo == Combo::ZohZa ? k(tau, y) : k.ggp(u.period(), tau, y);
        return kv * input(ti - y);
      };
      const double kink = combo == Combo::ZohZa ? tau : std::fmod(tau, u.period());
      row(i) = quad::integrate_pieces(f, 0.0, hi, breaks(hi, kink), opt).value;
    }
    return row;
  }
};

/// Random covariance-check instance: N in [2, 6] (odd for band-limited
/// inputs, which cannot carry a Nyquist bin), Gaussian samples.
inline SampledSignal draw_input(std::mt19937_64& rng, Combo combo, double ts) {
  std::uniform_int_distribution<long> len(2, 6);
  long n = len(rng);
  if (combo == Combo::BlPa && n % 2 == 0) n += n == 6 ? -1 : 1;
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (auto& v : s) v = g(rng);
  switch (combo) {
    case Combo::ZohZa: return {std::move(s), ts, Intersample::Zoh, Past::Za};
    case Combo::ZohPa: return {std::move(s), ts, Intersample::Zoh, Past::Pa};
    case Combo::BlPa: break;
  }
  return {std::move(s), ts, Intersample::Bl, Past::Pa};
}

/// Runs the closed-form vs oracle sweep.
inline ValidationReport validate_kernels(const ValidationOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  ValidationReport rep;
  rep.tolerance = opt.tolerance;
  detail::Recorder rec(rep);
  auto wants = [&](Combo c) { return std::find(opt.combos.begin(), opt.combos.end(), c) != opt.combos.end(); };
  const double p = opt.lambda1_perturbation;

  if (opt.kernels) {
    std::mt19937_64 rng(derive_seed(opt.seed, 11));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (long draw = 0; draw < opt.draws; ++draw) {
      const KernelDraw d = draw_kernel(rng);
      const DcKernel k = d.kernel();
      const double ts = d.ts;
      const long np = d.n_period;
      const double period = d.period();
      std::uniform_int_distribution<long> near(1, 6);
      std::uniform_int_distribution<long> cell(1, np);
      const long s = near(rng);
      const long s2 = near(rng);
      const long sp = cell(rng);
      const long sp2 = cell(rng);
      const double tau = unit(rng) * 6.0 * ts;
      const double tau_p = unit(rng) * period;
      const double tau_p2 = unit(rng) * period;
      const double tau_far = unit(rng) * 3.0 * period;
      std::uniform_int_distribution<long> bin(-3, 3);
      const long n1 = bin(rng);
      const long n2 = bin(rng);
      const std::string where = detail::describe(d);

      if (wants(Combo::ZohZa)) {
        rec.run("kappa_gd", Combo::ZohZa, where, [&] {
          const double off = relative_error(detail::perturbed_gd(k, ts, s, s2 == s ? s + 1 : s2, p),
                                            oracle::gd(k, ts, s, s2 == s ? s + 1 : s2));
          return std::max(off, relative_error(detail::perturbed_gd(k, ts, s, s, p), oracle::gd(k, ts, s, s)));
        });
        rec.run("kappa_ggd", Combo::ZohZa, where,
                [&] { return relative_error(k.ggd(ts, tau, s2), oracle::ggd(k, ts, tau, s2)); });
      }
      if (wants(Combo::ZohPa)) {
        rec.run("kappa_gp", Combo::ZohPa, where,
                [&] { return relative_error(k.gp(period, tau_p, tau_p2), oracle::gp(k, period, tau_p, tau_p2)); });
        rec.run("kappa_ggp", Combo::ZohPa, where,
                [&] { return relative_error(k.ggp(period, tau_far, tau_p2), oracle::ggp(k, period, tau_far, tau_p2)); });
        rec.run("kappa_gdp", Combo::ZohPa, where, [&] {
          const long t2 = sp2 == sp ? (sp % np) + 1 : sp2;
          return std::max(relative_error(k.gdp(ts, np, sp, t2), oracle::gdp(k, ts, np, sp, t2)),
                          relative_error(k.gdp(ts, np, sp, sp), oracle::gdp(k, ts, np, sp, sp)));
        });
        rec.run("kappa_ggdp", Combo::ZohPa, where, [&] {
          const double inside = (static_cast<double>(sp2 + 2 * np) - 0.5) * ts;
          return std::max(relative_error(k.ggdp(ts, np, tau_far, sp2), oracle::ggdp(k, ts, np, tau_far, sp2)),
                          relative_error(k.ggdp(ts, np, inside, sp2), oracle::ggdp(k, ts, np, inside, sp2)));
        });
        rec.run("kappa_gd_shifted_sum", Combo::ZohPa, where, [&] {
          const PointwiseOnly<DcKernel> plain(k);
          return relative_error(k.gd_shifted_sum(ts, np, sp + np, sp2),
                                kappa_gd_shifted_sum(plain, ts, np, sp + np, sp2));
        });
      }
      if (wants(Combo::BlPa)) {
        const double w0 = oracle::omega0(period);
        rec.run("fourier_w", Combo::BlPa, where, [&] {
          return relative_error(k.fourier_w(n1 * w0, n2 * w0), oracle::fourier_w(k, period, n1 * w0, n2 * w0));
        });
        rec.run("fourier_v", Combo::BlPa, where, [&] {
          return relative_error(k.fourier_v(tau_far, n2 * w0), oracle::fourier_v(k, period, tau_far, n2 * w0));
        });
      }
    }
  }

  if (opt.covariance) {
    for (Combo combo : opt.combos) {
      std::mt19937_64 rng(derive_seed(opt.seed, 12, static_cast<std::uint64_t>(combo)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (long inst = 0; inst < opt.covariance_instances; ++inst) {
        const KernelDraw d = draw_kernel(rng);
        const SampledSignal u = draw_input(rng, combo, d.ts);
        const DcKernel k = d.kernel();
        const double tau = unit(rng) * 3.0 * u.period();
        std::ostringstream where;
        where.precision(6);
        where << "alpha=" << d.alpha << " beta=" << d.beta << " lambda=" << d.lambda << " ts=" << d.ts
              << " N=" << u.size();
        const std::string name = std::string("covariance_") + std::string(to_string(combo));
        rec.run(name + "_sigma", combo, where.str(), [&] {
          const CovarianceOracle orc{u, k, combo};
          return normwise_error(build_covariance(u, k).sigma_y, orc.sigma());
        });
        rec.run(name + "_cross", combo, where.str(), [&] {
          const CovarianceOracle orc{u, k, combo};
          return normwise_error(build_covariance(u, k).cross_eval(tau), orc.cross(tau));
        });
      }
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace ctkrm
