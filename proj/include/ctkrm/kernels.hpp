#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "ctkrm/kernel_concepts.hpp"
#include "ctkrm/numerics.hpp"
#include "ctkrm/oracle.hpp"

namespace ctkrm {

using numerics::cplx;

/// Structure of the cell-integrated DC kernel on a uniform grid:
/// kd(s, s2) = lambda * d_s * d_s2 * (c0 * rho^|s - s2| + (i0 - c0) [s == s2])
/// with d_s = e^{-alpha (s-1) ts}.
struct DcCellStructure {
  double c0 = 0.0;
  double i0 = 0.0;
  double rho = 0.0;
  double cell_decay = 0.0;  // e^{-alpha ts}
};

/// Diagonal-correlated kernel lambda e^{-alpha (t + t2)} e^{-beta |t - t2|}.
class DcKernel {
 public:
  DcKernel(double alpha, double beta, double lambda) : alpha_(alpha), beta_(beta), lambda_(lambda) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("DcKernel: alpha must be > 0");
    if (!(beta >= 0.0) || beta > alpha) throw std::invalid_argument("DcKernel: beta must lie in [0, alpha]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("DcKernel: lambda must be >= 0");
  }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double lambda() const { return lambda_; }
  double scale() const { return lambda_; }
  double decay_rate() const { return alpha_; }

  DcKernel with_lambda(double lambda) const { return {alpha_, beta_, lambda}; }

  double operator()(double t, double t2) const {
    if (t < 0.0 || t2 < 0.0) throw std::domain_error("DcKernel: negative time argument");
    return lambda_ * std::exp(-alpha_ * (t + t2) - beta_ * std::abs(t - t2));
  }

  // Cell-integrated kernel: cells ((s-1) ts, s ts].
  double gd(double ts, long s, long s2) const {
    check_cell(s);
    check_cell(s2);
    if (s == s2) return lambda_ * std::exp(-2.0 * alpha_ * (s - 1) * ts) * diag_integral(ts);
    const long lo = std::min(s, s2);
    const long hi = std::max(s, s2);
    return lambda_ * cell_exp(slow(), ts, lo) * cell_exp(fast(), ts, hi);
  }

  double ggd(double ts, double tau, long s2) const {
    check_cell(s2);
    check_time(tau);
    const double lo = (s2 - 1) * ts;
    const double hi = s2 * ts;
    double value = 0.0;
    if (tau > lo) value += std::exp(-fast() * tau) * numerics::interval_exp(slow(), lo, std::min(tau, hi));
    if (tau < hi) value += std::exp(-slow() * tau) * numerics::interval_exp(fast(), std::max(tau, lo), hi);
    return lambda_ * value;
  }

  double gp(double period, double tau, double tau2) const {
    check_period_arg(period, tau);
    check_period_arg(period, tau2);
    const double amp = same_period_sum(period);
    const double r = cross_period_ratio(period);
    const double d = std::abs(tau - tau2);
    // e^{-alpha (t + t2)} (e^{-beta d} (amp + amp r) + amp r e^{beta d})
    const double near = std::exp(-alpha_ * (tau + tau2) - beta_ * d);
    const double far = std::exp(-alpha_ * (tau + tau2) + beta_ * d);
    return lambda_ * amp * (near * (1.0 + r) + far * r);
  }

  double ggp(double period, double tau, double tau2) const {
    check_time(tau);
    check_period_arg(period, tau2);
    // n2 < count puts tau2 + n2 P below tau.
    const long count = tau > tau2 ? static_cast<long>(std::ceil((tau - tau2) / period)) : 0;
    const double below = std::exp(-fast() * tau - slow() * tau2) * numerics::geometric_head(slow(), period, count);
    const double above = std::exp(-slow() * tau - fast() * (tau2 + count * period)) *
                         numerics::geometric_tail(fast(), period);
    return lambda_ * (below + above);
  }

  // Periodized cell kernel for a record of n_period samples.
  double gdp(double ts, long n_period, long s, long s2) const {
    check_cell(s);
    check_cell(s2);
    const double period = ts * static_cast<double>(n_period);
    const double amp = same_period_sum(period);
    const double r = cross_period_ratio(period);
    const double tail = numerics::geometric_tail(fast(), period);
    if (s == s2) {
      const double cross = cell_exp(slow(), ts, s) * cell_exp(fast(), ts, s);
      return lambda_ * amp * (std::exp(-2.0 * alpha_ * (s - 1) * ts) * diag_integral(ts) + 2.0 * r * cross);
    }
    const long lo = std::min(s, s2);
    const long hi = std::max(s, s2);
    return lambda_ * amp *
           (cell_exp(slow(), ts, lo) * cell_exp(fast(), ts, hi) * tail +
            r * cell_exp(slow(), ts, hi) * cell_exp(fast(), ts, lo));
  }

  double ggdp(double ts, long n_period, double tau, long s2) const {
    check_cell(s2);
    check_time(tau);
    const double period = ts * static_cast<double>(n_period);
    const long c = static_cast<long>(std::ceil(tau / ts));  // cell holding tau
    const long n_below = c > s2 ? ceil_div(c - s2, n_period) : 0;
    const long n_above = c >= s2 ? (c - s2) / n_period + 1 : 0;
    double value = 0.0;
    if (n_below > 0) {
      value += lambda_ * std::exp(-fast() * tau) * cell_exp(slow(), ts, s2) *
               numerics::geometric_head(slow(), period, n_below);
    }
    value += lambda_ * std::exp(-slow() * tau) * cell_exp(fast(), ts, s2 + n_above * n_period) *
             numerics::geometric_tail(fast(), period);
    if (c >= 1 && c >= s2 && (c - s2) % n_period == 0) value += ggd(ts, tau, c);
    return value;
  }

  /// sum_{n2 >= 0} gd(s, s2 + n2 N); also the cell integral of ggdp(., s2) over cell s.
  double gd_shifted_sum(double ts, long n_period, long s, long s2) const {
    check_cell(s);
    check_cell(s2);
    const double period = ts * static_cast<double>(n_period);
    const long n_below = s > s2 ? ceil_div(s - s2, n_period) : 0;
    const long n_above = s >= s2 ? (s - s2) / n_period + 1 : 0;
    double value = 0.0;
    if (n_below > 0) {
      value += cell_exp(fast(), ts, s) * cell_exp(slow(), ts, s2) * numerics::geometric_head(slow(), period, n_below);
    }
    value += cell_exp(slow(), ts, s) * cell_exp(fast(), ts, s2 + n_above * n_period) *
             numerics::geometric_tail(fast(), period);
    value *= lambda_;
    if (s >= s2 && (s - s2) % n_period == 0) value += gd(ts, s, s);
    return value;
  }

  /// Quadrant transform \int\int_{[0,inf)^2} k(x, y) e^{-j w x} e^{j w2 y} dx dy.
  /// For w, w2 on the harmonic grid of a period P it equals the [0, P]^2
  /// transform of the periodized kernel.
  cplx fourier_w(double omega, double omega2) const {
    const cplx j(0.0, 1.0);
    const cplx a_plus_b(fast(), 0.0);
    return lambda_ / (2.0 * alpha_ + j * (omega - omega2)) * (1.0 / (a_plus_b - j * omega2) + 1.0 / (a_plus_b + j * omega));
  }

  /// \int_0^inf k(tau, y) e^{j w2 y} dy.
  cplx fourier_v(double tau, double omega2) const {
    check_time(tau);
    const cplx c1(slow(), -omega2);
    const cplx c2(fast(), -omega2);
    const cplx first = std::exp(-fast() * tau) * tau * numerics::phi1(cplx(-c1 * tau));
    const cplx second = std::exp(cplx(-2.0 * alpha_, omega2) * tau) / c2;
    return lambda_ * (first + second);
  }

  /// \int_lo^hi fourier_v(x, w2) dx.
  cplx fourier_v_interval(double lo, double hi, double omega2) const {
    check_time(lo);
    if (hi < lo) throw std::invalid_argument("fourier_v_interval: hi < lo");
    const cplx c1(slow(), -omega2);
    const cplx c2(fast(), -omega2);
    const cplx apb(fast(), 0.0);
    const double len = hi - lo;
    const cplx head = lo * numerics::phi1(cplx(-c1 * lo));
    const cplx first = head * numerics::interval_exp(apb, lo, hi) +
                       std::exp(-(apb + c1) * lo) * numerics::triangle_exp(c1, apb, len);
    const cplx second = numerics::interval_exp(cplx(2.0 * alpha_, -omega2), lo, hi) / c2;
    return lambda_ * (first + second);
  }

  DcCellStructure cell_structure(double ts) const {
    DcCellStructure out;
    out.c0 = ts * ts * numerics::phi1(-slow() * ts) * numerics::phi1(-fast() * ts);
    out.i0 = diag_integral(ts);
    out.rho = std::exp(-beta_ * ts);
    out.cell_decay = std::exp(-alpha_ * ts);
    return out;
  }

 private:
  double slow() const { return alpha_ - beta_; }
  double fast() const { return alpha_ + beta_; }

  static long ceil_div(long a, long b) { return (a + b - 1) / b; }

  // \int_{(s-1) ts}^{s ts} e^{-c x} dx
  static double cell_exp(double c, double ts, long s) { return numerics::interval_exp(c, (s - 1) * ts, s * ts); }

  // \int\int_{[0, ts]^2} e^{-alpha (x + y) - beta |x - y|}
  double diag_integral(double ts) const { return 2.0 * numerics::triangle_exp(slow(), fast(), ts); }

  // sum_n e^{-2 alpha n P}
  double same_period_sum(double period) const { return numerics::geometric_tail(2.0 * alpha_, period); }

  // q / (1 - q), q = e^{-(alpha + beta) P}
  double cross_period_ratio(double period) const {
    return numerics::geometric_tail(fast(), period) - 1.0;
  }

  static void check_cell(long s) {
    if (s < 1) throw std::invalid_argument("cell index must be >= 1");
  }
  static void check_time(double t) {
    if (!(t >= 0.0)) throw std::domain_error("negative or non-finite time argument");
  }
  static void check_period_arg(double period, double t) {
    if (!(period > 0.0)) throw std::invalid_argument("period must be > 0");
    if (!(t >= 0.0) || !(t < period)) throw std::domain_error("argument outside [0, period)");
  }

  double alpha_;
  double beta_;
  double lambda_;
};

/// The constants lambda_1..lambda_4 of the DC cell and periodized kernels.
struct DerivedDcConstants {
  double lambda1 = 0.0;  // off-diagonal cell factor
  double lambda2 = 0.0;  // diagonal cell factor
  double lambda3 = 0.0;  // cross-period weight, depends on the record length
  double lambda4 = 0.0;  // diagonal factor with beta -> -beta

  static DerivedDcConstants compute(const DcKernel& k, double ts, long n_period) {
    const double a = k.alpha();
    const double b = k.beta();
    const double period = ts * static_cast<double>(n_period);
    DerivedDcConstants c;
    c.lambda1 = ts * ts * numerics::phi1((a - b) * ts) * numerics::phi1((a + b) * ts);
    c.lambda2 = 2.0 * std::exp(2.0 * a * ts) * numerics::triangle_exp(a - b, a + b, ts);
    c.lambda4 = 2.0 * std::exp(2.0 * a * ts) * numerics::triangle_exp(a + b, a - b, ts);
    const double q_tail = numerics::geometric_tail(a + b, period);
    c.lambda3 = numerics::geometric_tail(2.0 * a, period) * (q_tail - 1.0);
    return c;
  }
};

/// Hides every closed-form hook so that the generic quadrature/series
/// fallback is used.
template <PointwiseKernel K>
class PointwiseOnly {
 public:
  explicit PointwiseOnly(K inner) : inner_(std::move(inner)) {}
  double operator()(double t, double t2) const { return inner_(t, t2); }
  double scale() const { return inner_.scale(); }
  double decay_rate() const { return inner_.decay_rate(); }
  const K& inner() const { return inner_; }

 private:
  K inner_;
};

// Derived-kernel entry points. Each uses the kernel's closed-form hook when
// present and otherwise falls back to the oracle.

template <PointwiseKernel K>
double kappa_g(const K& k, double tau, double tau2) {
  return k(tau, tau2);
}

template <PointwiseKernel K>
double kappa_gd(const K& k, double ts, long s, long s2) {
  if constexpr (requires { k.gd(ts, s, s2); }) {
    return k.gd(ts, s, s2);
  } else {
    return oracle::gd(k, ts, s, s2);
  }
}

template <PointwiseKernel K>
double kappa_ggd(const K& k, double ts, double tau, long s2) {
  if constexpr (requires { k.ggd(ts, tau, s2); }) {
    return k.ggd(ts, tau, s2);
  } else {
    return oracle::ggd(k, ts, tau, s2);
  }
}

template <PointwiseKernel K>
double kappa_gp(const K& k, double period, double tau, double tau2) {
  if constexpr (requires { k.gp(period, tau, tau2); }) {
    return k.gp(period, tau, tau2);
  } else {
    if (!(tau >= 0.0 && tau < period && tau2 >= 0.0 && tau2 < period)) {
      throw std::domain_error("kappa_gp: argument outside [0, period)");
    }
    return oracle::gp(k, period, tau, tau2);
  }
}

template <PointwiseKernel K>
double kappa_ggp(const K& k, double period, double tau, double tau2) {
  if constexpr (requires { k.ggp(period, tau, tau2); }) {
    return k.ggp(period, tau, tau2);
  } else {
    if (!(tau >= 0.0 && tau2 >= 0.0 && tau2 < period)) throw std::domain_error("kappa_ggp: argument out of range");
    return oracle::ggp(k, period, tau, tau2);
  }
}

template <PointwiseKernel K>
double kappa_gdp(const K& k, double ts, long n_period, long s, long s2) {
  if constexpr (requires { k.gdp(ts, n_period, s, s2); }) {
    return k.gdp(ts, n_period, s, s2);
  } else {
    return oracle::gdp(k, ts, n_period, s, s2);
  }
}

template <PointwiseKernel K>
double kappa_ggdp(const K& k, double ts, long n_period, double tau, long s2) {
  if constexpr (requires { k.ggdp(ts, n_period, tau, s2); }) {
    return k.ggdp(ts, n_period, tau, s2);
  } else {
    return oracle::ggdp(k, ts, n_period, tau, s2);
  }
}

template <PointwiseKernel K>
double kappa_gd_shifted_sum(const K& k, double ts, long n_period, long s, long s2) {
  if constexpr (requires { k.gd_shifted_sum(ts, n_period, s, s2); }) {
    return k.gd_shifted_sum(ts, n_period, s, s2);
  } else {
    const double period = ts * static_cast<double>(n_period);
    const double x = std::exp(-k.decay_rate() * period);
    const double base = k.scale() * ts * ts * std::exp(-k.decay_rate() * (s - 1 + s2 - 1) * ts);
    return quad::sum_series([&](long n) { return oracle::gd(k, ts, s, s2 + n * n_period); },
                            [&](long n) { return base * std::pow(x, static_cast<double>(n)) / (1.0 - x); });
  }
}

/// \int_0^P \int_0^P gp(x, y) e^{-j n w0 x} e^{j n2 w0 y} dx dy, w0 = 2 pi / P.
template <PointwiseKernel K>
cplx fourier_kernel_integrals(const K& k, double period, long n, long n2) {
  const double w0 = oracle::omega0(period);
  if constexpr (requires { k.fourier_w(0.0, 0.0); }) {
    return k.fourier_w(n * w0, n2 * w0);
  } else {
    return oracle::fourier_w(k, period, n * w0, n2 * w0);
  }
}

/// \int_0^P ggp(tau, y) e^{j n2 w0 y} dy, w0 = 2 pi / P.
template <PointwiseKernel K>
cplx fourier_cross_integral(const K& k, double period, double tau, long n2) {
  const double w0 = oracle::omega0(period);
  if constexpr (requires { k.fourier_v(tau, 0.0); }) {
    return k.fourier_v(tau, n2 * w0);
  } else {
    return oracle::fourier_v(k, period, tau, n2 * w0);
  }
}

}  // namespace ctkrm
