#pragma once

// Derived kernels computed straight from their defining integrals and
// series, using nothing but pointwise kernel evaluations. Slow, but
// independent of every closed form in kernels.hpp.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "ctkrm/kernel_concepts.hpp"
#include "ctkrm/quadrature.hpp"

namespace ctkrm::oracle {

using cplx = std::complex<double>;

inline quad::Options default_options() { return {1e-11, 1e-300, 18}; }

namespace detail {

inline void require_cell(long s) {
  if (s < 1) throw std::invalid_argument("cell index must be >= 1");
}

// Bound on sum_{d >= d0} (d + 1) x^d.
inline double diagonal_tail(double x, long d0) {
  const double xd = std::pow(x, static_cast<double>(d0));
  return xd * (static_cast<double>(d0 + 1) / (1.0 - x) + x / ((1.0 - x) * (1.0 - x)));
}

}  // namespace detail

/// \int_{cell s} \int_{cell s2} k(x, y) dy dx with cells ((s-1) ts, s ts].
template <PointwiseKernel K>
double gd(const K& k, double ts, long s, long s2, const quad::Options& opt = default_options()) {
  detail::require_cell(s);
  detail::require_cell(s2);
  const double ylo = (s2 - 1) * ts;
  const double yhi = s2 * ts;
  auto inner = [&](double x) {
    return quad::integrate_pieces([&](double y) { return k(x, y); }, ylo, yhi, {x}, opt).value;
  };
  return quad::integrate(inner, (s - 1) * ts, s * ts, opt).value;
}

/// \int_{cell s2} k(tau, y) dy.
template <PointwiseKernel K>
double ggd(const K& k, double ts, double tau, long s2, const quad::Options& opt = default_options()) {
  detail::require_cell(s2);
  return quad::integrate_pieces([&](double y) { return k(tau, y); }, (s2 - 1) * ts, s2 * ts, {tau}, opt).value;
}

/// sum_{n, n2 >= 0} k(tau + n P, tau2 + n2 P), summed along anti-diagonals.
template <PointwiseKernel K>
double gp(const K& k, double period, double tau, double tau2) {
  const double x = std::exp(-k.decay_rate() * period);
  const double base = k.scale() * std::exp(-k.decay_rate() * (tau + tau2));
  auto term = [&](long d) {
    double acc = 0.0;
    for (long n = 0; n <= d; ++n) acc += k(tau + n * period, tau2 + (d - n) * period);
    return acc;
  };
  return quad::sum_series(term, [&](long d) { return base * detail::diagonal_tail(x, d); });
}

/// sum_{n2 >= 0} k(tau, tau2 + n2 P).
template <PointwiseKernel K>
double ggp(const K& k, double period, double tau, double tau2) {
  const double x = std::exp(-k.decay_rate() * period);
  const double base = k.scale() * std::exp(-k.decay_rate() * (tau + tau2));
  return quad::sum_series([&](long n) { return k(tau, tau2 + n * period); },
                          [&](long n) { return base * std::pow(x, static_cast<double>(n)) / (1.0 - x); });
}

/// sum_{n, n2 >= 0} gd(s + n N, s2 + n2 N).
template <PointwiseKernel K>
double gdp(const K& k, double ts, long n_period, long s, long s2, const quad::Options& opt = default_options()) {
  const double period = ts * static_cast<double>(n_period);
  const double x = std::exp(-k.decay_rate() * period);
  const double base = k.scale() * ts * ts * std::exp(-k.decay_rate() * (s - 1 + s2 - 1) * ts);
  auto term = [&](long d) {
    double acc = 0.0;
    for (long n = 0; n <= d; ++n) acc += gd(k, ts, s + n * n_period, s2 + (d - n) * n_period, opt);
    return acc;
  };
  return quad::sum_series(term, [&](long d) { return base * detail::diagonal_tail(x, d); });
}

/// sum_{n2 >= 0} ggd(tau, s2 + n2 N).
template <PointwiseKernel K>
double ggdp(const K& k, double ts, long n_period, double tau, long s2, const quad::Options& opt = default_options()) {
  const double period = ts * static_cast<double>(n_period);
  const double x = std::exp(-k.decay_rate() * period);
  const double base = k.scale() * ts * std::exp(-k.decay_rate() * (tau + (s2 - 1) * ts));
  return quad::sum_series([&](long n) { return ggd(k, ts, tau, s2 + n * n_period, opt); },
                          [&](long n) { return base * std::pow(x, static_cast<double>(n)) / (1.0 - x); });
}

/// \int_0^P \int_0^P gp(x, y) e^{-j w x} e^{j w2 y} dy dx.
template <PointwiseKernel K>
cplx fourier_w(const K& k, double period, double omega, double omega2, const quad::Options& opt = default_options()) {
  auto inner = [&](double x) {
    auto f = [&](double y) { return gp(k, period, x, y) * std::polar(1.0, omega2 * y); };
    return quad::integrate_pieces(f, 0.0, period, {x}, opt).value * std::polar(1.0, -omega * x);
  };
  return quad::integrate(inner, 0.0, period, opt).value;
}

/// \int_0^P ggp(tau, y) e^{j w2 y} dy.
template <PointwiseKernel K>
cplx fourier_v(const K& k, double period, double tau, double omega2, const quad::Options& opt = default_options()) {
  auto f = [&](double y) { return ggp(k, period, tau, y) * std::polar(1.0, omega2 * y); };
  return quad::integrate_pieces(f, 0.0, period, {std::fmod(tau, period)}, opt).value;
}

/// Fundamental frequency of a record of length `period`.
inline double omega0(double period) { return 2.0 * std::numbers::pi / period; }

}  // namespace ctkrm::oracle
