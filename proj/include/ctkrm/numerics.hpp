#pragma once

// Exponential-integral primitives shared by the closed-form kernels.
//
// Every closed form in this library reduces to integrals of e^{-c x} over
// intervals and triangles. They are evaluated through phi1(z) = (e^z - 1)/z
// and its divided differences so that small rates (c*L -> 0) and coincident
// rates (alpha -> beta) stay accurate without special-casing the callers.

#include <cmath>
#include <complex>
#include <limits>
#include <type_traits>

namespace ctkrm::numerics {

using cplx = std::complex<double>;

template <class T>
inline constexpr bool is_complex_v = !std::is_same_v<T, double>;

template <class T>
inline T exp_of(T z) {
  return std::exp(z);
}

/// phi1(z) = (e^z - 1)/z, with phi1(0) = 1.
inline double phi1(double z) {
  if (z == 0.0) return 1.0;
  return std::expm1(z) / z;
}

inline cplx phi1(cplx z) {
  if (std::abs(z) < 0.5) {
    // sum_k z^k / (k+1)!
    cplx term = 1.0;
    cplx sum = 1.0;
    for (int k = 1; k < 24; ++k) {
      term *= z / static_cast<double>(k + 1);
      sum += term;
    }
    return sum;
  }
  return (std::exp(z) - 1.0) / z;
}

/// J_k(z) = \int_0^1 t^k e^{z t} dt, so that d^k/dz^k phi1(z) = J_k(z).
template <class T>
T exp_moment(int k, T z) {
  if (std::abs(z) < 2.0) {
    // sum_i z^i / (i! (k + i + 1))
    T power = 1.0;
    T sum = 1.0 / static_cast<double>(k + 1);
    for (int i = 1; i < 60; ++i) {
      power *= z / static_cast<double>(i);
      const T term = power / static_cast<double>(k + i + 1);
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  const T ez = exp_of(z);
  T value = phi1(z);
  for (int j = 1; j <= k; ++j) value = (ez - static_cast<double>(j) * value) / z;
  return value;
}

/// Divided difference (phi1(x) - phi1(y)) / (x - y); phi1'(x) when x == y.
template <class T>
T phi1_divided_difference(T x, T y) {
  const T d = x - y;
  if (std::abs(d) > 1e-2) return (phi1(x) - phi1(y)) / d;
  // Symmetric Taylor expansion about the midpoint.
  const T m = 0.5 * (x + y);
  const T d2 = d * d;
  return exp_moment(1, m) + exp_moment(3, m) * d2 / 24.0 +
         exp_moment(5, m) * d2 * d2 / 1920.0;
}

/// \int_{lo}^{hi} e^{-c x} dx.
template <class T>
T interval_exp(T c, double lo, double hi) {
  const double len = hi - lo;
  if (len == 0.0) return T(0.0);
  return exp_of(T(-c * lo)) * len * phi1(T(-c * len));
}

/// \int_0^L e^{-c_outer v} \int_0^v e^{-c_inner w} dw dv.
template <class T>
T triangle_exp(T c_inner, T c_outer, double len) {
  if (len == 0.0) return T(0.0);
  const T z_inner = -c_inner * len;
  const T z_outer = -c_outer * len;
  return len * len * phi1_divided_difference(T(z_inner + z_outer), z_outer);
}

/// sum_{n=0}^{count-1} e^{-c n P}, stable as c*P -> 0.
inline double geometric_head(double rate, double period, long count) {
  if (count <= 0) return 0.0;
  const double x = rate * period;
  if (x == 0.0) return static_cast<double>(count);
  return std::expm1(-x * static_cast<double>(count)) / std::expm1(-x);
}

/// sum_{n=0}^{inf} e^{-c n P} for c*P > 0.
inline double geometric_tail(double rate, double period) {
  return -1.0 / std::expm1(-rate * period);
}

}  // namespace ctkrm::numerics
