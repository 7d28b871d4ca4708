#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace ctkrm {

/// Raised when an adaptive rule or a series does not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace quad {

template <class T>
struct Result {
  T value{};
  double error = 0.0;
};

struct Options {
  double rel_tol = 1e-12;
  double abs_tol = 1e-300;
  unsigned max_depth = 18;
};

namespace detail {

// One G10/K21 panel. Boost reports the Kronrod-Gauss difference on the
// reference interval [-1, 1], so it is rescaled to [lo, hi] here.
template <class F, class T>
void adaptive_panel(F& f, double lo, double hi, unsigned depth, const Options& opt, Result<T>& acc, bool& failed) {
  double err = 0.0;
  double l1 = 0.0;
  const T value = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, lo, hi, 0, 0.0, &err, &l1);
  err *= 0.5 * (hi - lo);
  if (err <= std::max(opt.rel_tol * std::abs(l1), opt.abs_tol) || depth == 0) {
    if (err > std::max(opt.rel_tol * std::abs(l1), opt.abs_tol)) failed = true;
    acc.value += value;
    acc.error += err;
    return;
  }
  const double mid = 0.5 * (lo + hi);
  adaptive_panel(f, lo, mid, depth - 1, opt, acc, failed);
  adaptive_panel(f, mid, hi, depth - 1, opt, acc, failed);
}

}  // namespace detail

/// Adaptive bisection with a G10/K21 rule per panel. Every panel must reach
/// error <= max(rel_tol * L1(panel), abs_tol); otherwise ConvergenceError.
template <class F>
auto integrate(F&& f, double a, double b, const Options& opt = {}) {
  using T = decltype(f(a));
  Result<T> acc{T(0.0), 0.0};
  if (a == b) return acc;
  bool failed = false;
  detail::adaptive_panel(f, a, b, opt.max_depth, opt, acc, failed);
  if (failed || !std::isfinite(std::abs(acc.value))) {
    std::ostringstream msg;
    msg << "quadrature did not converge on [" << a << ", " << b << "]: error estimate " << acc.error;
    throw ConvergenceError(msg.str());
  }
  return acc;
}

/// Integrates over [a, b] split at the given interior breakpoints.
template <class F>
auto integrate_pieces(F&& f, double a, double b, std::vector<double> breaks, const Options& opt = {}) {
  using T = decltype(f(a));
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  Result<T> total{T(0.0), 0.0};
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (!(hi > lo)) continue;
    const auto piece = integrate(f, lo, hi, opt);
    total.value += piece.value;
    total.error += piece.error;
  }
  return total;
}

/// Sum of term(0), term(1), ... stopped once tail_bound(n), a bound on the
/// sum of all terms from n on, drops below rel_tol times the accumulated
/// magnitude. Throws after max_terms.
template <class Term, class Bound>
auto sum_series(Term&& term, Bound&& tail_bound, double rel_tol = 1e-14, long max_terms = 10000) {
  using T = decltype(term(0L));
  T acc = T(0.0);
  double mag = 0.0;
  for (long n = 0; n < max_terms; ++n) {
    const double bound = tail_bound(n);
    if (bound == 0.0 || (n > 0 && bound < rel_tol * mag)) return acc;
    const T t = term(n);
    acc += t;
    mag += std::abs(t);
  }
  throw ConvergenceError("series did not converge within " + std::to_string(max_terms) + " terms");
}

}  // namespace quad
}  // namespace ctkrm
