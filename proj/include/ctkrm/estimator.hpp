#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctkrm/covariance.hpp"
#include "ctkrm/signals.hpp"

namespace ctkrm {

/// Raised when a factorization that must succeed does not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// g_hat(tau) = Sigma_gy(tau) c with c = (Sigma_y + gamma I)^{-1} y.
struct RegularizedEstimate {
  Eigen::VectorXd coeffs;
  CovariancePair cov;
  double gamma = 0.0;
  double residual = 0.0;  // ||(Sigma_y + gamma I) c - y||
  std::optional<SampledSignal> train_input;
};

namespace detail {

inline Eigen::VectorXd spd_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& y, double& residual) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("Cholesky factorization failed: regularized Gram matrix is not positive definite");
  }
  Eigen::VectorXd c = llt.solve(y);
  Eigen::VectorXd r = y - m.selfadjointView<Eigen::Lower>() * c;
  const double target = 1e-10 * y.norm();
  for (int it = 0; it < 3 && r.norm() > target; ++it) {
    c += llt.solve(r);
    r = y - m.selfadjointView<Eigen::Lower>() * c;
  }
  residual = r.norm();
  return c;
}

inline void require_finite(const Eigen::VectorXd& y) {
  if (!y.allFinite()) throw std::invalid_argument("non-finite output samples");
}

}  // namespace detail

/// Regularized estimate for a given covariance and regularization gamma > 0.
inline RegularizedEstimate fit(const CovariancePair& cov, const Eigen::VectorXd& y, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("fit: gamma must be > 0");
  if (y.size() != cov.size()) throw std::invalid_argument("fit: output length does not match the covariance");
  detail::require_finite(y);
  RegularizedEstimate est;
  Eigen::MatrixXd m = cov.sigma_y;
  m.diagonal().array() += gamma;
  est.coeffs = detail::spd_solve(m, y, est.residual);
  est.cov = cov;
  est.gamma = gamma;
  return est;
}

/// Estimate with the transient prior added to the output covariance; sigma2
/// plays the role of gamma.
template <PointwiseKernel K>
RegularizedEstimate fit_with_transient(const CovariancePair& cov, const TransientKernel<K>& tk,
                                       const Eigen::VectorXd& y, double sigma2) {
  const auto t = sample_times(cov.ts, static_cast<std::size_t>(cov.size()));
  return fit(augment_transient(cov, tk, t), y, sigma2);
}

/// g_hat on the grid.
inline Eigen::VectorXd eval_impulse(const RegularizedEstimate& est, std::span<const double> grid) {
  for (double t : grid) {
    if (t < 0.0) throw std::domain_error("eval_impulse: negative grid time");
  }
  return est.cov.cross->impulse(grid, est.coeffs);
}

/// Number of cells after which the estimate's envelope e^{-r tau} drops below 1e-10.
inline long default_horizon(const RegularizedEstimate& est, double ts) {
  const double rate = est.cov.cross->decay_rate();
  const double cells = std::ceil(std::log(1e10) / (rate * ts));
  return static_cast<long>(std::min(cells, 1e7));
}

/// y_hat(k ts) = \int_0^inf g_hat(x) u(k ts - x) dx for k = first..M-1.
/// ZOH inputs use cell integrals of g_hat over `horizon` cells; band-limited
/// inputs use the periodic Fourier reconstruction.
inline Eigen::VectorXd predict_output(const RegularizedEstimate& est, const SampledSignal& u_val, long horizon,
                                      long first = 0) {
  const long m = static_cast<long>(u_val.size());
  if (first < 0 || first >= m) throw std::invalid_argument("predict_output: first output index out of range");
  Eigen::VectorXd out(m - first);
  if (u_val.intersample() == Intersample::Zoh) {
    if (horizon < 1) throw std::invalid_argument("predict_output: horizon must be >= 1");
    if (u_val.past() == Past::Unknown && first < horizon) {
      throw std::invalid_argument("predict_output: validation input lacks the " + std::to_string(horizon - first) +
                                  " past samples needed for the requested horizon");
    }
    // Under ZA no output index reaches further back than the record start.
    if (u_val.past() == Past::Za) horizon = std::min(horizon, m);
    const Eigen::VectorXd cells = est.cov.cross->cell_integrals(u_val.ts(), horizon, est.coeffs);
    for (long k = first; k < m; ++k) {
      double acc = 0.0;
      for (long s = 1; s <= horizon; ++s) {
        if (u_val.past() == Past::Za && k - s < 0) break;
        acc += u_val.at(k - s) * cells[s - 1];
      }
      out[k - first] = acc;
    }
    return out;
  }
  const auto u = dft(u_val);
  require_no_nyquist(u_val, u);
  std::vector<double> omegas;
  for (int b = 0; b <= u.max_bin; ++b) omegas.push_back(b * u.omega0);
  const Eigen::VectorXcd spec = est.cov.cross->spectrum(omegas, est.coeffs);
  for (long k = first; k < m; ++k) {
    const double t = static_cast<double>(k) * u_val.ts();
    double acc = (u.at(0) * spec[0]).real();
    for (int b = 1; b <= u.max_bin; ++b) acc += 2.0 * (u.at(b) * spec[b] * std::polar(1.0, b * u.omega0 * t)).real();
    out[k - first] = acc / static_cast<double>(m);
  }
  return out;
}

}  // namespace ctkrm
