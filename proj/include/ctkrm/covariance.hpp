#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ctkrm/kernels.hpp"
#include "ctkrm/quadrature.hpp"
#include "ctkrm/signals.hpp"

namespace ctkrm {

enum class Combo { ZohPa, ZohZa, BlPa };

inline std::string_view to_string(Combo c) {
  switch (c) {
    case Combo::ZohPa: return "zoh-pa";
    case Combo::ZohZa: return "zoh-za";
    case Combo::BlPa: return "bl-pa";
  }
  return "zoh-za";
}

inline Combo parse_combo(std::string_view s) {
  if (s == "zoh-pa") return Combo::ZohPa;
  if (s == "zoh-za") return Combo::ZohZa;
  if (s == "bl-pa") return Combo::BlPa;
  throw std::invalid_argument("unknown combo: " + std::string(s));
}

/// tau -> Sigma_gy(tau), the covariance between g(tau) and the noiseless
/// outputs at t_j = j ts. Linear functionals of g that the estimator needs
/// (grid values, cell integrals, Fourier transform) are exposed on the
/// coefficient-weighted combination sum_j c_j Sigma_gy(tau)[j].
class CrossCovariance {
 public:
  virtual ~CrossCovariance() = default;

  virtual std::size_t size() const = 0;
  virtual Eigen::RowVectorXd row(double tau) const = 0;
  /// Rate r with |Sigma_gy(tau)[j]| <= C e^{-r tau}.
  virtual double decay_rate() const = 0;

  /// sum_j c_j Sigma_gy(tau)[j] on each grid point.
  virtual Eigen::VectorXd impulse(std::span<const double> grid, const Eigen::VectorXd& c) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) out[static_cast<Eigen::Index>(i)] = row(grid[i]).dot(c);
    return out;
  }

  /// \int_{(s-1) ts}^{s ts} impulse, for s = 1..count.
  virtual Eigen::VectorXd cell_integrals(double ts, long count, const Eigen::VectorXd& c) const {
    Eigen::VectorXd out(count);
    const double floor = 1e-14 * magnitude(c, count * ts) * ts;
    for (long s = 1; s <= count; ++s) {
      auto f = [&](double x) {
        const double xs[1] = {x};
        return impulse(xs, c)[0];
      };
      out[s - 1] = quad::integrate(f, (s - 1) * ts, s * ts, {1e-10, floor, 12}).value;
    }
    return out;
  }

  /// \int_0^inf impulse(x) e^{-j w x} dx for each w.
  virtual Eigen::VectorXcd spectrum(std::span<const double> omegas, const Eigen::VectorXd& c) const {
    const double horizon = 40.0 / decay_rate();
    // Oscillatory panels can cancel to zero, so relative accuracy alone may never be met.
    const double floor = 1e-14 * magnitude(c, horizon) * horizon / 64.0;
    Eigen::VectorXcd out(static_cast<Eigen::Index>(omegas.size()));
    for (std::size_t i = 0; i < omegas.size(); ++i) {
      auto f = [&](double x) {
        const double xs[1] = {x};
        return impulse(xs, c)[0] * std::polar(1.0, -omegas[i] * x);
      };
      std::vector<double> breaks;
      for (int p = 1; p < 64; ++p) breaks.push_back(horizon * p / 64.0);
      out[static_cast<Eigen::Index>(i)] = quad::integrate_pieces(f, 0.0, horizon, breaks, {1e-10, floor, 12}).value;
    }
    return out;
  }

 protected:
  // Largest |impulse| on a coarse grid of [0, end].
  double magnitude(const Eigen::VectorXd& c, double end) const {
    std::vector<double> g(257);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = end * static_cast<double>(i) / 256.0;
    return impulse(g, c).cwiseAbs().maxCoeff();
  }
};

/// Output covariance Sigma_y0 together with its cross-covariance evaluator.
struct CovariancePair {
  Eigen::MatrixXd sigma_y;
  std::shared_ptr<const CrossCovariance> cross;
  Combo combo = Combo::ZohZa;
  double ts = 0.0;

  Eigen::RowVectorXd cross_eval(double tau) const { return cross->row(tau); }
  Eigen::Index size() const { return sigma_y.rows(); }
};

/// alpha_t times the system kernel, used for the transient term.
template <PointwiseKernel K>
struct TransientKernel {
  K base;
  double alpha_t = 0.0;

  double operator()(double t, double t2) const { return alpha_t * base(t, t2); }
};

/// Regressors Phi(i, s-1) = u((i - s) ts), i = 0..N-1, s = 1..N, with the
/// past taken from u.past().
inline Eigen::MatrixXd zoh_regressors(const SampledSignal& u) {
  const auto n = static_cast<long>(u.size());
  Eigen::MatrixXd phi(n, n);
  for (long i = 0; i < n; ++i) {
    for (long s = 1; s <= n; ++s) phi(i, s - 1) = u.at(i - s);
  }
  return phi;
}

/// Symmetric Gram matrix K(a, b) = f(a, b) for a, b in 0..n-1.
template <class F>
Eigen::MatrixXd symmetric_gram(long n, F&& f) {
  Eigen::MatrixXd g(n, n);
  for (long b = 0; b < n; ++b) {
    for (long a = b; a < n; ++a) {
      g(a, b) = f(a, b);
      g(b, a) = g(a, b);
    }
  }
  return g;
}

/// Phi * K * Phi^T, symmetrized.
inline Eigen::MatrixXd congruence(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& k) {
  Eigen::MatrixXd tmp = phi * k;
  Eigen::MatrixXd out(phi.rows(), phi.rows());
  out.noalias() = tmp * phi.transpose();
  return 0.5 * (out + out.transpose());
}

/// Sigma / lambda for the DC kernel with ZOH input, using the cell structure
/// kd = lambda D (c0 P + (i0 - c0) I) D, P(s, s2) = rho^|s - s2|, D = diag(e^{-alpha (s-1) ts}).
/// Cost is one matrix product plus O(N^2) work.
inline Eigen::MatrixXd dc_cell_congruence(const Eigen::MatrixXd& phi, const DcCellStructure& cs) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index m = phi.cols();
  const double rho = cs.rho;
  const double c2 = 1.0 - rho * rho;
  const double extra = cs.i0 - cs.c0;  // either sign
  // Under ZA, Phi is strictly lower triangular and every factor below keeps
  // that shape, so a triangular product replaces the rank update.
  const bool lower = n == m && phi.triangularView<Eigen::Upper>().toDenseMatrix().isZero(0.0);

  // out = scale * G G^T (overwrite) or out += scale * G G^T.
  auto product = [&](const Eigen::MatrixXd& g, double scale, Eigen::MatrixXd& out, bool add) {
    if (lower) {
      if (add) {
        Eigen::MatrixXd tmp(n, n);
        tmp.noalias() = g.triangularView<Eigen::StrictlyLower>() * g.transpose();
        out += scale * tmp;
      } else {
        out.noalias() = g.triangularView<Eigen::StrictlyLower>() * g.transpose();
        out *= scale;
      }
    } else {
      if (!add) out.setZero(n, n);
      out.selfadjointView<Eigen::Lower>().rankUpdate(g, scale);
    }
  };

  // B = Phi D
  Eigen::MatrixXd g(n, m);
  double d = 1.0;
  for (Eigen::Index s = 0; s < m; ++s) {
    g.col(s) = phi.col(s) * d;
    d *= cs.cell_decay;
  }
  // G = B R with R the Cholesky factor of P: R(s, s2) = rho^{s - s2} c_{s2}, c_1 = 1, c_s = sqrt(1 - rho^2).
  auto apply_r = [&](Eigen::MatrixXd& x) {
    const double c = std::sqrt(std::max(c2, 0.0));
    for (Eigen::Index s = m - 2; s >= 0; --s) x.col(s) += rho * x.col(s + 1);  // suffix sums
    for (Eigen::Index s = 1; s < m; ++s) x.col(s) *= c;
  };

  // c0 P + extra I = c0 R (I + eps R^{-1} R^{-T}) R^T; the middle factor is
  // tridiagonal, so its Cholesky factor is bidiagonal when it exists.
  Eigen::VectorXd diag(m);
  Eigen::VectorXd sub = Eigen::VectorXd::Zero(m);  // sub(s) couples s and s-1
  bool bidiagonal = c2 > 1e-6 && cs.c0 > 0.0;
  if (bidiagonal) {
    const double c = std::sqrt(c2);
    const double eps = extra / cs.c0;
    // R^{-1} has diagonal 1, 1/c, ..., 1/c and subdiagonal -rho/c.
    for (Eigen::Index s = 0; s < m && bidiagonal; ++s) {
      const double rdiag = s == 0 ? 1.0 : 1.0 / c;
      const double rsub = s == 0 ? 0.0 : -rho / c;
      const double tdiag = 1.0 + eps * (rdiag * rdiag + rsub * rsub);
      double pivot = tdiag;
      if (s > 0) {
        const double rdiag_prev = s == 1 ? 1.0 : 1.0 / c;
        sub(s) = eps * rsub * rdiag_prev / diag(s - 1);
        pivot -= sub(s) * sub(s);
      }
      if (!(pivot > 0.0)) {
        bidiagonal = false;
      } else {
        diag(s) = std::sqrt(pivot);
      }
    }
  }

  Eigen::MatrixXd out;
  if (bidiagonal) {
    apply_r(g);
    for (Eigen::Index s = 0; s < m; ++s) {
      g.col(s) *= diag(s);
      if (s + 1 < m) g.col(s) += sub(s + 1) * g.col(s + 1);
    }
    product(g, cs.c0, out, false);
  } else {
    Eigen::MatrixXd gr = g;
    apply_r(gr);
    product(gr, cs.c0, out, false);
    if (extra != 0.0) product(g, extra, out, true);
  }
  if (!lower) out.triangularView<Eigen::StrictlyUpper>() = out.transpose().eval();
  return out;
}

namespace detail {

// Cross-covariance for ZOH input: Sigma_gy(tau)[j] = sum_s2 Phi(j, s2-1) kgg(tau, s2).
template <PointwiseKernel K>
class ZohCross final : public CrossCovariance {
 public:
  ZohCross(K k, Eigen::MatrixXd phi, double ts, bool periodic)
      : k_(std::move(k)), phi_(std::move(phi)), ts_(ts), periodic_(periodic) {}

  std::size_t size() const override { return static_cast<std::size_t>(phi_.rows()); }
  double decay_rate() const override { return k_.decay_rate(); }

  Eigen::RowVectorXd row(double tau) const override {
    if (tau < 0.0) throw std::domain_error("cross covariance: negative tau");
    return (phi_ * kernel_column(tau)).transpose();
  }

  Eigen::VectorXd impulse(std::span<const double> grid, const Eigen::VectorXd& c) const override {
    const Eigen::VectorXd w = phi_.transpose() * c;
    Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < 0.0) throw std::domain_error("impulse: negative grid time");
      out[static_cast<Eigen::Index>(i)] = kernel_column(grid[i]).dot(w);
    }
    return out;
  }

  Eigen::VectorXd cell_integrals(double ts, long count, const Eigen::VectorXd& c) const override {
    if (std::abs(ts - ts_) > 1e-12 * ts_) return CrossCovariance::cell_integrals(ts, count, c);
    const Eigen::VectorXd w = phi_.transpose() * c;
    const long n = static_cast<long>(w.size());
    Eigen::VectorXd out(count);
    for (long s = 1; s <= count; ++s) {
      double acc = 0.0;
      for (long s2 = 1; s2 <= n; ++s2) {
        const double kv =
            periodic_ ? kappa_gd_shifted_sum(k_, ts_, n, s, s2) : kappa_gd(k_, ts_, s, s2);
        acc += w[s2 - 1] * kv;
      }
      out[s - 1] = acc;
    }
    return out;
  }

  Eigen::VectorXcd spectrum(std::span<const double> omegas, const Eigen::VectorXd& c) const override {
    if constexpr (requires { k_.fourier_v_interval(0.0, 1.0, 0.0); }) {
      const Eigen::VectorXd w = phi_.transpose() * c;
      const long n = static_cast<long>(w.size());
      const double period = ts_ * static_cast<double>(n);
      const double x = std::exp(-k_.decay_rate() * period);
      Eigen::VectorXcd out(static_cast<Eigen::Index>(omegas.size()));
      for (std::size_t i = 0; i < omegas.size(); ++i) {
        cplx acc = 0.0;
        for (long s2 = 1; s2 <= n; ++s2) {
          if (w[s2 - 1] == 0.0) continue;
          auto cell = [&](long m) { return k_.fourier_v_interval((m - 1) * ts_, m * ts_, -omegas[i]); };
          cplx value = cell(s2);
          if (periodic_) {
            const double base = k_.scale() * ts_ / k_.decay_rate() * std::exp(-k_.decay_rate() * (s2 - 1) * ts_);
            value = quad::sum_series([&](long p) { return cell(s2 + p * n); },
                                     [&](long p) { return base * std::pow(x, static_cast<double>(p)) / (1.0 - x); });
          }
          acc += w[s2 - 1] * value;
        }
        out[static_cast<Eigen::Index>(i)] = acc;
      }
      return out;
    } else {
      return CrossCovariance::spectrum(omegas, c);
    }
  }

 private:
  Eigen::VectorXd kernel_column(double tau) const {
    const long n = static_cast<long>(phi_.cols());
    Eigen::VectorXd kv(n);
    for (long s2 = 1; s2 <= n; ++s2) {
      kv[s2 - 1] = periodic_ ? kappa_ggdp(k_, ts_, n, tau, s2) : kappa_ggd(k_, ts_, tau, s2);
    }
    return kv;
  }

  K k_;
  Eigen::MatrixXd phi_;
  double ts_;
  bool periodic_;
};

// Cross-covariance for band-limited periodic input:
// Sigma_gy(tau)[j] = (1/N) sum_n2 conj(A(j, n2)) V(tau, n2 w0), A(j, n) = e^{j n w0 t_j} U(n w0).
template <PointwiseKernel K>
class BlCross final : public CrossCovariance {
 public:
  BlCross(K k, Eigen::MatrixXcd a, double period, int max_bin)
      : k_(std::move(k)), a_(std::move(a)), period_(period), max_bin_(max_bin) {}

  std::size_t size() const override { return static_cast<std::size_t>(a_.rows()); }
  double decay_rate() const override { return k_.decay_rate(); }

  Eigen::RowVectorXd row(double tau) const override {
    if (tau < 0.0) throw std::domain_error("cross covariance: negative tau");
    const Eigen::VectorXcd v = transform_column(tau);
    const Eigen::VectorXcd r = a_.conjugate() * v;
    return (r.real() / static_cast<double>(a_.rows())).transpose();
  }

  Eigen::VectorXd impulse(std::span<const double> grid, const Eigen::VectorXd& c) const override {
    const Eigen::VectorXcd z = a_.adjoint() * c.cast<cplx>();
    Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < 0.0) throw std::domain_error("impulse: negative grid time");
      out[static_cast<Eigen::Index>(i)] = z.dot(transform_column(grid[i]).conjugate()).real() / a_.rows();
    }
    return out;
  }

  Eigen::VectorXd cell_integrals(double ts, long count, const Eigen::VectorXd& c) const override {
    if constexpr (requires { k_.fourier_v_interval(0.0, 1.0, 0.0); }) {
      const Eigen::VectorXcd z = a_.adjoint() * c.cast<cplx>();
      const double w0 = 2.0 * std::numbers::pi / period_;
      Eigen::VectorXd out(count);
      for (long s = 1; s <= count; ++s) {
        cplx acc = 0.0;
        for (int n = -max_bin_; n <= max_bin_; ++n) {
          acc += z[n + max_bin_] * k_.fourier_v_interval((s - 1) * ts, s * ts, n * w0);
        }
        out[s - 1] = acc.real() / static_cast<double>(a_.rows());
      }
      return out;
    } else {
      return CrossCovariance::cell_integrals(ts, count, c);
    }
  }

  Eigen::VectorXcd spectrum(std::span<const double> omegas, const Eigen::VectorXd& c) const override {
    if constexpr (requires { k_.fourier_w(0.0, 0.0); }) {
      const Eigen::VectorXcd z = a_.adjoint() * c.cast<cplx>();
      const double w0 = 2.0 * std::numbers::pi / period_;
      Eigen::VectorXcd out(static_cast<Eigen::Index>(omegas.size()));
      for (std::size_t i = 0; i < omegas.size(); ++i) {
        cplx acc = 0.0;
        for (int n = -max_bin_; n <= max_bin_; ++n) acc += z[n + max_bin_] * k_.fourier_w(omegas[i], n * w0);
        out[static_cast<Eigen::Index>(i)] = acc / static_cast<double>(a_.rows());
      }
      return out;
    } else {
      return CrossCovariance::spectrum(omegas, c);
    }
  }

 private:
  Eigen::VectorXcd transform_column(double tau) const {
    Eigen::VectorXcd v(2 * max_bin_ + 1);
    for (int n = -max_bin_; n <= max_bin_; ++n) v[n + max_bin_] = fourier_cross_integral(k_, period_, tau, n);
    return v;
  }

  K k_;
  Eigen::MatrixXcd a_;
  double period_;
  int max_bin_;
};

inline void require_behavior(const SampledSignal& u, Intersample is, Past past, const char* who) {
  if (u.intersample() != is || u.past() != past) {
    throw std::invalid_argument(std::string(who) + ": input behavior does not match the builder (" +
                                std::string(to_string(u.intersample())) + "/" + std::string(to_string(u.past())) +
                                ")");
  }
}

}  // namespace detail

/// ZOH input, zero-appended past.
template <PointwiseKernel K>
CovariancePair build_zoh_za(const SampledSignal& u, const K& k) {
  detail::require_behavior(u, Intersample::Zoh, Past::Za, "build_zoh_za");
  const long n = static_cast<long>(u.size());
  const double ts = u.ts();
  Eigen::MatrixXd phi = zoh_regressors(u);
  CovariancePair out;
  out.combo = Combo::ZohZa;
  out.ts = u.ts();
  if constexpr (requires { k.cell_structure(ts); k.lambda(); }) {
    out.sigma_y = k.lambda() * dc_cell_congruence(phi, k.cell_structure(ts));
  } else {
    const Eigen::MatrixXd kd = symmetric_gram(n, [&](long a, long b) { return kappa_gd(k, ts, a + 1, b + 1); });
    out.sigma_y = congruence(phi, kd);
  }
  out.cross = std::make_shared<detail::ZohCross<K>>(k, std::move(phi), ts, false);
  return out;
}

/// ZOH input, periodically appended past.
template <PointwiseKernel K>
CovariancePair build_zoh_pa(const SampledSignal& u, const K& k) {
  detail::require_behavior(u, Intersample::Zoh, Past::Pa, "build_zoh_pa");
  const long n = static_cast<long>(u.size());
  const double ts = u.ts();
  Eigen::MatrixXd phi = zoh_regressors(u);
  const Eigen::MatrixXd kdp = symmetric_gram(n, [&](long a, long b) { return kappa_gdp(k, ts, n, a + 1, b + 1); });
  CovariancePair out;
  out.combo = Combo::ZohPa;
  out.ts = u.ts();
  out.sigma_y = congruence(phi, kdp);
  out.cross = std::make_shared<detail::ZohCross<K>>(k, std::move(phi), ts, true);
  return out;
}

/// Band-limited periodic input.
template <PointwiseKernel K>
CovariancePair build_bl_pa(const SampledSignal& u, const K& k) {
  detail::require_behavior(u, Intersample::Bl, Past::Pa, "build_bl_pa");
  const long n = static_cast<long>(u.size());
  const auto coeffs = dft(u);
  require_no_nyquist(u, coeffs);
  const int kmax = coeffs.max_bin;
  const double period = u.period();
  const long m = 2 * kmax + 1;

  Eigen::MatrixXcd a(n, m);
  for (long i = 0; i < n; ++i) {
    for (int b = -kmax; b <= kmax; ++b) {
      // e^{j b w0 t_i} with t_i = i ts, reduced modulo N
      const long r = ((static_cast<long>(b) * i) % n + n) % n;
      a(i, b + kmax) = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n)) *
                       coeffs.at(b);
    }
  }
  Eigen::MatrixXcd w(m, m);
  for (int b = -kmax; b <= kmax; ++b) {
    for (int b2 = -kmax; b2 <= kmax; ++b2) w(b + kmax, b2 + kmax) = fourier_kernel_integrals(k, period, b, b2);
  }
  const Eigen::MatrixXcd aw = a * w;
  Eigen::MatrixXcd sigma(n, n);
  sigma.noalias() = aw * a.adjoint();
  sigma /= static_cast<double>(n) * static_cast<double>(n);

  const double scale = sigma.cwiseAbs().maxCoeff();
  const double residue = sigma.imag().cwiseAbs().maxCoeff();
  if (residue > 1e-9 * std::max(scale, 1e-300) && scale > 0.0) {
    throw std::runtime_error("build_bl_pa: imaginary residue " + std::to_string(residue) +
                             " exceeds tolerance; conjugate symmetry is broken");
  }
  CovariancePair out;
  out.combo = Combo::BlPa;
  out.ts = u.ts();
  Eigen::MatrixXd re = sigma.real();
  out.sigma_y = 0.5 * (re + re.transpose());
  out.cross = std::make_shared<detail::BlCross<K>>(k, std::move(a), period, kmax);
  return out;
}

/// Builder selected by the input's declared behavior.
template <PointwiseKernel K>
CovariancePair build_covariance(const SampledSignal& u, const K& k) {
  if (u.intersample() == Intersample::Bl) return build_bl_pa(u, k);
  if (u.past() == Past::Pa) return build_zoh_pa(u, k);
  if (u.past() == Past::Za) return build_zoh_za(u, k);
  throw std::invalid_argument("build_covariance: past behavior is Unknown; choose PA or ZA (plus a transient term)");
}

/// Gram matrix of a kernel on the sample instants t_i = i ts.
template <class Kt>
Eigen::MatrixXd time_gram(const Kt& k, double ts, long n) {
  return symmetric_gram(n, [&](long a, long b) { return k(a * ts, b * ts); });
}

/// Adds the transient prior alpha_t kappa_g(t, t^T) to Sigma_y; the
/// cross-covariance is unchanged.
template <PointwiseKernel K>
CovariancePair augment_transient(const CovariancePair& base, const TransientKernel<K>& tk, std::span<const double> t_grid) {
  if (static_cast<Eigen::Index>(t_grid.size()) != base.size()) {
    throw std::invalid_argument("augment_transient: time grid does not match the covariance size");
  }
  CovariancePair out = base;
  if (tk.alpha_t == 0.0) return out;
  const long n = static_cast<long>(t_grid.size());
  out.sigma_y += symmetric_gram(n, [&](long a, long b) { return tk(t_grid[a], t_grid[b]); });
  return out;
}

/// t_i = i ts, i = 0..n-1.
inline std::vector<double> sample_times(double ts, std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) * ts;
  return t;
}

}  // namespace ctkrm
