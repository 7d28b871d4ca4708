#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "ctkrm/signals.hpp"

namespace ctkrm {

/// num(s)/den(s), coefficients in descending powers of s.
struct CtTransferFunction {
  std::vector<double> num;
  std::vector<double> den;

  CtTransferFunction(std::vector<double> n, std::vector<double> d) : num(std::move(n)), den(std::move(d)) {
    while (num.size() > 1 && num.front() == 0.0) num.erase(num.begin());
    if (den.empty() || den.front() == 0.0) throw std::invalid_argument("transfer function: leading denominator coefficient is zero");
    if (num.empty()) throw std::invalid_argument("transfer function: empty numerator");
    if (num.size() > den.size()) throw std::invalid_argument("transfer function: improper (numerator degree exceeds denominator)");
  }

  std::size_t order() const { return den.size() - 1; }

  std::vector<std::complex<double>> poles() const {
    const std::size_t n = order();
    if (n == 0) return {};
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i + 1 < n; ++i) comp(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(i)) = 1.0;
    for (std::size_t i = 0; i < n; ++i) comp(0, static_cast<Eigen::Index>(i)) = -den[i + 1] / den[0];
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    std::vector<std::complex<double>> out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()[i]);
    return out;
  }

  bool is_stable() const {
    for (const auto& p : poles()) {
      if (!(p.real() < 0.0)) return false;
    }
    return true;
  }

  std::complex<double> frequency_response(double omega) const {
    const std::complex<double> s(0.0, omega);
    auto horner = [&](const std::vector<double>& c) {
      std::complex<double> acc = 0.0;
      for (double v : c) acc = acc * s + v;
      return acc;
    };
    return horner(num) / horner(den);
  }
};

/// Rao-Garnier benchmark: (-6400 s + 1600) / (s^4 + a3 s^3 + 408 s^2 + 416 s + 1600).
inline CtTransferFunction rao_garnier(double a3 = 6.0) {
  return {{-6400.0, 1600.0}, {1.0, a3, 408.0, 416.0, 1600.0}};
}

struct StateSpace {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::RowVectorXd c;
  double d = 0.0;
};

/// Controllable canonical realization: companion A with last row
/// -[a_n, ..., a_1], B = e_n.
inline StateSpace to_state_space(const CtTransferFunction& tf) {
  const auto n = static_cast<Eigen::Index>(tf.order());
  if (n == 0) throw std::invalid_argument("to_state_space: static gain has no state");
  const double lead = tf.den.front();
  std::vector<double> den(tf.den.size());
  for (std::size_t i = 0; i < den.size(); ++i) den[i] = tf.den[i] / lead;
  std::vector<double> num(tf.den.size(), 0.0);  // padded to the same length
  const std::size_t off = den.size() - tf.num.size();
  for (std::size_t i = 0; i < tf.num.size(); ++i) num[off + i] = tf.num[i] / lead;

  StateSpace ss;
  ss.a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) ss.a(i, i + 1) = 1.0;
  ss.b = Eigen::VectorXd::Zero(n);
  ss.b(n - 1) = 1.0;
  ss.c.resize(n);
  ss.d = num[0];
  for (Eigen::Index k = 0; k < n; ++k) {
    // coefficient of s^k: den index n - k
    const auto idx = static_cast<std::size_t>(n - k);
    ss.a(n - 1, k) = -den[idx];
    ss.c(k) = num[idx] - den[idx] * ss.d;
  }
  return ss;
}

/// Exact ZOH discretization (A_d, B_d) from exp([[A, B], [0, 0]] ts).
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> discretize_zoh(const StateSpace& ss, double ts) {
  const Eigen::Index n = ss.a.rows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
  m.topLeftCorner(n, n) = ss.a * ts;
  m.topRightCorner(n, 1) = ss.b * ts;
  const Eigen::MatrixXd e = m.exp();
  if (!e.allFinite()) throw std::runtime_error("discretize_zoh: matrix exponential is not finite");
  return {e.topLeftCorner(n, n), e.topRightCorner(n, 1)};
}

/// Noiseless samples y0(k ts), k = 0..N-1, for a ZOH input starting from x0.
inline Eigen::VectorXd simulate_zoh(const StateSpace& ss, const SampledSignal& u, const Eigen::VectorXd& x0) {
  if (u.intersample() != Intersample::Zoh) throw std::invalid_argument("simulate_zoh: input is not ZOH");
  if (x0.size() != ss.a.rows()) throw std::invalid_argument("simulate_zoh: initial state has the wrong size");
  const auto [ad, bd] = discretize_zoh(ss, u.ts());
  const auto n = static_cast<Eigen::Index>(u.size());
  Eigen::VectorXd y(n);
  Eigen::VectorXd x = x0;
  for (Eigen::Index k = 0; k < n; ++k) {
    // The held value at t = k ts is the previous sample.
    const double held = k == 0 ? 0.0 : u[static_cast<std::size_t>(k - 1)];
    y(k) = ss.c.dot(x) + ss.d * held;
    x = ad * x + bd * u[static_cast<std::size_t>(k)];
  }
  return y;
}

inline Eigen::VectorXd simulate_zoh(const StateSpace& ss, const SampledSignal& u) {
  return simulate_zoh(ss, u, Eigen::VectorXd::Zero(ss.a.rows()));
}

/// g0(tau) = C e^{A tau} B.
inline Eigen::VectorXd impulse_response(const StateSpace& ss, std::span<const double> grid) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::MatrixXd e = (ss.a * grid[i]).exp();
    out(static_cast<Eigen::Index>(i)) = ss.c.dot(e * ss.b);
  }
  return out;
}

/// Deterministic 64-bit seed for a sub-stream (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ull + 1));
}

inline double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

struct NoisyOutput {
  Eigen::VectorXd y;
  double sigma2 = 0.0;
};

/// Adds white Gaussian noise of variance var(y0) / 10^{snr_db/10}.
/// snr_db = +inf returns y0 unchanged.
inline NoisyOutput add_noise(const Eigen::VectorXd& y0, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return {y0, 0.0};
  const double var = sample_variance(y0);
  if (!(var > 0.0)) throw std::invalid_argument("add_noise: noiseless output has zero variance");
  NoisyOutput out;
  out.sigma2 = var / std::pow(10.0, snr_db / 10.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(out.sigma2));
  out.y = y0;
  for (Eigen::Index k = 0; k < out.y.size(); ++k) out.y(k) += normal(rng);
  return out;
}

/// One Monte Carlo data bank configuration.
struct DataBankSpec {
  std::string name = "custom";
  double ts = 0.01;
  long n = 1000;
  double snr_db = 10.0;
  long trials = 200;
  long window_start = 3000;   // first kept sample (0-based)
  long record_length = 7167;  // simulated samples per trial
  long validation_length = 1000;
  int prbs_order = 10;
  int prbs_divider = 7;
  double den_a3 = 6.0;

  long window_end() const { return window_start + n; }

  void validate() const {
    if (!(ts > 0.0)) throw std::invalid_argument("data bank: ts must be > 0");
    if (n < 2) throw std::invalid_argument("data bank: n must be >= 2");
    if (trials < 1) throw std::invalid_argument("data bank: trials must be >= 1");
    if (window_start < 0 || window_start + n > record_length) {
      throw std::invalid_argument("data bank: window [" + std::to_string(window_start) + ", " +
                                  std::to_string(window_start + n) + ") exceeds the record length " +
                                  std::to_string(record_length));
    }
    if (validation_length < 2 || window_start + validation_length > record_length) {
      throw std::invalid_argument("data bank: validation window exceeds the record length");
    }
  }
};

inline DataBankSpec databank_spec(const std::string& name) {
  DataBankSpec s;
  s.name = name;
  if (name == "D1") {
    s.ts = 0.01, s.n = 1000;
  } else if (name == "D2") {
    s.ts = 0.05, s.n = 200;
  } else if (name == "D3") {
    s.ts = 0.1, s.n = 100;
  } else if (name == "D4") {
    s.ts = 0.1, s.n = 1000;
  } else {
    throw std::invalid_argument("unknown data bank: " + name);
  }
  return s;
}

/// One trial: a training record with unknown past and a noiseless
/// validation record whose true past input is kept.
struct Trial {
  long index = 0;
  std::uint64_t input_seed = 0;
  std::uint64_t noise_seed = 0;
  std::uint64_t validation_seed = 0;
  SampledSignal train_u;
  Eigen::VectorXd train_y;
  Eigen::VectorXd train_y0;
  double sigma2 = 0.0;
  SampledSignal validation_u;  // samples 0..window_start+validation_length-1, zero past
  Eigen::VectorXd validation_y0;  // outputs on the validation window
  long validation_first = 0;      // index of the first validation output in validation_u
};

inline Trial make_trial(const DataBankSpec& spec, const StateSpace& ss, std::uint64_t seed, long index) {
  Trial t{index, derive_seed(seed, static_cast<std::uint64_t>(index), 1),
          derive_seed(seed, static_cast<std::uint64_t>(index), 2), derive_seed(seed, static_cast<std::uint64_t>(index), 3),
          SampledSignal({0.0, 0.0}, 1.0, Intersample::Zoh, Past::Unknown), {}, {}, 0.0,
          SampledSignal({0.0, 0.0}, 1.0, Intersample::Zoh, Past::Za), {}, 0};
  const auto len = static_cast<std::size_t>(spec.record_length);
  const auto u = generate_prbs(spec.prbs_order, spec.prbs_divider, len, t.input_seed, spec.ts).with_past(Past::Za);
  const Eigen::VectorXd y0 = simulate_zoh(ss, u);
  const auto first = static_cast<std::size_t>(spec.window_start);
  std::vector<double> win(u.samples().begin() + static_cast<long>(first),
                          u.samples().begin() + static_cast<long>(first) + spec.n);
  t.train_u = SampledSignal(std::move(win), spec.ts, Intersample::Zoh, Past::Unknown);
  t.train_y0 = y0.segment(spec.window_start, spec.n);
  auto noisy = add_noise(t.train_y0, spec.snr_db, t.noise_seed);
  t.train_y = std::move(noisy.y);
  t.sigma2 = noisy.sigma2;

  const auto uv_full = generate_prbs(spec.prbs_order, spec.prbs_divider, len, t.validation_seed, spec.ts);
  const long keep = spec.window_start + spec.validation_length;
  std::vector<double> uv(uv_full.samples().begin(), uv_full.samples().begin() + keep);
  t.validation_u = SampledSignal(std::move(uv), spec.ts, Intersample::Zoh, Past::Za);
  t.validation_y0 = simulate_zoh(ss, t.validation_u).segment(spec.window_start, spec.validation_length);
  t.validation_first = spec.window_start;
  return t;
}

/// Trials 0..trials-1 of a data bank; each trial depends only on (seed, index).
inline std::vector<Trial> make_databank(const DataBankSpec& spec, std::uint64_t seed) {
  spec.validate();
  const StateSpace ss = to_state_space(rao_garnier(spec.den_a3));
  std::vector<Trial> out;
  out.reserve(static_cast<std::size_t>(spec.trials));
  for (long i = 0; i < spec.trials; ++i) out.push_back(make_trial(spec, ss, seed, i));
  return out;
}

/// The oversampled impulse-response grid 0.0002:0.0002:10.
inline std::vector<double> fit_grid(double step = 0.0002, double end = 10.0) {
  const auto n = static_cast<std::size_t>(std::llround(end / step));
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = step * static_cast<double>(i + 1);
  return g;
}

}  // namespace ctkrm
