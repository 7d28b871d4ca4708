#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctkrm {

/// How the continuous-time input behaves between samples.
enum class Intersample { Zoh, Bl };

/// Assumed input before t = 0.
enum class Past { Pa, Za, Unknown };

inline std::string_view to_string(Intersample v) { return v == Intersample::Zoh ? "ZOH" : "BL"; }

inline std::string_view to_string(Past v) {
  switch (v) {
    case Past::Pa: return "PA";
    case Past::Za: return "ZA";
    case Past::Unknown: return "Unknown";
  }
  return "Unknown";
}

inline Intersample parse_intersample(std::string_view s) {
  if (s == "ZOH" || s == "zoh") return Intersample::Zoh;
  if (s == "BL" || s == "bl") return Intersample::Bl;
  throw std::invalid_argument("unknown intersample behavior: " + std::string(s));
}

inline Past parse_past(std::string_view s) {
  if (s == "PA" || s == "pa") return Past::Pa;
  if (s == "ZA" || s == "za") return Past::Za;
  if (s == "Unknown" || s == "unknown") return Past::Unknown;
  throw std::invalid_argument("unknown past behavior: " + std::string(s));
}

/// N uniformly spaced samples u(k ts), k = 0..N-1, with their declared
/// intersample and past behavior.
class SampledSignal {
 public:
  SampledSignal(std::vector<double> samples, double ts, Intersample intersample, Past past)
      : samples_(std::move(samples)), ts_(ts), intersample_(intersample), past_(past) {
    if (samples_.size() < 2) throw std::invalid_argument("SampledSignal: need at least 2 samples");
    if (!(ts_ > 0.0) || !std::isfinite(ts_)) throw std::invalid_argument("SampledSignal: ts must be > 0");
    for (double v : samples_) {
      if (!std::isfinite(v)) throw std::invalid_argument("SampledSignal: non-finite sample");
    }
    if (intersample_ == Intersample::Bl && past_ == Past::Za) {
      throw std::invalid_argument("SampledSignal: band-limited input cannot be zero appended");
    }
  }

  std::span<const double> samples() const { return samples_; }
  double operator[](std::size_t k) const { return samples_[k]; }
  std::size_t size() const { return samples_.size(); }
  double ts() const { return ts_; }
  double period() const { return ts_ * static_cast<double>(samples_.size()); }
  Intersample intersample() const { return intersample_; }
  Past past() const { return past_; }

  SampledSignal with_past(Past past) const { return {samples_, ts_, intersample_, past}; }
  SampledSignal with_behavior(Intersample intersample, Past past) const { return {samples_, ts_, intersample, past}; }
  SampledSignal with_samples(std::vector<double> samples) const {
    return {std::move(samples), ts_, intersample_, past_};
  }

  /// Sample value at integer index k, extending to k < 0 by the past behavior.
  double at(long k) const {
    const long n = static_cast<long>(samples_.size());
    if (k >= 0 && k < n) return samples_[static_cast<std::size_t>(k)];
    if (k < 0) {
      if (past_ == Past::Za) return 0.0;
      if (past_ == Past::Pa) return samples_[static_cast<std::size_t>(((k % n) + n) % n)];
      throw std::domain_error("SampledSignal: past samples requested but past behavior is Unknown");
    }
    if (past_ == Past::Pa) return samples_[static_cast<std::size_t>(k % n)];
    throw std::out_of_range("SampledSignal: sample index beyond the record");
  }

 private:
  std::vector<double> samples_;
  double ts_;
  Intersample intersample_;
  Past past_;
};

/// Zero-order-hold value: u(k ts) is held on (k ts, (k+1) ts].
inline double eval_zoh(const SampledSignal& sig, double t) {
  if (sig.intersample() != Intersample::Zoh) throw std::invalid_argument("eval_zoh: signal is not ZOH");
  if (sig.past() == Past::Unknown) {
    throw std::invalid_argument("eval_zoh: past behavior is Unknown; choose PA or ZA first");
  }
  const long k = static_cast<long>(std::ceil(t / sig.ts())) - 1;
  return sig.at(k);
}

/// DFT bins U(n w0) for |n| < N/2.
struct DftCoefficients {
  std::vector<std::complex<double>> coeffs;  // index n + max_bin
  double omega0 = 0.0;
  int max_bin = 0;
  std::complex<double> nyquist = 0.0;  // U at n = N/2 for even N (excluded from the basis)

  std::complex<double> at(int n) const { return coeffs.at(static_cast<std::size_t>(n + max_bin)); }
};

inline int max_bin_for(std::size_t n) { return static_cast<int>((n - 1) / 2); }

inline DftCoefficients dft(const SampledSignal& sig) {
  const std::size_t n = sig.size();
  const long nl = static_cast<long>(n);
  DftCoefficients out;
  out.max_bin = max_bin_for(n);
  out.omega0 = 2.0 * std::numbers::pi / sig.period();
  out.coeffs.assign(static_cast<std::size_t>(2 * out.max_bin + 1), 0.0);
  auto bin = [&](long m) {
    std::complex<double> acc = 0.0;
    for (long k = 0; k < nl; ++k) {
      // Reduce n*k mod N before forming the angle.
      const long r = ((m * k) % nl + nl) % nl;
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(nl);
      acc += sig[static_cast<std::size_t>(k)] * std::polar(1.0, angle);
    }
    return acc;
  };
  for (int m = 0; m <= out.max_bin; ++m) {
    const auto u = bin(m);
    out.coeffs[static_cast<std::size_t>(m + out.max_bin)] = u;
    out.coeffs[static_cast<std::size_t>(out.max_bin - m)] = std::conj(u);
  }
  if (n % 2 == 0) out.nyquist = bin(nl / 2);
  return out;
}

/// Throws when an even-length record carries energy at the Nyquist bin,
/// which the |n| < N/2 reconstruction cannot represent.
inline void require_no_nyquist(const SampledSignal& sig, const DftCoefficients& u) {
  if (sig.size() % 2 != 0) return;
  double scale = 0.0;
  for (double v : sig.samples()) scale += std::abs(v);
  if (std::abs(u.nyquist) > 1e-10 * std::max(scale, 1e-300)) {
    throw std::invalid_argument("band-limited signal has a nonzero Nyquist bin (even N)");
  }
}

/// Periodic band-limited reconstruction from the samples.
inline double eval_bl(const SampledSignal& sig, const DftCoefficients& u, double t) {
  const double n = static_cast<double>(sig.size());
  double value = u.at(0).real();
  for (int m = 1; m <= u.max_bin; ++m) {
    value += 2.0 * (u.at(m) * std::polar(1.0, m * u.omega0 * t)).real();
  }
  return value / n;
}

inline double eval_bl(const SampledSignal& sig, double t) {
  if (sig.intersample() != Intersample::Bl) throw std::invalid_argument("eval_bl: signal is not BL");
  const auto u = dft(sig);
  require_no_nyquist(sig, u);
  return eval_bl(sig, u, t);
}

namespace detail {

// Feedback taps (1-based) of maximal-length Fibonacci LFSRs, orders 2..31.
inline const std::vector<int>& prbs_taps(int order) {
  static const std::vector<std::vector<int>> table = {
      {2, 1},          {3, 2},          {4, 3},      {5, 3},          {6, 5},
      {7, 6},          {8, 6, 5, 4},    {9, 5},      {10, 7},         {11, 9},
      {12, 6, 4, 1},   {13, 4, 3, 1},   {14, 5, 3, 1}, {15, 14},      {16, 15, 13, 4},
      {17, 14},        {18, 11},        {19, 6, 2, 1}, {20, 17},      {21, 19},
      {22, 21},        {23, 18},        {24, 23, 22, 17}, {25, 22},   {26, 6, 2, 1},
      {27, 5, 2, 1},   {28, 25},        {29, 27},    {30, 6, 4, 1},   {31, 28}};
  if (order < 2 || order > 31) throw std::invalid_argument("generate_prbs: order must be in [2, 31]");
  return table[static_cast<std::size_t>(order - 2)];
}

}  // namespace detail

/// Maximal-length binary sequence on {-1, +1}; each chip is held for
/// `divider` samples and the period divider*(2^order - 1) is tiled to
/// `length`. The seed picks the initial register state (all ones for 0).
inline SampledSignal generate_prbs(int order, int divider, std::size_t length, std::uint64_t seed,
                                   double ts = 1.0) {
  const auto& taps = detail::prbs_taps(order);
  if (divider < 1) throw std::invalid_argument("generate_prbs: divider must be >= 1");
  if (length < 2) throw std::invalid_argument("generate_prbs: length must be >= 2");
  const std::uint64_t mask = (std::uint64_t{1} << order) - 1;
  std::uint64_t state = seed == 0 ? mask : (seed & mask);
  if (state == 0) state = mask;

  const std::size_t chips = static_cast<std::size_t>(mask);
  std::vector<double> period;
  period.reserve(chips * static_cast<std::size_t>(divider));
  for (std::size_t c = 0; c < chips; ++c) {
    const double level = (state & 1u) ? 1.0 : -1.0;
    for (int d = 0; d < divider; ++d) period.push_back(level);
    std::uint64_t bit = 0;
    for (int tap : taps) bit ^= (state >> (order - tap)) & 1u;
    state = (state >> 1) | (bit << (order - 1));
  }
  std::vector<double> out(length);
  for (std::size_t k = 0; k < length; ++k) out[k] = period[k % period.size()];
  return {std::move(out), ts, Intersample::Zoh, Past::Unknown};
}

}  // namespace ctkrm
