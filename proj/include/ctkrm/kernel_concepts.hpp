#pragma once

#include <concepts>

namespace ctkrm {

/// A covariance function on [0, inf)^2 with an exponential envelope:
/// |k(t, t2)| <= k.scale() * exp(-k.decay_rate() * (t + t2)).
template <class K>
concept PointwiseKernel = requires(const K& k, double t) {
  { k(t, t) } -> std::convertible_to<double>;
  { k.scale() } -> std::convertible_to<double>;
  { k.decay_rate() } -> std::convertible_to<double>;
};

}  // namespace ctkrm
