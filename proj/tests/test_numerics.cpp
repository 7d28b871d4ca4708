#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include "ctkrm/kernels.hpp"
#include "ctkrm/numerics.hpp"
#include "ctkrm/oracle.hpp"
#include "ctkrm/quadrature.hpp"

namespace ctkrm {
namespace {

TEST(Phi1, MatchesDefinitionAwayFromZero) {
  for (double z : {-30.0, -3.0, -0.5, 0.7, 4.0}) {
    EXPECT_NEAR(numerics::phi1(z), std::expm1(z) / z, 1e-15 * std::abs(std::expm1(z) / z)) << z;
  }
}

TEST(Phi1, SmoothThroughZero) {
  EXPECT_DOUBLE_EQ(numerics::phi1(0.0), 1.0);
  EXPECT_NEAR(numerics::phi1(1e-9), 1.0 + 5e-10, 1e-16);
  EXPECT_NEAR(numerics::phi1(-1e-9), 1.0 - 5e-10, 1e-16);
}

TEST(Phi1, ComplexArgument) {
  const std::complex<double> z(0.3, -2.0);
  const std::complex<double> expect = (std::exp(z) - 1.0) / z;
  EXPECT_LT(std::abs(numerics::phi1(z) - expect), 1e-14);
}

TEST(TriangleExp, MatchesQuadrature) {
  for (auto [ci, co, len] : {std::tuple{0.5, 1.5, 0.1}, std::tuple{2.0, 2.0, 0.3}, std::tuple{1e-6, 3.0, 1.0}}) {
    const double ref = quad::integrate(
                           [&](double v) {
                             return std::exp(-co * v) * quad::integrate([&](double w) { return std::exp(-ci * w); }, 0.0, v).value;
                           },
                           0.0, len)
                           .value;
    EXPECT_NEAR(numerics::triangle_exp(ci, co, len), ref, 1e-13 * std::abs(ref));
  }
}

TEST(Geometric, HeadAndTail) {
  EXPECT_NEAR(numerics::geometric_tail(0.5, 2.0), 1.0 / (1.0 - std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(numerics::geometric_head(0.5, 2.0, 3), 1.0 + std::exp(-1.0) + std::exp(-2.0), 1e-15);
  EXPECT_DOUBLE_EQ(numerics::geometric_head(0.0, 2.0, 7), 7.0);
}

TEST(Quadrature, Polynomial) {
  const auto r = quad::integrate([](double x) { return x * x; }, 0.0, 1.0);
  EXPECT_NEAR(r.value, 1.0 / 3.0, 1e-15);
}

TEST(Quadrature, KinkWithBreakpoint) {
  const auto r = quad::integrate_pieces([](double x) { return std::abs(x - 0.3); }, 0.0, 1.0, {0.3});
  EXPECT_NEAR(r.value, 0.5 * (0.09 + 0.49), 1e-15);
}

TEST(Quadrature, TinyIntervalsConverge) {
  const double a = 5.0;
  const double b = 5.0 + 1e-9;
  const auto r = quad::integrate([](double x) { return std::exp(-x); }, a, b);
  const double expect = -std::exp(-a) * std::expm1(-(b - a));
  EXPECT_NEAR(r.value, expect, 1e-13 * expect);
}

TEST(Quadrature, ComplexIntegrand) {
  const auto r = quad::integrate([](double x) { return std::polar(1.0, x); }, 0.0, M_PI);
  EXPECT_NEAR(r.value.real(), 0.0, 1e-14);
  EXPECT_NEAR(r.value.imag(), 2.0, 1e-14);
}

TEST(Quadrature, NonFiniteIntegrandThrows) {
  EXPECT_THROW(quad::integrate([](double x) { return 1.0 / x; }, -1.0, 1.0), ConvergenceError);
}

TEST(Quadrature, SeparableDcCellIntegral) {
  // lambda = alpha = 1, beta = 0 makes the kernel separable: (1 - e^{-T})^2.
  const DcKernel k(1.0, 0.0, 1.0);
  for (double t : {0.1, 1.0, 3.0}) {
    const double expect = std::pow(-std::expm1(-t), 2);
    EXPECT_NEAR(oracle::gd(k, t, 1, 1), expect, 1e-12 * expect);
  }
}

TEST(Quadrature, ZeroWidthRegion) {
  EXPECT_EQ(quad::integrate([](double) { return 1.0; }, 2.0, 2.0).value, 0.0);
}

TEST(Series, Geometric) {
  const double x = 0.7;
  const auto s = quad::sum_series([&](long n) { return std::pow(x, n); },
                                  [&](long n) { return std::pow(x, n) / (1.0 - x); });
  EXPECT_NEAR(s, 1.0 / (1.0 - x), 1e-13);
}

TEST(Series, NonConvergentThrows) {
  EXPECT_THROW(quad::sum_series([](long) { return 1.0; }, [](long) { return 1.0; }, 1e-14, 100), ConvergenceError);
}

}  // namespace
}  // namespace ctkrm
