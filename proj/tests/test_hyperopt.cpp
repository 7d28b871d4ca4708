#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "ctkrm/hyperopt.hpp"
#include "ctkrm/simulator.hpp"
#include "test_util.hpp"

namespace ctkrm {
namespace {

using testing::gaussian_samples;
using testing::gaussian_vector;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

SampledSignal zoh(std::vector<double> s, double ts, Past past) { return {std::move(s), ts, Intersample::Zoh, past}; }

// Dense Gaussian evidence: y^T M^{-1} y + log det M + N log 2 pi.
double dense_evidence(const Eigen::MatrixXd& m, const Eigen::VectorXd& y) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  return y.dot(lu.solve(y)) + std::log(lu.determinant()) + static_cast<double>(y.size()) * kLog2Pi;
}

// Output drawn from the zero-mean Gaussian prior of the model plus white noise.
struct PriorSample {
  SampledSignal u;
  Eigen::VectorXd y;
  double sigma2;
};

PriorSample prior_sample(const HyperParams& truth, long n, double snr_db, std::uint64_t seed) {
  auto u = zoh(gaussian_samples(static_cast<std::size_t>(n), seed), 0.05, Past::Za);
  const Eigen::MatrixXd sigma = build_zoh_za(u, truth.kernel()).sigma_y;
  Eigen::MatrixXd jittered = sigma;
  jittered.diagonal().array() += 1e-12 * sigma.trace() / n;
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(jittered).matrixL();
  const Eigen::VectorXd y0 = l * gaussian_vector(n, seed + 1000);
  const auto noisy = add_noise(y0, snr_db, seed + 2000);
  return {std::move(u), noisy.y, noisy.sigma2};
}

TEST(NegLogMarginal, ZeroOutputLeavesLogDeterminant) {
  const auto u = zoh(gaussian_samples(6, 1), 0.1, Past::Za);
  const HyperParams hp{1.0, 0.5, 2.0, 0.3, 0.0};
  Eigen::MatrixXd m = build_zoh_za(u, hp.kernel()).sigma_y;
  m.diagonal().array() += hp.sigma2;
  const double expect = std::log(m.determinant()) + 6 * kLog2Pi;
  EXPECT_NEAR(neg_log_marginal(u, Eigen::VectorXd::Zero(6), hp), expect, 1e-12 * std::abs(expect));
}

TEST(NegLogMarginal, ZeroInputGivesIdentityCovariance) {
  const auto u = zoh(std::vector<double>(5, 0.0), 0.1, Past::Za);
  const Eigen::VectorXd y = gaussian_vector(5, 2);
  const HyperParams hp{1.0, 0.5, 2.0, 1.0, 0.0};
  EXPECT_NEAR(neg_log_marginal(u, y, hp), y.squaredNorm() + 5 * kLog2Pi, 1e-13);
}

TEST(NegLogMarginal, MatchesDenseGaussianDensity) {
  for (Past past : {Past::Za, Past::Pa, Past::Unknown}) {
    const auto u = zoh({0.7, -1.1, 0.4}, 0.2, past);
    const Eigen::VectorXd y(Eigen::Vector3d(0.3, -0.8, 1.2));
    const HyperParams hp{1.4, 0.6, 3.0, 0.05, past == Past::Unknown ? 0.7 : 0.0};
    const auto model = default_model(u);
    Eigen::MatrixXd m = build_covariance(assumed_input(u, model), hp.kernel()).sigma_y;
    if (model.transient) m += time_gram(hp.transient(), 0.2, 3);
    m.diagonal().array() += hp.sigma2;
    const double ref = dense_evidence(m, y);
    EXPECT_NEAR(neg_log_marginal(u, y, hp), ref, 1e-10 * std::abs(ref)) << to_string(past);
  }
}

TEST(NegLogMarginal, BandLimitedModel) {
  const SampledSignal u(gaussian_samples(5, 7), 0.2, Intersample::Bl, Past::Pa);
  const Eigen::VectorXd y = gaussian_vector(5, 8);
  const HyperParams hp{0.8, 0.2, 1.5, 0.1, 0.0};
  Eigen::MatrixXd m = build_bl_pa(u, hp.kernel()).sigma_y;
  m.diagonal().array() += hp.sigma2;
  const double ref = dense_evidence(m, y);
  EXPECT_NEAR(neg_log_marginal(u, y, hp), ref, 1e-10 * std::abs(ref));
}

TEST(SearchTransform, RoundTripIsExact) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    HyperParams hp;
    hp.alpha = std::exp(std::log(1e-2) + unit(rng) * std::log(1e4));
    hp.beta = unit(rng) * 0.99 * hp.alpha;
    hp.lambda = std::exp(std::log(1e-6) + unit(rng) * std::log(1e12));
    hp.sigma2 = std::exp(-10.0 + 12.0 * unit(rng));
    hp.alpha_t = i % 5 == 0 ? 0.0 : unit(rng) * 1e3;
    const HyperParams back = from_search(to_search(hp));
    EXPECT_NEAR(back.alpha, hp.alpha, 1e-14 * hp.alpha);
    EXPECT_NEAR(back.beta, hp.beta, 1e-14 * hp.alpha);
    EXPECT_NEAR(back.lambda, hp.lambda, 1e-14 * hp.lambda);
    EXPECT_NEAR(back.sigma2, hp.sigma2, 1e-14 * hp.sigma2);
    EXPECT_NEAR(back.alpha_t, hp.alpha_t, 1e-14 * std::max(hp.alpha_t, 1e-6));
  }
}

TEST(SearchTransform, ObjectiveInvariant) {
  const auto u = zoh(gaussian_samples(20, 3), 0.1, Past::Unknown);
  const Eigen::VectorXd y = gaussian_vector(20, 4);
  const HyperParams hp{2.0, 1.3, 0.7, 0.02, 0.4};
  EXPECT_NEAR(neg_log_marginal(u, y, from_search(to_search(hp))), neg_log_marginal(u, y, hp), 1e-12);
}

TEST(MarginalLikelihood, ProfiledLambdaIsTheMinimizer) {
  const auto u = zoh(gaussian_samples(30, 5), 0.1, Past::Unknown);
  const Eigen::VectorXd y = gaussian_vector(30, 6);
  const MarginalLikelihood ml(u, y, ModelSpec{Combo::ZohZa, true});
  const double alpha = 1.5;
  const double beta = 0.9;
  const double nu = 0.05;
  const double alpha_t = 0.2;
  const auto p = ml.profiled(alpha, beta, nu, alpha_t);
  ASSERT_TRUE(std::isfinite(p.value));
  auto at = [&](double lambda) { return ml.value(HyperParams{alpha, beta, lambda, nu * lambda, alpha_t}); };
  EXPECT_NEAR(p.value, at(p.lambda), 1e-9 * std::abs(p.value));
  for (double f : {0.5, 0.9, 1.1, 2.0}) EXPECT_LE(p.value, at(p.lambda * f) + 1e-9 * std::abs(p.value));
}

TEST(MarginalLikelihood, IndefiniteGramIsInfeasible) {
  const auto u = zoh(gaussian_samples(10, 5), 0.1, Past::Za);
  const MarginalLikelihood ml(u, gaussian_vector(10, 1), ModelSpec{Combo::ZohZa, false});
  EXPECT_TRUE(std::isinf(ml.value(HyperParams{1.0, 0.5, 1.0, -1e3, 0.0})));
  EXPECT_EQ(ml.infeasible_count(), 1);
}

TEST(NelderMead, MonotoneTraceAndBoxProjection) {
  auto f = [](const Eigen::VectorXd& x) {
    return 100.0 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1.0 - x(0), 2);
  };
  Eigen::VectorXd lo(2), hi(2), x0(2), step(2);
  lo << -2.0, -2.0;
  hi << 2.0, 0.5;  // unconstrained minimum (1, 1) is outside
  x0 << -1.5, -1.0;
  step << 0.5, 0.5;
  NelderMead nm(f, x0, lo, hi, step);
  nm.run(2000, 1e-12, 1e-10);
  const auto& tr = nm.trace();
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LE(tr[i], tr[i - 1]);
  EXPECT_LE(nm.best()(1), 0.5);
  // The constrained minimum lies on x1 = 0.5 where d/dx0 of the objective vanishes.
  auto slope = [](double x) { return -400.0 * x * (0.5 - x * x) - 2.0 * (1.0 - x); };
  double a = 0.5;
  double b = 1.0;
  for (int i = 0; i < 60; ++i) (slope(0.5 * (a + b)) < 0.0 ? a : b) = 0.5 * (a + b);
  EXPECT_NEAR(nm.best()(1), 0.5, 1e-9);
  EXPECT_NEAR(nm.best()(0), a, 1e-4);
}

TEST(NelderMead, ResumingContinuesTheSameRun) {
  auto f = [](const Eigen::VectorXd& x) { return (x.array() - 0.3).square().sum(); };
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(3, -1.0);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(3, 1.0);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(3, -0.5);
  const Eigen::VectorXd step = Eigen::VectorXd::Constant(3, 0.2);
  NelderMead once(f, x0, lo, hi, step);
  once.run(200);
  NelderMead twice(f, x0, lo, hi, step);
  twice.run(40);
  twice.run(200);
  EXPECT_EQ(once.best(), twice.best());
  EXPECT_EQ(once.evals(), twice.evals());
}

TEST(Optimize, ZeroInputIsRejected) {
  const auto u = zoh(std::vector<double>(20, 0.0), 0.1, Past::Unknown);
  EXPECT_THROW(optimize(u, gaussian_vector(20, 1), 2, 0), std::invalid_argument);
}

TEST(Optimize, ConstantOutputIsRejected) {
  const auto u = zoh(gaussian_samples(20, 1), 0.1, Past::Unknown);
  EXPECT_THROW(optimize(u, Eigen::VectorXd::Ones(20), 2, 0), std::invalid_argument);
}

TEST(Optimize, BeatsTheTrueHyperparameters) {
  const HyperParams truth{2.0, 1.0, 5.0, 0.0, 0.0};
  const auto s = prior_sample(truth, 60, 20.0, 3);
  HyperParams t = truth;
  t.sigma2 = s.sigma2;
  OptimizeOptions opt;
  opt.n_starts = 8;
  opt.seed = 1;
  opt.model = ModelSpec{Combo::ZohZa, false};
  const auto res = optimize(s.u, s.y, opt);
  const double at_truth = MarginalLikelihood(s.u, s.y, *opt.model).value(t);
  EXPECT_LE(res.value, at_truth);
  EXPECT_NEAR(res.value, MarginalLikelihood(s.u, s.y, *opt.model).value(res.best), 1e-9 * std::abs(res.value));
  EXPECT_TRUE(opt.box.contains(res.best, sample_variance(s.y)));
}

TEST(Optimize, MoreStartsNeverWorse) {
  const auto u = zoh(gaussian_samples(80, 9), 0.1, Past::Unknown);
  const StateSpace ss = to_state_space(rao_garnier());
  const Eigen::VectorXd y = add_noise(simulate_zoh(ss, u.with_past(Past::Za)), 10.0, 4).y;
  OptimizeOptions one;
  one.n_starts = 1;
  one.seed = 7;
  OptimizeOptions many = one;
  many.n_starts = 25;
  const auto a = optimize(u, y, one);
  const auto b = optimize(u, y, many);
  EXPECT_LE(b.value, a.value);
  EXPECT_EQ(b.starts.size(), 25u);
  EXPECT_EQ(a.starts.front().value, b.starts.front().value);  // start 0 is shared
}

TEST(Optimize, DeterministicInSeedAndThreadCount) {
  const auto u = zoh(gaussian_samples(50, 2), 0.1, Past::Unknown);
  const Eigen::VectorXd y = gaussian_vector(50, 3) + 3.0 * Eigen::VectorXd(u.size()).setLinSpaced(0, 1);
  OptimizeOptions opt;
  opt.n_starts = 6;
  opt.seed = 42;
  const auto a = optimize(u, y, opt);
  const auto b = optimize(u, y, opt);
  opt.jobs = 3;
  const auto c = optimize(u, y, opt);
  for (const auto* r : {&b, &c}) {
    EXPECT_EQ(a.value, r->value);
    EXPECT_EQ(a.best_start, r->best_start);
    EXPECT_EQ(to_search(a.best), to_search(r->best));
  }
  opt.seed = 43;
  opt.jobs = 1;
  const auto d = optimize(u, y, opt);
  EXPECT_TRUE(d.starts[1].start != a.starts[1].start);
}

TEST(Optimize, TracesDecreaseMonotonically) {
  const auto u = zoh(gaussian_samples(40, 6), 0.1, Past::Unknown);
  const Eigen::VectorXd y = gaussian_vector(40, 7);
  OptimizeOptions opt;
  opt.n_starts = 5;
  opt.seed = 11;
  const auto full = optimize(u, y, opt);
  for (const auto& s : full.starts) {
    for (std::size_t i = 1; i < s.trace.size(); ++i) EXPECT_LE(s.trace[i], s.trace[i - 1]);
  }
}

TEST(Optimize, DefaultStartCountIsFivePerHyperparameter) {
  const auto u = zoh(gaussian_samples(30, 6), 0.1, Past::Unknown);
  const Eigen::VectorXd y = gaussian_vector(30, 7);
  OptimizeOptions opt;
  opt.screen_evals = 5;
  opt.max_evals = 10;
  EXPECT_EQ(optimize(u, y, opt).starts.size(), 25u);
  opt.model = ModelSpec{Combo::ZohZa, false};
  EXPECT_EQ(optimize(u, y, opt).starts.size(), 20u);
}

TEST(Optimize, NoiseVarianceWithinFactorThreeOnMatchedData) {
  const HyperParams truth{3.0, 1.5, 1.0, 0.0, 0.0};
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = prior_sample(truth, 200, 10.0, seed);
    OptimizeOptions opt;
    opt.n_starts = 3;
    opt.seed = seed;
    opt.model = ModelSpec{Combo::ZohZa, false};
    const auto res = optimize(s.u, s.y, opt);
    const double ratio = res.best.sigma2 / s.sigma2;
    EXPECT_GT(ratio, 1.0 / 3.0) << seed;
    EXPECT_LT(ratio, 3.0) << seed;
    inside += ratio > 1.0 / 3.0 && ratio < 3.0;
  }
  EXPECT_EQ(inside, 20);
}

}  // namespace
}  // namespace ctkrm
