#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ctkrm/estimator.hpp"
#include "ctkrm/experiment.hpp"
#include "ctkrm/hyperopt.hpp"
#include "ctkrm/metrics.hpp"
#include "ctkrm/simulator.hpp"
#include "test_util.hpp"

namespace ctkrm {
namespace {

using testing::gaussian_samples;
using testing::gaussian_vector;

const DcKernel kRef(1.0, 0.5, 1.0);

SampledSignal zoh(std::vector<double> s, double ts, Past past) { return {std::move(s), ts, Intersample::Zoh, past}; }

CovariancePair small_cov(Past past = Past::Za, long n = 12, std::uint64_t seed = 3) {
  return build_covariance(zoh(gaussian_samples(static_cast<std::size_t>(n), seed), 0.1, past), kRef);
}

std::vector<double> grid(double step, double end) {
  std::vector<double> g;
  for (double t = 0.0; t <= end; t += step) g.push_back(t);
  return g;
}

TEST(Fit, ZeroOutputGivesZeroEstimate) {
  const auto est = fit(small_cov(), Eigen::VectorXd::Zero(12), 0.1);
  EXPECT_EQ(est.coeffs.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(eval_impulse(est, grid(0.1, 3.0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fit, ZeroInputReturnsPriorMean) {
  const auto cov = build_zoh_za(zoh(std::vector<double>(6, 0.0), 0.1, Past::Za), kRef);
  const Eigen::VectorXd y = gaussian_vector(6, 4);
  const auto est = fit(cov, y, 0.5);
  EXPECT_LT((est.coeffs - y / 0.5).norm(), 1e-14 * y.norm());
  EXPECT_EQ(eval_impulse(est, grid(0.05, 2.0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fit, MatchesIndependentDenseSolve) {
  Eigen::MatrixXd a(4, 4);
  a << 4, 1, 0.5, 0.2, 1, 3, 0.3, 0.1, 0.5, 0.3, 2, 0.4, 0.2, 0.1, 0.4, 1.5;
  CovariancePair cov;
  cov.sigma_y = a;
  cov.ts = 0.1;
  const Eigen::VectorXd y(Eigen::Vector4d(1.0, -2.0, 0.5, 3.0));
  const double gamma = 0.3;
  const auto est = fit(cov, y, gamma);
  const Eigen::MatrixXd m = a + gamma * Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd ref = m.fullPivLu().solve(y);
  EXPECT_LT((est.coeffs - ref).norm(), 1e-12 * ref.norm());
}

TEST(Fit, RejectsBadArguments) {
  const auto cov = small_cov();
  EXPECT_THROW(fit(cov, Eigen::VectorXd::Ones(12), 0.0), std::invalid_argument);
  EXPECT_THROW(fit(cov, Eigen::VectorXd::Ones(11), 1.0), std::invalid_argument);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(12);
  bad(3) = NAN;
  EXPECT_THROW(fit(cov, bad, 1.0), std::invalid_argument);
}

TEST(Fit, IndefiniteGramIsANumericalError) {
  CovariancePair cov;
  cov.sigma_y = -Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(fit(cov, Eigen::VectorXd::Ones(3), 0.5), NumericalError);
}

TEST(Fit, SolveResidualWithinContract) {
  for (double gamma : {1e-6, 1e-3, 1.0}) {
    const auto cov = small_cov(Past::Pa, 60, 8);
    const Eigen::VectorXd y = gaussian_vector(60, 9);
    const auto est = fit(cov, y, gamma);
    Eigen::MatrixXd m = cov.sigma_y;
    m.diagonal().array() += gamma;
    EXPECT_LE((m * est.coeffs - y).norm(), 1e-8 * y.norm()) << gamma;
    EXPECT_LE(est.residual, 1e-8 * y.norm());
  }
}

TEST(Fit, LinearInOutput) {
  const auto cov = small_cov(Past::Pa);
  const Eigen::VectorXd y1 = gaussian_vector(12, 1);
  const Eigen::VectorXd y2 = gaussian_vector(12, 2);
  const double a = 1.7;
  const double b = -0.6;
  const auto e = fit(cov, a * y1 + b * y2, 0.2);
  const Eigen::VectorXd lin = a * fit(cov, y1, 0.2).coeffs + b * fit(cov, y2, 0.2).coeffs;
  EXPECT_LT((e.coeffs - lin).norm(), 1e-10 * lin.norm());
}

TEST(Fit, LargeGammaShrinksEstimate) {
  const auto cov = small_cov();
  const Eigen::VectorXd y = gaussian_vector(12, 5);
  const auto g = grid(0.02, 3.0);
  double row_norm = 0.0;
  for (double t : g) row_norm = std::max(row_norm, cov.cross_eval(t).norm());
  for (double gamma : {1e2, 1e4, 1e6}) {
    const auto est = fit(cov, y, gamma);
    EXPECT_LE(eval_impulse(est, g).cwiseAbs().maxCoeff(), row_norm * y.norm() / gamma) << gamma;
  }
}

TEST(Fit, MinimizesRegularizedLeastSquares) {
  const auto cov = small_cov(Past::Za, 6, 12);
  const Eigen::VectorXd y = gaussian_vector(6, 13);
  const double gamma = 0.05;
  const auto est = fit(cov, y, gamma);
  // ||y - Sigma c||^2 + gamma c^T Sigma c, the second term being the RKHS norm of g_hat.
  auto objective = [&](const Eigen::VectorXd& c) {
    return (y - cov.sigma_y * c).squaredNorm() + gamma * c.dot(cov.sigma_y * c);
  };
  const double best = objective(est.coeffs);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd d(6);
    for (auto& v : d) v = g(rng);
    d *= 0.05 * est.coeffs.norm();
    EXPECT_LT(best, objective(est.coeffs + d)) << i;
  }
}

TEST(Fit, InterpolatesAsGammaVanishes) {
  // Periodic past keeps Sigma full rank (a zero past leaves row 0 empty).
  const auto cov = small_cov(Past::Pa, 5, 2);
  const Eigen::VectorXd y = gaussian_vector(5, 3);
  const double scale = cov.sigma_y.trace() / 5;
  double prev = INFINITY;
  for (double rel_gamma : {1e-2, 1e-4, 1e-6}) {
    const auto est = fit(cov, y, rel_gamma * scale);
    const double miss = (cov.sigma_y * est.coeffs - y).norm() / y.norm();
    EXPECT_LT(miss, prev);
    prev = miss;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(FitWithTransient, ZeroScaleReducesToPlainFit) {
  const auto cov = small_cov();
  const Eigen::VectorXd y = gaussian_vector(12, 6);
  const auto a = fit_with_transient(cov, TransientKernel<DcKernel>{kRef, 0.0}, y, 0.3);
  const auto b = fit(cov, y, 0.3);
  EXPECT_EQ(a.coeffs, b.coeffs);
}

TEST(FitWithTransient, ResidualWithinContract) {
  const auto cov = small_cov(Past::Za, 40, 1);
  const Eigen::VectorXd y = gaussian_vector(40, 7);
  const auto est = fit_with_transient(cov, TransientKernel<DcKernel>{kRef, 2.0}, y, 1e-3);
  EXPECT_LE(est.residual, 1e-8 * y.norm());
}

TEST(EvalImpulse, ZeroCoefficientsAndNegativeTimes) {
  auto est = fit(small_cov(), gaussian_vector(12, 1), 0.1);
  est.coeffs.setZero();
  EXPECT_EQ(eval_impulse(est, grid(0.1, 2.0)).cwiseAbs().maxCoeff(), 0.0);
  const double bad[] = {0.1, -0.1};
  EXPECT_THROW(eval_impulse(est, bad), std::domain_error);
}

TEST(EvalImpulse, DecaysWithKernelEnvelope) {
  for (Past past : {Past::Za, Past::Pa}) {
    const auto est = fit(small_cov(past, 30, 4), gaussian_vector(30, 5), 0.01);
    const double far[] = {10.0 / (kRef.alpha() - kRef.beta())};
    const double peak = eval_impulse(est, grid(0.01, 5.0)).cwiseAbs().maxCoeff();
    EXPECT_LE(std::abs(eval_impulse(est, far)[0]), 1e-3 * peak);
  }
}

TEST(EvalImpulse, ScaleEquivariance) {
  // (c Sigma)(c Sigma + c gamma I)^{-1} = Sigma (Sigma + gamma I)^{-1}: scaling
  // lambda, gamma and the transient by the same factor leaves g_hat unchanged.
  const auto u = zoh(gaussian_samples(25, 2), 0.1, Past::Za);
  const Eigen::VectorXd y = gaussian_vector(25, 3);
  HyperParams hp{1.0, 0.5, 1.0, 0.05, 0.3};
  HyperParams hp2 = hp;
  hp2.lambda *= 2.0;
  hp2.sigma2 *= 2.0;
  const auto a = estimate_with(u, y, hp, Combo::ZohZa, true);
  const auto b = estimate_with(u, y, hp2, Combo::ZohZa, true);
  const auto g = grid(0.05, 4.0);
  const Eigen::VectorXd ga = eval_impulse(a, g);
  EXPECT_LT((eval_impulse(b, g) - ga).cwiseAbs().maxCoeff(), 1e-10 * ga.cwiseAbs().maxCoeff());
}

TEST(CrossCovariance, ClosedFormCellIntegralsMatchQuadrature) {
  for (Past past : {Past::Za, Past::Pa}) {
    const auto est = fit(small_cov(past, 10, 2), gaussian_vector(10, 3), 0.05);
    const Eigen::VectorXd closed = est.cov.cross->cell_integrals(0.1, 25, est.coeffs);
    const Eigen::VectorXd quad = est.cov.cross->CrossCovariance::cell_integrals(0.1, 25, est.coeffs);
    EXPECT_LT((closed - quad).cwiseAbs().maxCoeff(), 1e-9 * quad.cwiseAbs().maxCoeff()) << to_string(past);
  }
  const SampledSignal ubl(gaussian_samples(9, 4), 0.1, Intersample::Bl, Past::Pa);
  const auto est = fit(build_bl_pa(ubl, kRef), gaussian_vector(9, 5), 0.05);
  const Eigen::VectorXd closed = est.cov.cross->cell_integrals(0.1, 25, est.coeffs);
  const Eigen::VectorXd quad = est.cov.cross->CrossCovariance::cell_integrals(0.1, 25, est.coeffs);
  EXPECT_LT((closed - quad).cwiseAbs().maxCoeff(), 1e-9 * quad.cwiseAbs().maxCoeff());
}

TEST(CrossCovariance, ClosedFormSpectrumMatchesQuadrature) {
  const std::vector<double> omegas{0.0, 0.7, 3.1, 12.0};
  for (Past past : {Past::Za, Past::Pa}) {
    const auto est = fit(small_cov(past, 10, 2), gaussian_vector(10, 3), 0.05);
    const Eigen::VectorXcd closed = est.cov.cross->spectrum(omegas, est.coeffs);
    const Eigen::VectorXcd quad = est.cov.cross->CrossCovariance::spectrum(omegas, est.coeffs);
    EXPECT_LT((closed - quad).cwiseAbs().maxCoeff(), 1e-8 * quad.cwiseAbs().maxCoeff()) << to_string(past);
  }
  const SampledSignal ubl(gaussian_samples(9, 4), 0.1, Intersample::Bl, Past::Pa);
  const auto est = fit(build_bl_pa(ubl, kRef), gaussian_vector(9, 5), 0.05);
  const Eigen::VectorXcd closed = est.cov.cross->spectrum(omegas, est.coeffs);
  const Eigen::VectorXcd quad = est.cov.cross->CrossCovariance::spectrum(omegas, est.coeffs);
  EXPECT_LT((closed - quad).cwiseAbs().maxCoeff(), 1e-8 * quad.cwiseAbs().maxCoeff());
}

TEST(PredictOutput, ZeroEstimatePredictsZero) {
  auto est = fit(small_cov(), gaussian_vector(12, 1), 0.1);
  est.coeffs.setZero();
  const auto uv = zoh(gaussian_samples(40, 2), 0.1, Past::Za);
  EXPECT_EQ(predict_output(est, uv, 30).cwiseAbs().maxCoeff(), 0.0);
}

TEST(PredictOutput, LinearInValidationInput) {
  const auto est = fit(small_cov(Past::Pa), gaussian_vector(12, 1), 0.1);
  const auto s1 = gaussian_samples(50, 7);
  const auto s2 = gaussian_samples(50, 8);
  std::vector<double> s12(50);
  for (std::size_t i = 0; i < 50; ++i) s12[i] = s1[i] + s2[i];
  const long h = default_horizon(est, 0.1);
  for (Past past : {Past::Za, Past::Pa}) {
    const Eigen::VectorXd a = predict_output(est, zoh(s1, 0.1, past), h);
    const Eigen::VectorXd b = predict_output(est, zoh(s2, 0.1, past), h);
    const Eigen::VectorXd c = predict_output(est, zoh(s12, 0.1, past), h);
    EXPECT_LT((c - a - b).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(PredictOutput, MatchesDirectConvolutionOfEstimate) {
  const auto est = fit(small_cov(Past::Za, 15, 3), gaussian_vector(15, 4), 0.05);
  const auto s = gaussian_samples(30, 5);
  const auto uv = zoh(s, 0.1, Past::Za);
  const Eigen::VectorXd yhat = predict_output(est, uv, default_horizon(est, 0.1));
  for (long k : {1L, 7L, 29L}) {
    // sum over cells of u(k - s) \int_cell g_hat
    double ref = 0.0;
    for (long c = 1; c <= k; ++c) {
      auto f = [&](double x) {
        const double xs[1] = {x};
        return eval_impulse(est, xs)[0];
      };
      ref += s[static_cast<std::size_t>(k - c)] * quad::integrate(f, (c - 1) * 0.1, c * 0.1).value;
    }
    EXPECT_NEAR(yhat[k], ref, 1e-10 * std::max(1.0, std::abs(ref))) << k;
  }
}

TEST(PredictOutput, UnknownPastNeedsEnoughSamples) {
  const auto est = fit(small_cov(), gaussian_vector(12, 1), 0.1);
  const auto uv = zoh(gaussian_samples(40, 2), 0.1, Past::Unknown);
  EXPECT_THROW(predict_output(est, uv, 30, 10), std::invalid_argument);
  EXPECT_NO_THROW(predict_output(est, uv, 30, 30));
}

TEST(PredictOutput, BandLimitedInputUsesFourierReconstruction) {
  const SampledSignal utr(gaussian_samples(31, 2), 0.1, Intersample::Bl, Past::Pa);
  const auto est = fit(build_bl_pa(utr, kRef), gaussian_vector(31, 3), 0.05);
  // Predicting on the training input reproduces the posterior mean Sigma c.
  const Eigen::VectorXd yhat = predict_output(est, utr, 1);
  const Eigen::VectorXd ref = est.cov.sigma_y * est.coeffs;
  EXPECT_LT((yhat - ref).cwiseAbs().maxCoeff(), 1e-9 * ref.cwiseAbs().maxCoeff());
}

TEST(PredictOutput, ZohTrainingInputReproducesPosteriorMean) {
  for (Past past : {Past::Za, Past::Pa}) {
    const auto cov = small_cov(past, 20, 6);
    const auto est = fit(cov, gaussian_vector(20, 7), 0.05);
    const auto u = zoh(gaussian_samples(20, 6), 0.1, past);
    const long h = past == Past::Za ? 20 : 40 * 20;
    const Eigen::VectorXd yhat = predict_output(est, u, h);
    const Eigen::VectorXd ref = cov.sigma_y * est.coeffs;
    EXPECT_LT((yhat - ref).cwiseAbs().maxCoeff(), 1e-9 * ref.cwiseAbs().maxCoeff()) << to_string(past);
  }
}

TEST(Estimator, NoiselessKernelMatchedDataIsPredictedAlmostExactly) {
  // Zero past known, so the zero-appended covariance is exact for these data.
  const StateSpace ss = to_state_space(rao_garnier());
  const double ts = 0.05;
  const auto u = generate_prbs(10, 7, 200, 11, ts).with_past(Past::Za);
  const Eigen::VectorXd y0 = simulate_zoh(ss, u);
  const auto noisy = add_noise(y0, 120.0, 12);
  OptimizeOptions opt;
  opt.n_starts = 4;
  opt.seed = 3;
  opt.model = ModelSpec{Combo::ZohZa, false};
  const auto res = optimize(u, noisy.y, opt);
  const auto est = estimate_with(u, noisy.y, res.best, Combo::ZohZa, false);

  const auto uv = generate_prbs(10, 7, 400, 13, ts).with_past(Past::Za);
  const Eigen::VectorXd yv = simulate_zoh(ss, uv);
  const Eigen::VectorXd yhat = predict_output(est, uv, default_horizon(est, ts));
  EXPECT_GT(fit_y(yhat, yv), 99.0);
}

TEST(Estimator, TransientTermImprovesPredictionWhenPastIsNotZero) {
  // D3-sized record cut from the middle of a long simulation: the training
  // past is nonzero, so zero-appended covariance is misspecified.
  DataBankSpec spec = databank_spec("D3");
  const StateSpace ss = to_state_space(rao_garnier());
  const Trial trial = make_trial(spec, ss, 2024, 0);
  TrialOptions plain;
  plain.optimizer.n_starts = 6;
  plain.optimizer.seed = 1;
  plain.transient = false;
  plain.grid = fit_grid(0.002);
  TrialOptions with = plain;
  with.transient = true;
  const auto a = run_trial(trial, ss, plain);
  const auto b = run_trial(trial, ss, with);
  EXPECT_GT(b.fit_y, a.fit_y) << "plain " << a.fit_y << " transient " << b.fit_y;
}

}  // namespace
}  // namespace ctkrm
