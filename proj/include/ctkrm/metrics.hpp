#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ctkrm {

/// 100 (1 - ||x - x_hat|| / ||x - mean(x)||).
inline double fit_percent(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x) {
  if (x_hat.size() != x.size()) throw std::invalid_argument("fit: vectors differ in length");
  if (x.size() == 0) throw std::invalid_argument("fit: empty vectors");
  const double denom = (x.array() - x.mean()).matrix().norm();
  if (!(denom > 0.0)) throw std::invalid_argument("fit: reference vector is constant");
  return 100.0 * (1.0 - (x - x_hat).norm() / denom);
}

/// Impulse-response fit on a common grid.
inline double fit_g(const Eigen::VectorXd& g_hat, const Eigen::VectorXd& g_true) { return fit_percent(g_hat, g_true); }

/// Output-prediction fit against the noiseless validation output.
inline double fit_y(const Eigen::VectorXd& y_hat, const Eigen::VectorXd& y0) { return fit_percent(y_hat, y0); }

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();  // sample standard deviation (n - 1)
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

/// Per-trial scores plus their summaries.
struct FitReport {
  std::vector<long> trials;
  std::vector<double> fit_g;
  std::vector<double> fit_y;
  std::vector<long> missing;

  void add(long trial, double g, double y) {
    trials.push_back(trial);
    fit_g.push_back(g);
    fit_y.push_back(y);
  }
  Summary summary_g() const { return summarize(fit_g); }
  Summary summary_y() const { return summarize(fit_y); }
};

}  // namespace ctkrm
