#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rdx/dataset.hpp"

namespace rdx {

/// Linear multi-cutoff model
///   y = gamma_j + beta x + delta_j d + theta_j x d + e
/// with one intercept per cutoff. Without a common slope each cutoff gets its
/// own control slope beta_j. Coefficients are stacked as
/// [gamma (J), beta (1 or J), delta (J), theta (J)].
struct FEModelFit {
  std::vector<double> cutoffs;
  bool common_slope = true;
  /// Scores recentred at each unit's cutoff.
  bool centered = false;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> delta;
  std::vector<double> theta;
  Eigen::VectorXd coef;
  Eigen::MatrixXd vcov;
  std::vector<std::string> labels;
  std::vector<double> residuals;
  double ssr = 0.0;
  std::size_t n = 0;

  std::size_t index_gamma(std::size_t j) const { return j; }
  std::size_t index_beta(std::size_t j) const { return cutoffs.size() + (common_slope ? 0 : j); }
  std::size_t index_delta(std::size_t j) const { return cutoffs.size() + beta.size() + j; }
  std::size_t index_theta(std::size_t j) const { return 2 * cutoffs.size() + beta.size() + j; }
};

/// OLS with HC1 covariance. Every (cutoff, treated) cell must be nonempty.
FEModelFit fit_fe_model(const Dataset& ds, bool common_slope = true, bool center = true);

struct FEEffect {
  double estimate = 0.0;
  double se = 0.0;
};

/// delta_j + theta_j * xbar, with xbar in the fit's score convention
/// (distance to cutoff j when the fit is centred).
FEEffect fe_effect_at(const FEModelFit& fit, std::size_t cutoff_index, double xbar);

struct SlopeTestResult {
  double f_stat = 0.0;
  int df_num = 0;
  int df_den = 0;
  double p_value = 1.0;
  FEModelFit fit;
};

/// Wald test of equal control slopes across cutoffs (J - 1 restrictions).
SlopeTestResult slope_equality_test(const Dataset& ds);

}  // namespace rdx
