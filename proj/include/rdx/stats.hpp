#pragma once

#include <Eigen/Dense>

namespace rdx::stats {

double normal_cdf(double z);
double normal_quantile(double p);
/// Two-sided critical value for a confidence level in (0, 1): 0.95 -> 1.959964.
double normal_critical(double level);
/// Two-sided p-value of a standard normal statistic.
double normal_two_sided_p(double z);
/// Upper tail P[F(df1, df2) >= f].
double f_upper_tail(double f, double df1, double df2);

/// Ordinary least squares with a heteroskedasticity-robust (HC1) covariance.
struct OlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd vcov_hc1;
  double ssr = 0.0;
  /// Sum of squared outcomes.
  double yy = 0.0;
  int n = 0;
  int k = 0;
};

/// Throws Error(SingularDesign) when the design is rank deficient.
OlsFit ols_hc1(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

struct WaldResult {
  double f_stat = 0.0;
  int df_num = 0;
  int df_den = 0;
  double p_value = 1.0;
};

/// Wald F test of R b = r using the supplied covariance.
WaldResult wald_f_test(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov,
                       const Eigen::MatrixXd& R, const Eigen::VectorXd& r, int df_den);

/// Wald F test of R b = r on an OLS fit with df_den = n - k. An exact fit
/// (zero residuals) has no usable covariance: F is 0 when the restrictions
/// hold to rounding and infinite otherwise.
WaldResult wald_f_test(const OlsFit& fit, const Eigen::MatrixXd& R, const Eigen::VectorXd& r);

}  // namespace rdx::stats
