#include "rdx/stats.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rdx/errors.hpp"

namespace rdx::stats {

double normal_cdf(double z) {
  return boost::math::cdf(boost::math::normal_distribution<>(), z);
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<>(), p);
}

double normal_critical(double level) {
  if (!(level > 0.0 && level < 1.0))
    throw Error(ErrorKind::InvalidArgument, "confidence level must lie in (0, 1)");
  return normal_quantile(1.0 - (1.0 - level) / 2.0);
}

double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<>(),
                                                        std::abs(z)));
}

double f_upper_tail(double f, double df1, double df2) {
  if (!(f > 0.0)) return 1.0;
  if (!std::isfinite(f)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<>(df1, df2), f));
}

OlsFit ols_hc1(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(X.rows());
  const int k = static_cast<int>(X.cols());
  if (n <= k) throw Error(ErrorKind::InsufficientData, "OLS needs more rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw Error(ErrorKind::SingularDesign, "design matrix is rank deficient");

  OlsFit fit;
  fit.n = n;
  fit.k = k;
  fit.coef = qr.solve(y);
  fit.residuals = y - X * fit.coef;
  fit.ssr = fit.residuals.squaredNorm();
  fit.yy = y.squaredNorm();

  // X P = Q R  =>  (X'X)^{-1} = P R^{-1} R^{-T} P'
  const Eigen::MatrixXd rinv =
      qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(
          Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * rinv * rinv.transpose() * perm.transpose();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    const double e2 = fit.residuals(i) * fit.residuals(i);
    meat.noalias() += e2 * X.row(i).transpose() * X.row(i);
  }
  fit.vcov_hc1 = (static_cast<double>(n) / (n - k)) * xtx_inv * meat * xtx_inv;
  fit.vcov_hc1 = 0.5 * (fit.vcov_hc1 + fit.vcov_hc1.transpose()).eval();
  return fit;
}

WaldResult wald_f_test(const Eigen::VectorXd& coef, const Eigen::MatrixXd& vcov,
                       const Eigen::MatrixXd& R, const Eigen::VectorXd& r, int df_den) {
  const Eigen::VectorXd diff = R * coef - r;
  const Eigen::MatrixXd middle = R * vcov * R.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(middle);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorKind::SingularDesign, "restriction covariance is not positive definite");
  WaldResult out;
  out.df_num = static_cast<int>(R.rows());
  out.df_den = df_den;
  const double wald = diff.dot(ldlt.solve(diff));
  out.f_stat = std::max(0.0, wald / out.df_num);
  out.p_value = f_upper_tail(out.f_stat, out.df_num, df_den);
  return out;
}

WaldResult wald_f_test(const OlsFit& fit, const Eigen::MatrixXd& R, const Eigen::VectorXd& r) {
  const int df_den = fit.n - fit.k;
  if (fit.ssr <= 1e-24 * std::max(fit.yy, 1.0)) {
    const Eigen::VectorXd diff = R * fit.coef - r;
    const double scale = std::max(1.0, fit.coef.cwiseAbs().maxCoeff());
    WaldResult out;
    out.df_num = static_cast<int>(R.rows());
    out.df_den = df_den;
    const bool holds = diff.cwiseAbs().maxCoeff() <= 1e-9 * scale;
    out.f_stat = holds ? 0.0 : std::numeric_limits<double>::infinity();
    out.p_value = holds ? 1.0 : 0.0;
    return out;
  }
  return wald_f_test(fit.coef, fit.vcov_hc1, R, r, df_den);
}

}  // namespace rdx::stats
