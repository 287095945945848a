#include "rdx/fixedeffects.hpp"

#include <algorithm>
#include <cmath>

#include "rdx/errors.hpp"
#include "rdx/stats.hpp"

namespace rdx {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

FEModelFit fit_fe_model(const Dataset& ds, bool common_slope, bool center) {
  const auto& cuts = ds.cutoffs();
  const std::size_t J = cuts.size();
  if (J == 0 || ds.empty()) throw Error(ErrorKind::InsufficientData, "empty dataset");

  std::vector<std::size_t> group(ds.size());
  std::vector<std::size_t> cell_count(2 * J, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto it = std::lower_bound(cuts.begin(), cuts.end(), ds.c(i));
    group[i] = static_cast<std::size_t>(it - cuts.begin());
    ++cell_count[2 * group[i] + static_cast<std::size_t>(ds.d(i) != 0)];
  }
  for (std::size_t j = 0; j < J; ++j)
    for (int d = 0; d < 2; ++d)
      if (cell_count[2 * j + static_cast<std::size_t>(d)] == 0)
        throw Error(ErrorKind::EmptyCell, "cutoff " + num(cuts[j]) + (d ? " treated" : " control") +
                                              " cell is empty");

  FEModelFit fit;
  fit.cutoffs = cuts;
  fit.common_slope = common_slope;
  fit.centered = center;
  fit.n = ds.size();
  const std::size_t nb = common_slope ? 1 : J;
  const auto k = static_cast<Eigen::Index>(3 * J + nb);

  for (std::size_t j = 0; j < J; ++j) fit.labels.push_back("gamma[" + num(cuts[j]) + "]");
  if (common_slope)
    fit.labels.push_back("beta");
  else
    for (std::size_t j = 0; j < J; ++j) fit.labels.push_back("beta[" + num(cuts[j]) + "]");
  for (std::size_t j = 0; j < J; ++j) fit.labels.push_back("delta[" + num(cuts[j]) + "]");
  for (std::size_t j = 0; j < J; ++j) fit.labels.push_back("theta[" + num(cuts[j]) + "]");
  fit.beta.resize(nb);

  const auto n = static_cast<Eigen::Index>(ds.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::size_t j = group[ui];
    const double x = center ? ds.x(ui) - ds.c(ui) : ds.x(ui);
    const double d = ds.d(ui) != 0 ? 1.0 : 0.0;
    X(i, static_cast<Eigen::Index>(fit.index_gamma(j))) = 1.0;
    X(i, static_cast<Eigen::Index>(fit.index_beta(j))) = x;
    X(i, static_cast<Eigen::Index>(fit.index_delta(j))) = d;
    X(i, static_cast<Eigen::Index>(fit.index_theta(j))) = x * d;
    y(i) = ds.y(ui);
  }
  const auto ols = stats::ols_hc1(X, y);
  fit.coef = ols.coef;
  fit.vcov = ols.vcov_hc1;
  fit.ssr = ols.ssr;
  fit.residuals.assign(ols.residuals.data(), ols.residuals.data() + n);
  for (std::size_t j = 0; j < J; ++j) {
    fit.gamma.push_back(ols.coef(static_cast<Eigen::Index>(fit.index_gamma(j))));
    fit.delta.push_back(ols.coef(static_cast<Eigen::Index>(fit.index_delta(j))));
    fit.theta.push_back(ols.coef(static_cast<Eigen::Index>(fit.index_theta(j))));
  }
  for (std::size_t j = 0; j < nb; ++j)
    fit.beta[j] = ols.coef(static_cast<Eigen::Index>(fit.index_beta(j)));
  return fit;
}

FEEffect fe_effect_at(const FEModelFit& fit, std::size_t cutoff_index, double xbar) {
  if (cutoff_index >= fit.cutoffs.size())
    throw Error(ErrorKind::IndexOutOfRange, "cutoff index " + std::to_string(cutoff_index) +
                                                " out of range");
  Eigen::VectorXd a = Eigen::VectorXd::Zero(fit.coef.size());
  a(static_cast<Eigen::Index>(fit.index_delta(cutoff_index))) = 1.0;
  a(static_cast<Eigen::Index>(fit.index_theta(cutoff_index))) = xbar;
  FEEffect e;
  e.estimate = fit.delta[cutoff_index] + fit.theta[cutoff_index] * xbar;
  e.se = std::sqrt(std::max(0.0, a.dot(fit.vcov * a)));
  return e;
}

SlopeTestResult slope_equality_test(const Dataset& ds) {
  const std::size_t J = ds.cutoffs().size();
  if (J < 2)
    throw Error(ErrorKind::InvalidArgument, "slope equality needs at least two cutoffs");
  SlopeTestResult out;
  out.fit = fit_fe_model(ds, false, true);
  const auto k = out.fit.coef.size();
  const auto q = static_cast<Eigen::Index>(J - 1);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(q, k);
  for (std::size_t j = 1; j < J; ++j) {
    R(static_cast<Eigen::Index>(j - 1), static_cast<Eigen::Index>(out.fit.index_beta(0))) = 1.0;
    R(static_cast<Eigen::Index>(j - 1), static_cast<Eigen::Index>(out.fit.index_beta(j))) = -1.0;
  }
  stats::OlsFit ols;
  ols.coef = out.fit.coef;
  ols.vcov_hc1 = out.fit.vcov;
  ols.residuals = Eigen::Map<const Eigen::VectorXd>(out.fit.residuals.data(),
                                                     static_cast<Eigen::Index>(out.fit.n));
  ols.ssr = out.fit.ssr;
  ols.n = static_cast<int>(out.fit.n);
  ols.k = static_cast<int>(k);
  for (std::size_t i = 0; i < ds.size(); ++i) ols.yy += ds.y(i) * ds.y(i);
  const auto w = stats::wald_f_test(ols, R, Eigen::VectorXd::Zero(q));
  out.f_stat = w.f_stat;
  out.df_num = w.df_num;
  out.df_den = w.df_den;
  out.p_value = w.p_value;
  return out;
}

}  // namespace rdx
