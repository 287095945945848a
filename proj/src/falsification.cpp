#include "rdx/falsification.hpp"

#include <algorithm>
#include <cmath>

#include "rdx/stats.hpp"

namespace rdx {

namespace {

// Rows of the two groups strictly below the low cutoff.
std::pair<Dataset, Dataset> below_low(const Dataset& ds, const CutoffPair& pair) {
  RowFilter f;
  f.cutoff = pair.low;
  f.above_cutoff = false;
  Dataset low = ds.subset(f);
  f = RowFilter{};
  f.cutoff = pair.high;
  Dataset high_all = ds.subset(f);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < high_all.size(); ++i)
    if (high_all.x(i) < pair.low) keep.push_back(i);
  return {low, high_all.select(keep)};
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

GlobalTrendResult global_parallel_test(const Dataset& ds, const CutoffPair& pair, int order,
                                       bool include_intercept_shift) {
  if (order < 1) throw Error(ErrorKind::InvalidArgument, "polynomial order must be at least 1");
  const auto [low, high] = below_low(ds, pair);
  const auto need = static_cast<std::size_t>(order + 2);
  if (low.size() < need || high.size() < need)
    throw Error(ErrorKind::InsufficientData,
                "each group needs at least p+2 rows below the low cutoff");

  const std::size_t n = low.size() + high.size();
  std::vector<double> x(n), y(n), h(n);
  for (std::size_t i = 0; i < low.size(); ++i) {
    x[i] = low.x(i);
    y[i] = low.y(i);
  }
  for (std::size_t i = 0; i < high.size(); ++i) {
    x[low.size() + i] = high.x(i);
    y[low.size() + i] = high.y(i);
    h[low.size() + i] = 1.0;
  }

  GlobalTrendResult r;
  r.order = order;
  r.joint = include_intercept_shift;
  r.n_used = n;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw Error(ErrorKind::SingularDesign, "scores below the low cutoff are constant");
  r.x_mean = mean;
  r.x_sd = sd;

  const int k = 2 + 2 * order;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), k);
  Eigen::VectorXd Y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double t = (x[i] - mean) / sd;
    X(ii, 0) = 1.0;
    X(ii, 1) = h[i];
    double tp = 1.0;
    for (int j = 1; j <= order; ++j) {
      tp *= t;
      X(ii, 1 + j) = tp;
      X(ii, 1 + order + j) = h[i] * tp;
    }
    Y(ii) = y[i];
  }
  const auto fit = stats::ols_hc1(X, Y);
  r.alpha = fit.coef(0);
  r.beta = fit.coef(1);
  for (int j = 1; j <= order; ++j) {
    r.gamma.push_back(fit.coef(1 + j));
    r.delta.push_back(fit.coef(1 + order + j));
  }

  const int q = order + (include_intercept_shift ? 1 : 0);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(q, k);
  int row = 0;
  if (include_intercept_shift) R(row++, 1) = 1.0;
  for (int j = 1; j <= order; ++j) R(row++, 1 + order + j) = 1.0;
  const auto w = stats::wald_f_test(fit, R, Eigen::VectorXd::Zero(q));
  r.f_stat = w.f_stat;
  r.df_num = w.df_num;
  r.df_den = w.df_den;
  r.p_value = w.p_value;
  return r;
}

std::vector<double> auto_derivative_grid(const Dataset& ds, const CutoffPair& pair,
                                         std::size_t count) {
  const auto [low, high] = below_low(ds, pair);
  if (low.empty() || high.empty())
    throw Error(ErrorKind::InsufficientData, "both groups need scores below the low cutoff");
  double lo_min = low.x(0), hi_min = high.x(0);
  for (std::size_t i = 0; i < low.size(); ++i) lo_min = std::min(lo_min, low.x(i));
  for (std::size_t i = 0; i < high.size(); ++i) hi_min = std::min(hi_min, high.x(i));
  const double start = std::max(lo_min, hi_min);

  std::vector<double> common;
  for (const Dataset* g : {&low, &high})
    for (std::size_t i = 0; i < g->size(); ++i)
      if (g->x(i) >= start) common.push_back(g->x(i));
  const double a = quantile(common, 0.05);
  const double b = quantile(common, 0.95);
  std::vector<double> grid;
  if (count == 1) return {0.5 * (a + b)};
  for (std::size_t j = 0; j < count; ++j)
    grid.push_back(a + (b - a) * static_cast<double>(j) / static_cast<double>(count - 1));
  return grid;
}

DerivTestResult local_derivative_test(const Dataset& ds, const CutoffPair& pair,
                                      std::vector<double> grid, double level,
                                      const FitSpec& spec) {
  const double z = stats::normal_critical(level);
  if (grid.empty()) grid = auto_derivative_grid(ds, pair);
  for (double g : grid)
    if (!(g < pair.low))
      throw Error(ErrorKind::InvalidArgument, "derivative grid points must lie below the low cutoff");
  const auto [low, high] = below_low(ds, pair);

  FitSpec fs;
  fs.p = 2;
  fs.deriv = 1;
  fs.kernel = spec.kernel;
  fs.h = spec.h;
  fs.side = Side::Both;

  DerivTestResult out;
  out.level = level;
  out.points.resize(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& pt = out.points[static_cast<std::size_t>(i)];
    pt.x = grid[static_cast<std::size_t>(i)];
    try {
      const auto fl = local_fit(low, fs, pt.x);
      const auto fh = local_fit(high, fs, pt.x);
      const auto rl = rbc_interval(fl, low, fs, level);
      const auto rh = rbc_interval(fh, high, fs, level);
      pt.diff = fl.estimate - fh.estimate;
      pt.diff_rbc = rl.rbc_estimate() - rh.rbc_estimate();
      pt.se_rbc = std::sqrt(rl.corrected.variance + rh.corrected.variance);
      pt.ci_rbc = {pt.diff_rbc - z * pt.se_rbc, pt.diff_rbc + z * pt.se_rbc};
      pt.reject = !pt.ci_rbc.contains(0.0);
      pt.h_low = fl.h_used;
      pt.h_high = fh.h_used;
      pt.n_eff_low = fl.n_eff;
      pt.n_eff_high = fh.n_eff;
      pt.ok = true;
    } catch (const Error& e) {
      pt.error = e.kind();
      pt.message = e.what();
    }
  }
  for (const auto& pt : out.points) {
    if (!pt.ok) continue;
    double t = 0.0;
    if (pt.se_rbc > 0.0)
      t = std::abs(pt.diff_rbc) / pt.se_rbc;
    else if (pt.diff_rbc != 0.0)
      t = std::numeric_limits<double>::infinity();
    out.sup_stat = std::max(out.sup_stat, t);
    out.any_reject = out.any_reject || pt.reject;
  }
  return out;
}

}  // namespace rdx
