#include "rdx/locfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "rdx/errors.hpp"
#include "rdx/stats.hpp"

namespace rdx {

const char* to_string(Kernel kernel) {
  switch (kernel) {
    case Kernel::Triangular: return "triangular";
    case Kernel::Uniform: return "uniform";
    case Kernel::Epanechnikov: return "epanechnikov";
  }
  return "?";
}

const char* to_string(Side side) {
  switch (side) {
    case Side::Left: return "left";
    case Side::Right: return "right";
    case Side::Both: return "both";
  }
  return "?";
}

double kernel_weight(Kernel kernel, double u) {
  const double a = std::abs(u);
  if (a > 1.0) return 0.0;
  switch (kernel) {
    case Kernel::Triangular: return 1.0 - a;
    case Kernel::Uniform: return 0.5;
    case Kernel::Epanechnikov: return 0.75 * (1.0 - u * u);
  }
  return 0.0;
}

double LocalFit::se() const { return std::sqrt(std::max(variance, 0.0)); }

double kernel_moment(Kernel kernel, Side side, int k, int power) {
  // Integrals over [0, 1]; the left half follows from u -> -u.
  const double k1 = k + 1.0, k2 = k + 2.0, k3 = k + 3.0, k5 = k + 5.0;
  double right = 0.0;
  if (power == 1) {
    switch (kernel) {
      case Kernel::Triangular: right = 1.0 / (k1 * k2); break;
      case Kernel::Uniform: right = 0.5 / k1; break;
      case Kernel::Epanechnikov: right = 0.75 * (1.0 / k1 - 1.0 / k3); break;
    }
  } else if (power == 2) {
    switch (kernel) {
      case Kernel::Triangular: right = 2.0 / (k1 * k2 * k3); break;
      case Kernel::Uniform: right = 0.25 / k1; break;
      case Kernel::Epanechnikov: right = 0.5625 * (1.0 / k1 - 2.0 / k3 + 1.0 / k5); break;
    }
  } else {
    throw Error(ErrorKind::InvalidArgument, "kernel_moment supports power 1 or 2");
  }
  const double left = (k % 2 == 0) ? right : -right;
  switch (side) {
    case Side::Right: return right;
    case Side::Left: return left;
    case Side::Both: return right + left;
  }
  return 0.0;
}

namespace {

bool on_side(Side side, double x, double x0) {
  switch (side) {
    case Side::Left: return x < x0;
    case Side::Right: return x >= x0;
    case Side::Both: return true;
  }
  return false;
}

void validate(const FitSpec& spec) {
  if (spec.p < 0) throw Error(ErrorKind::InvalidArgument, "polynomial order must be >= 0");
  if (spec.deriv < 0 || spec.deriv > spec.p)
    throw Error(ErrorKind::InvalidArgument, "derivative order must satisfy 0 <= deriv <= p");
  if (spec.h && !(*spec.h > 0.0))
    throw Error(ErrorKind::NonpositiveBandwidth, "bandwidth must be positive");
}

double factorial(int k) {
  double f = 1.0;
  for (int j = 2; j <= k; ++j) f *= j;
  return f;
}

struct Window {
  std::vector<std::size_t> pos;
  std::vector<double> u;
  std::vector<double> k;
  std::vector<double> y;
  std::size_t distinct = 0;
  bool constant_y = true;
};

Window collect_window(const Dataset& data, Side side, Kernel kernel, double x0, double h) {
  Window w;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double x = data.x(i);
    if (!on_side(side, x, x0)) continue;
    const double u = (x - x0) / h;
    const double kw = kernel_weight(kernel, u);
    if (kw <= 0.0) continue;
    w.pos.push_back(i);
    w.u.push_back(u);
    w.k.push_back(kw);
    w.y.push_back(data.y(i));
  }
  std::vector<double> us = w.u;
  std::sort(us.begin(), us.end());
  w.distinct = static_cast<std::size_t>(std::unique(us.begin(), us.end()) - us.begin());
  for (std::size_t i = 1; i < w.y.size(); ++i)
    if (w.y[i] != w.y[0]) {
      w.constant_y = false;
      break;
    }
  return w;
}

// Solution of the kernel-weighted least squares problem in the scaled basis
// u^j, u = (x - x0) / h. Row j of `smoother` maps outcomes to the j-th
// scaled coefficient.
struct Wls {
  Eigen::MatrixXd smoother;
  Eigen::MatrixXd basis;
};

constexpr double kMaxCondition = 1e10;

Wls solve_wls(const Window& w, int order) {
  const auto n = static_cast<Eigen::Index>(w.pos.size());
  const Eigen::Index m = order + 1;
  if (n < m || w.distinct < static_cast<std::size_t>(m))
    throw Error(ErrorKind::InsufficientData,
                "need at least " + std::to_string(m) + " distinct in-window scores, have " +
                    std::to_string(w.distinct));
  Wls out;
  out.basis.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = 1.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      out.basis(i, j) = v;
      v *= w.u[static_cast<std::size_t>(i)];
    }
  }
  const Eigen::Map<const Eigen::VectorXd> kw(w.k.data(), n);
  const Eigen::MatrixXd rtw = out.basis.transpose() * kw.asDiagonal();
  const Eigen::MatrixXd gram = rtw * out.basis;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kMaxCondition)
    throw Error(ErrorKind::InsufficientData, "singular local design");

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::InsufficientData, "local design is not positive definite");
  out.smoother = llt.solve(rtw);
  return out;
}

double weighted_sum_sq(const std::vector<double>& w, const std::vector<double>& s2) {
  double v = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) v += w[i] * w[i] * s2[i];
  return v;
}

LocalFit fit_at_bandwidth(const Dataset& data, const FitSpec& spec, double x0, double h) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw Error(ErrorKind::NonpositiveBandwidth, "bandwidth must be positive and finite");
  const Window w = collect_window(data, spec.side, spec.kernel, x0, h);
  if (w.pos.size() < static_cast<std::size_t>(spec.p + 1))
    throw Error(ErrorKind::InsufficientData,
                "effective sample " + std::to_string(w.pos.size()) + " below p+1 at x0=" +
                    std::to_string(x0));
  const Wls wls = solve_wls(w, spec.p);
  const auto n = w.pos.size();
  const int m = spec.p + 1;

  LocalFit fit;
  fit.x0 = x0;
  fit.p = spec.p;
  fit.deriv = spec.deriv;
  fit.kernel = spec.kernel;
  fit.side = spec.side;
  fit.h_used = h;
  fit.n_eff = n;
  fit.view = data.fingerprint();
  fit.positions = w.pos;
  fit.rows.reserve(n);
  for (auto p : w.pos) fit.rows.push_back(data.row_id(p));

  const Eigen::Map<const Eigen::VectorXd> y(w.y.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd scaled = wls.smoother * y;
  if (w.constant_y) {
    scaled.setZero();
    scaled(0) = w.y[0];
  }
  fit.beta.resize(m);
  for (int j = 0; j < m; ++j) fit.beta[j] = scaled(j) / std::pow(h, j);

  const double scale = factorial(spec.deriv) / std::pow(h, spec.deriv);
  fit.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    fit.weights[i] = scale * wls.smoother(spec.deriv, static_cast<Eigen::Index>(i));
  if (w.constant_y) {
    fit.estimate = spec.deriv == 0 ? w.y[0] : 0.0;
  } else {
    double est = 0.0;
    for (std::size_t i = 0; i < n; ++i) est += fit.weights[i] * w.y[i];
    fit.estimate = est;
  }

  const Eigen::VectorXd fitted = wls.basis * scaled;
  fit.residuals.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.residuals[i] = w.y[i] - fitted(static_cast<Eigen::Index>(i));

  fit.sigma2 = nn_variance(data, fit.positions);
  for (std::size_t i = 0; i < n; ++i)
    if (std::isnan(fit.sigma2[i])) fit.sigma2[i] = fit.residuals[i] * fit.residuals[i];
  fit.variance = weighted_sum_sq(fit.weights, fit.sigma2);
  return fit;
}

}  // namespace

std::vector<double> nn_variance(const Dataset& data, const std::vector<std::size_t>& positions) {
  constexpr int kNeighbours = 3;
  // Cells are (cutoff, assignment side); in sharp designs this is the
  // (cutoff, treated) partition.
  std::map<std::pair<double, bool>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < data.size(); ++i)
    cells[{data.c(i), data.x(i) >= data.c(i)}].push_back(i);

  std::vector<const std::vector<std::size_t>*> cell_of(data.size(), nullptr);
  std::vector<std::size_t> rank(data.size(), 0);
  for (auto& [key, members] : cells) {
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return data.x(a) < data.x(b); });
    for (std::size_t r = 0; r < members.size(); ++r) {
      cell_of[members[r]] = &members;
      rank[members[r]] = r;
    }
  }

  std::vector<double> out;
  out.reserve(positions.size());
  for (auto pos : positions) {
    const auto& members = *cell_of[pos];
    if (members.size() < kNeighbours + 1) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double x0 = data.x(pos);
    std::ptrdiff_t lo = static_cast<std::ptrdiff_t>(rank[pos]) - 1;
    std::size_t hi = rank[pos] + 1;
    double sum = 0.0;
    for (int k = 0; k < kNeighbours; ++k) {
      const bool has_lo = lo >= 0;
      const bool has_hi = hi < members.size();
      bool take_lo;
      if (has_lo && has_hi)
        take_lo = (x0 - data.x(members[static_cast<std::size_t>(lo)])) <= (data.x(members[hi]) - x0);
      else
        take_lo = has_lo;
      if (take_lo) {
        sum += data.y(members[static_cast<std::size_t>(lo)]);
        --lo;
      } else {
        sum += data.y(members[hi]);
        ++hi;
      }
    }
    const double dev = data.y(pos) - sum / kNeighbours;
    out.push_back(static_cast<double>(kNeighbours) / (kNeighbours + 1) * dev * dev);
  }
  return out;
}

BandwidthChoice select_bandwidth_mse(const Dataset& data, const FitSpec& spec, double x0) {
  validate(spec);
  const int p = spec.p;
  const int nu = spec.deriv;

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!on_side(spec.side, data.x(i), x0)) continue;
    xs.push_back(data.x(i));
    ys.push_back(data.y(i));
  }
  const std::size_t n = xs.size();
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const auto distinct =
      static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < static_cast<std::size_t>(p + 3))
    throw Error(ErrorKind::InsufficientData,
                "bandwidth selection needs " + std::to_string(p + 3) + " distinct scores on side " +
                    to_string(spec.side) + ", have " + std::to_string(distinct));

  BandwidthChoice out;

  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(xs[i] - x0);
  std::vector<double> dsorted = dist;
  // Smallest window holding p + 3 scores, so that the order p + 1 correction
  // fit still has p + 2 points with non-negligible kernel weight.
  std::nth_element(dsorted.begin(), dsorted.begin() + (p + 2), dsorted.end());
  const double dmax = *std::max_element(dist.begin(), dist.end());
  out.h_min = dsorted[static_cast<std::size_t>(p + 2)] * (1.0 + 1e-9);
  if (!(out.h_min > 0.0)) out.h_min = 1e-9 * std::max(dmax, 1.0);
  const double range = sorted[distinct - 1] - sorted[0];
  out.h_max = std::max(range, out.h_min);

  // Global polynomial pilot on t = (x - x0) / s.
  const int q = std::min(p + 3, static_cast<int>(distinct) - 1);
  const double s = dmax > 0.0 ? dmax : 1.0;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), q + 1);
  Eigen::VectorXd Y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (xs[i] - x0) / s;
    double v = 1.0;
    for (int j = 0; j <= q; ++j) {
      X(static_cast<Eigen::Index>(i), j) = v;
      v *= t;
    }
    Y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::VectorXd b = qr.solve(Y);
  const Eigen::VectorXd resid = Y - X * b;
  const double dof = static_cast<double>(n) - (q + 1);
  const double sigma2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  // m^{(p+1)}(x0) / (p+1)!
  const double taylor = b(p + 1) / std::pow(s, p + 1);

  // n * f(x0) from a rule-of-thumb box count around x0.
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / std::max<double>(1.0, static_cast<double>(n) - 1));
  std::vector<double> all = xs;
  std::sort(all.begin(), all.end());
  const double iqr = all[(3 * (n - 1)) / 4] - all[(n - 1) / 4];
  double spread = std::min(sd, iqr / 1.349);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : std::max(range, 1.0);
  double g = 1.06 * spread * std::pow(static_cast<double>(n), -0.2);
  const double sides = spec.side == Side::Both ? 2.0 : 1.0;
  std::size_t count = 0;
  for (int it = 0; it < 60; ++it) {
    count = 0;
    for (double d : dist)
      if (d <= g) ++count;
    if (count > 0) break;
    g *= 2.0;
  }
  const double nf = static_cast<double>(count) / (sides * g);

  // Equivalent-kernel constants on the side's support.
  const int m = p + 1;
  Eigen::MatrixXd gamma(m, m), psi(m, m);
  Eigen::VectorXd lambda(m);
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) {
      gamma(j, k) = kernel_moment(spec.kernel, spec.side, j + k, 1);
      psi(j, k) = kernel_moment(spec.kernel, spec.side, j + k, 2);
    }
    lambda(j) = kernel_moment(spec.kernel, spec.side, j + p + 1, 1);
  }
  const Eigen::MatrixXd ginv = gamma.inverse();
  const double nu_fact = factorial(nu);
  const double bias_k = nu_fact * (ginv * lambda)(nu);
  const double var_k = nu_fact * nu_fact * (ginv * psi * ginv)(nu, nu);

  out.bias_constant = bias_k * taylor;
  out.variance_constant = sigma2 * var_k / nf;

  // Sampling variance of the pilot bias constant, added to its square so that
  // a near-zero curvature estimate does not send h to the upper clip.
  const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  const double var_taylor = sigma2 * xtx_inv(p + 1, p + 1) / std::pow(s, 2.0 * (p + 1));
  out.regularization = bias_k * bias_k * var_taylor;

  const double num = (2.0 * nu + 1.0) * out.variance_constant;
  const double den =
      2.0 * (p + 1 - nu) * (out.bias_constant * out.bias_constant + out.regularization);
  const double h = std::pow(num / den, 1.0 / (2.0 * p + 3.0));

  double yscale = 0.0;
  for (double y : ys) yscale = std::max(yscale, std::abs(y));
  const bool negligible_bias =
      std::sqrt(out.bias_constant * out.bias_constant + out.regularization) *
          std::pow(out.h_max, p + 1 - nu) <=
      1e-10 * std::max(yscale, 1e-300);
  if (!(den > 0.0) || !std::isfinite(h) || negligible_bias) {
    out.degenerate_pilot = true;
    out.clipped_high = true;
    out.h = out.h_max;
    return out;
  }
  out.h = h;
  if (out.h < out.h_min) {
    out.h = out.h_min;
    out.clipped_low = true;
  }
  if (out.h > out.h_max) {
    out.h = out.h_max;
    out.clipped_high = true;
  }
  return out;
}

LocalFit local_fit(const Dataset& data, const FitSpec& spec, double x0) {
  validate(spec);
  if (spec.h) return fit_at_bandwidth(data, spec, x0, *spec.h);
  const auto bw = select_bandwidth_mse(data, spec, x0);
  auto fit = fit_at_bandwidth(data, spec, x0, bw.h);
  fit.h_auto = true;
  fit.degenerate_pilot = bw.degenerate_pilot;
  return fit;
}

RbcResult rbc_interval(const LocalFit& fit, const Dataset& data, const FitSpec& spec,
                       double level) {
  if (fit.view != data.fingerprint())
    throw Error(ErrorKind::MismatchedViews, "fit was not computed on this view");
  if (spec.p != fit.p || spec.deriv != fit.deriv)
    throw Error(ErrorKind::InvalidArgument, "spec does not match the fit");
  const double z = stats::normal_critical(level);
  // With pilot bandwidth b = h the corrected estimator is the order p+1 fit
  // at h, and the estimated bias is the difference of the two estimates.
  FitSpec high = spec;
  high.p = fit.p + 1;
  high.h = fit.h_used;
  high.side = fit.side;
  high.kernel = fit.kernel;

  RbcResult out;
  out.fit = fit;
  out.level = level;
  LocalFit& corr = out.corrected;
  corr = fit_at_bandwidth(data, high, fit.x0, fit.h_used);
  corr.h_auto = fit.h_auto;
  corr.degenerate_pilot = fit.degenerate_pilot;
  out.bias = fit.estimate - corr.estimate;

  const double se = fit.se();
  const double se_rbc = corr.se();
  out.ci_conventional = {fit.estimate - z * se, fit.estimate + z * se};
  out.ci_rbc = {corr.estimate - z * se_rbc, corr.estimate + z * se_rbc};
  if (se_rbc > 0.0)
    out.p_value_rbc = stats::normal_two_sided_p(corr.estimate / se_rbc);
  else
    out.p_value_rbc = corr.estimate == 0.0 ? 1.0 : 0.0;
  return out;
}

double fit_covariance(const LocalFit& a, const LocalFit& b, const Dataset& data) {
  if (a.view != data.fingerprint() || b.view != data.fingerprint())
    throw Error(ErrorKind::MismatchedViews, "fits were computed on different views");
  double cov = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.positions.size() && j < b.positions.size()) {
    if (a.positions[i] < b.positions[j]) {
      ++i;
    } else if (b.positions[j] < a.positions[i]) {
      ++j;
    } else {
      cov += a.weights[i] * b.weights[j] * a.sigma2[i];
      ++i;
      ++j;
    }
  }
  return cov;
}

}  // namespace rdx
