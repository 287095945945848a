#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rdx/dataset.hpp"

namespace rdx {

enum class Kernel { Triangular, Uniform, Epanechnikov };
/// Left keeps x < x0, Right keeps x >= x0, Both keeps every row.
enum class Side { Left, Right, Both };

const char* to_string(Kernel kernel);
const char* to_string(Side side);

/// K(u); zero outside [-1, 1].
double kernel_weight(Kernel kernel, double u);

struct FitSpec {
  int p = 1;
  int deriv = 0;
  Kernel kernel = Kernel::Triangular;
  /// Explicit bandwidth; unset selects the MSE-optimal plug-in bandwidth.
  std::optional<double> h;
  Side side = Side::Both;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// One kernel-weighted polynomial fit at x0. Only observations with a
/// nonzero kernel weight are stored; every other row has smoother weight 0.
struct LocalFit {
  double x0 = 0.0;
  int p = 1;
  int deriv = 0;
  Kernel kernel = Kernel::Triangular;
  Side side = Side::Both;
  /// Coefficients in the original score units: estimate of the j-th
  /// derivative is j! * beta[j].
  std::vector<double> beta;
  double estimate = 0.0;
  double variance = 0.0;
  double h_used = 0.0;
  std::size_t n_eff = 0;
  bool h_auto = false;
  bool degenerate_pilot = false;

  /// In-window observations, sorted by view position.
  std::vector<std::size_t> positions;
  std::vector<std::uint32_t> rows;
  std::vector<double> weights;
  std::vector<double> sigma2;
  std::vector<double> residuals;
  /// Fingerprint of the view the fit was computed on.
  std::uint64_t view = 0;

  double se() const;
};

struct BandwidthChoice {
  double h = 0.0;
  /// The pilot bias constant was (numerically) zero or the plug-in formula
  /// produced a non-finite value; h then falls back to the upper clip.
  bool degenerate_pilot = false;
  bool clipped_low = false;
  bool clipped_high = false;
  double h_min = 0.0;
  double h_max = 0.0;
  double bias_constant = 0.0;
  double variance_constant = 0.0;
  /// Variance of the estimated bias constant.
  double regularization = 0.0;
};

/// MSE-optimal plug-in bandwidth for estimating the deriv-th derivative at
/// x0 with a local polynomial of order p, using a global polynomial pilot of
/// order p + 3 on the rows of the requested side.
BandwidthChoice select_bandwidth_mse(const Dataset& data, const FitSpec& spec, double x0);

LocalFit local_fit(const Dataset& data, const FitSpec& spec, double x0);

struct RbcResult {
  LocalFit fit;
  /// Bias-corrected fit: smoother weights of the corrected estimator, its
  /// estimate and robust variance. Shares rows/positions with the order p+1
  /// fit at the same bandwidth.
  LocalFit corrected;
  double bias = 0.0;
  double level = 0.95;
  Interval ci_conventional;
  Interval ci_rbc;
  double p_value_rbc = 1.0;

  double rbc_estimate() const { return corrected.estimate; }
  double rbc_se() const { return corrected.se(); }
};

/// Robust bias correction with pilot bandwidth b = h: the leading bias is
/// estimated from an order p+1 fit and subtracted, and the variance is the
/// robust variance of the corrected linear smoother.
RbcResult rbc_interval(const LocalFit& fit, const Dataset& data, const FitSpec& spec,
                       double level = 0.95);

/// Sum over shared observations of w_a * w_b * sigma^2. Both fits must come
/// from the same view.
double fit_covariance(const LocalFit& a, const LocalFit& b, const Dataset& data);

/// Nearest-neighbour residual variance (3 neighbours inside each
/// (cutoff, assignment side) cell) for the given view positions. Cells with
/// fewer than 4 members get NaN, to be replaced by squared residuals.
std::vector<double> nn_variance(const Dataset& data, const std::vector<std::size_t>& positions);

/// Kernel moment integral of K(u)^power * u^k over the support of `side`.
double kernel_moment(Kernel kernel, Side side, int k, int power = 1);

}  // namespace rdx
