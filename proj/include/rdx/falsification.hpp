#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rdx/dataset.hpp"
#include "rdx/errors.hpp"
#include "rdx/locfit.hpp"

namespace rdx {

/// Global polynomial comparison of the two control groups below the low
/// cutoff: y on [1, H, r_p(t), H * r_p(t)] with t the standardized score and
/// H = 1(C = high).
struct GlobalTrendResult {
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> gamma;
  std::vector<double> delta;
  /// Score standardization t = (x - x_mean) / x_sd.
  double x_mean = 0.0;
  double x_sd = 1.0;
  bool joint = false;
  double f_stat = 0.0;
  int df_num = 0;
  int df_den = 0;
  double p_value = 1.0;
  std::size_t n_used = 0;
  int order = 2;
};

/// Tests delta = 0 (p restrictions), or (beta, delta) = 0 jointly when
/// `include_intercept_shift` is set. HC1 covariance.
GlobalTrendResult global_parallel_test(const Dataset& ds, const CutoffPair& pair, int order = 2,
                                       bool include_intercept_shift = false);

struct DerivPoint {
  double x = 0.0;
  bool ok = false;
  std::optional<ErrorKind> error;
  std::string message;
  double diff = 0.0;
  double diff_rbc = 0.0;
  double se_rbc = 0.0;
  Interval ci_rbc;
  bool reject = false;
  double h_low = 0.0;
  double h_high = 0.0;
  std::size_t n_eff_low = 0;
  std::size_t n_eff_high = 0;
};

struct DerivTestResult {
  std::vector<DerivPoint> points;
  /// Max of |diff_rbc / se_rbc| over points that were estimated.
  double sup_stat = 0.0;
  bool any_reject = false;
  double level = 0.95;
};

/// Ten equidistant points spanning the 5%-95% range of the scores below the
/// low cutoff that lie in both groups' support.
std::vector<double> auto_derivative_grid(const Dataset& ds, const CutoffPair& pair,
                                         std::size_t count = 10);

/// Pointwise comparison of first derivatives of the two control functions
/// below the low cutoff (local quadratic fits, robust bias-corrected
/// intervals). `spec` supplies the kernel and an optional common bandwidth.
/// An empty grid selects auto_derivative_grid.
DerivTestResult local_derivative_test(const Dataset& ds, const CutoffPair& pair,
                                      std::vector<double> grid, double level = 0.95,
                                      const FitSpec& spec = {});

}  // namespace rdx
