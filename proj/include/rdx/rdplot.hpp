#pragma once

#include <optional>
#include <vector>

#include "rdx/dataset.hpp"

namespace rdx {

struct PlotBin {
  double lo = 0.0;
  double hi = 0.0;
  double center = 0.0;
  /// NaN for an empty bin.
  double mean = 0.0;
  std::size_t count = 0;
};

/// Binned means and a global polynomial fit on one side of the cutoff.
struct PlotSide {
  std::vector<PlotBin> bins;
  /// Coefficients of y on (x - cutoff)^j, j = 0..order.
  std::vector<double> fit;
  std::size_t n = 0;
};

struct RDPlotData {
  /// Unset for the pooled plot on recentred scores.
  std::optional<double> cutoff;
  bool normalized = false;
  int order = 1;
  PlotSide left;
  PlotSide right;
};

/// Evenly spaced bins over each side's observed score range (x < c on the
/// left, x >= c on the right) and a side-specific global OLS fit of the given
/// order. With no cutoff the sample is recentred at each unit's cutoff and
/// pooled at zero.
RDPlotData rdplot_bins(const Dataset& ds, std::optional<double> cutoff, int bins_per_side = 20,
                       int order = 1);

}  // namespace rdx
