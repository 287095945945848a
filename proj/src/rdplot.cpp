#include "rdx/rdplot.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rdx/errors.hpp"

namespace rdx {

namespace {

PlotSide side_data(const std::vector<double>& x, const std::vector<double>& y, double c,
                   int bins, int order, const char* name) {
  PlotSide s;
  s.n = x.size();
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = std::unique(sorted.begin(), sorted.end()) - sorted.begin();
  if (distinct < order + 1)
    throw Error(ErrorKind::InsufficientData, std::string(name) + " side needs " +
                                                 std::to_string(order + 1) + " distinct scores");
  const double lo = sorted.front(), hi = sorted[static_cast<std::size_t>(distinct - 1)];
  const double width = (hi - lo) / bins;

  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> cnt(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto b = width > 0.0 ? static_cast<std::ptrdiff_t>(std::floor((x[i] - lo) / width)) : 0;
    b = std::clamp<std::ptrdiff_t>(b, 0, bins - 1);
    sum[static_cast<std::size_t>(b)] += y[i];
    ++cnt[static_cast<std::size_t>(b)];
  }
  for (int b = 0; b < bins; ++b) {
    PlotBin bin;
    const auto ub = static_cast<std::size_t>(b);
    bin.lo = lo + width * b;
    bin.hi = b + 1 == bins ? hi : lo + width * (b + 1);
    bin.center = 0.5 * (bin.lo + bin.hi);
    bin.count = cnt[ub];
    bin.mean = cnt[ub] ? sum[ub] / static_cast<double>(cnt[ub])
                       : std::numeric_limits<double>::quiet_NaN();
    s.bins.push_back(bin);
  }

  const auto n = static_cast<Eigen::Index>(x.size());
  const double scale = std::max({std::abs(lo - c), std::abs(hi - c), 1e-300});
  Eigen::MatrixXd X(n, order + 1);
  Eigen::VectorXd Y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (x[static_cast<std::size_t>(i)] - c) / scale;
    double v = 1.0;
    for (int j = 0; j <= order; ++j, v *= t) X(i, j) = v;
    Y(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd b = X.colPivHouseholderQr().solve(Y);
  for (int j = 0; j <= order; ++j) s.fit.push_back(b(j) / std::pow(scale, j));
  return s;
}

}  // namespace

RDPlotData rdplot_bins(const Dataset& ds, std::optional<double> cutoff, int bins_per_side,
                       int order) {
  if (bins_per_side < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 bins per side");
  if (order != 1 && order != 2) throw Error(ErrorKind::UnsupportedOrder, "plot fit order must be 1 or 2");
  RDPlotData out;
  out.cutoff = cutoff;
  out.order = order;
  Dataset view;
  double c = 0.0;
  if (cutoff) {
    if (!ds.has_cutoff(*cutoff))
      throw Error(ErrorKind::UnknownCutoff, "cutoff not present in the data");
    RowFilter f;
    f.cutoff = *cutoff;
    view = ds.subset(f);
    c = *cutoff;
  } else {
    view = ds.normalized();
    out.normalized = true;
  }
  std::vector<double> xl, yl, xr, yr;
  for (std::size_t i = 0; i < view.size(); ++i) {
    if (view.x(i) < c) {
      xl.push_back(view.x(i));
      yl.push_back(view.y(i));
    } else {
      xr.push_back(view.x(i));
      yr.push_back(view.y(i));
    }
  }
  out.left = side_data(xl, yl, c, bins_per_side, order, "left");
  out.right = side_data(xr, yr, c, bins_per_side, order, "right");
  return out;
}

}  // namespace rdx
