#include "rdx/extrapolation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "rdx/stats.hpp"

namespace rdx {

namespace {

Interval centered(double est, double se, double z) { return {est - z * se, est + z * se}; }

double two_sided_p(double est, double se) {
  if (se > 0.0) return stats::normal_two_sided_p(est / se);
  return est == 0.0 ? 1.0 : 0.0;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Runs a fit and its bias correction, tagging data shortfalls with `what`.
RbcResult fit_with_rbc(const Dataset& view, const FitSpec& spec, double x0, double level,
                       const std::string& what) {
  try {
    auto fit = local_fit(view, spec, x0);
    return rbc_interval(fit, view, spec, level);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InsufficientData)
      throw Error(ErrorKind::InsufficientData, what + ": " + e.what());
    throw;
  }
}

enum ViewIndex { kTreatedLow = 0, kControlHigh = 1, kControlLow = 2 };

struct PairViews {
  std::array<Dataset, 3> v;
};

PairViews make_views(const Dataset& ds, const CutoffPair& pair) {
  PairViews out;
  RowFilter f;
  f.cutoff = pair.low;
  f.above_cutoff = true;
  out.v[kTreatedLow] = ds.subset(f);
  f.above_cutoff = false;
  out.v[kControlLow] = ds.subset(f);
  f.cutoff = pair.high;
  out.v[kControlHigh] = ds.subset(f);
  return out;
}

void check_xbar(const CutoffPair& pair, double xbar) {
  if (!(pair.low < xbar && xbar <= pair.high))
    throw Error(ErrorKind::XbarOutOfRange, "evaluation point " + fmt(xbar) + " outside (" +
                                               fmt(pair.low) + ", " + fmt(pair.high) + "]");
}

FitSpec with_side(FitSpec s, Side side, int deriv = 0) {
  s.side = side;
  s.deriv = deriv;
  return s;
}

Component make_component(std::string label, double coef, int view, const PairViews& views,
                         const FitSpec& spec, double x0, double level) {
  Component c;
  c.rbc = fit_with_rbc(views.v[static_cast<std::size_t>(view)], spec, x0, level, label);
  c.label = std::move(label);
  c.coef = coef;
  c.x0 = x0;
  c.view = view;
  return c;
}

// Fits at the low cutoff used by every evaluation point: the level terms and,
// for s_max > 0, the derivative terms.
std::vector<Component> low_components(const PairViews& views, const CutoffPair& pair,
                                      double xbar, const FitSpec& spec, int s_max, double level) {
  std::vector<Component> out;
  out.push_back(make_component("mu0_low(low)", -1.0, kControlLow, views,
                               with_side(spec, Side::Left), pair.low, level));
  out.push_back(make_component("mu0_high(low)", 1.0, kControlHigh, views,
                               with_side(spec, Side::Both), pair.low, level));
  if (s_max > 0) {
    FitSpec ds = spec;
    ds.p = std::max(spec.p, s_max + 1);
    for (int s = 1; s <= s_max; ++s) {
      const double a = std::pow(xbar - pair.low, s) / factorial(s);
      const std::string tag = "d" + std::to_string(s);
      out.push_back(make_component(tag + " mu0_low(low)", -a, kControlLow, views,
                                   with_side(ds, Side::Left, s), pair.low, level));
      out.push_back(make_component(tag + " mu0_high(low)", a, kControlHigh, views,
                                   with_side(ds, Side::Both, s), pair.low, level));
    }
  }
  return out;
}

std::array<Component, 2> xbar_components(const PairViews& views, const CutoffPair& pair,
                                         double xbar, const FitSpec& spec, double level) {
  const Side side = xbar == pair.high ? Side::Left : Side::Both;
  return {make_component("mu1_low(xbar)", 1.0, kTreatedLow, views, with_side(spec, side), xbar,
                         level),
          make_component("mu0_high(xbar)", -1.0, kControlHigh, views, with_side(spec, side), xbar,
                         level)};
}

// Combines components into the point estimate, variance with the
// within-view covariances, and the robust bias-corrected interval.
ExtrapolationResult assemble(const PairViews& views, const CutoffPair& pair, double xbar,
                             std::vector<Component> comps, int s_max, double level) {
  ExtrapolationResult r;
  r.xbar = xbar;
  r.low = pair.low;
  r.high = pair.high;
  r.level = level;
  r.order_bias = s_max;
  r.components = std::move(comps);
  const auto& c = r.components;
  const std::size_t n = c.size();

  double tau = 0.0, tau_rbc = 0.0, diag = 0.0, diag_rbc = 0.0, cross = 0.0, cross_rbc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tau += c[i].coef * c[i].estimate();
    tau_rbc += c[i].coef * c[i].rbc.rbc_estimate();
    diag += c[i].coef * c[i].coef * c[i].variance();
    diag_rbc += c[i].coef * c[i].coef * c[i].rbc.corrected.variance;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (c[i].view != c[j].view) continue;
      const auto& view = views.v[static_cast<std::size_t>(c[i].view)];
      const double ab = c[i].coef * c[j].coef;
      cross += ab * fit_covariance(c[i].rbc.fit, c[j].rbc.fit, view);
      cross_rbc += ab * fit_covariance(c[i].rbc.corrected, c[j].rbc.corrected, view);
    }
  }
  r.tau = tau;
  r.tau_rbc = tau_rbc;
  r.cov_term = -cross;
  r.cov_term_rbc = -cross_rbc;
  r.variance = std::max(diag + 2.0 * cross, 0.0);
  r.variance_rbc = std::max(diag_rbc + 2.0 * cross_rbc, 0.0);

  // Entries 2 and 3 (and each later pair) are mu0_low and mu0_high at low.
  for (std::size_t k = 2; k + 1 < n; k += 2)
    r.bias_derivatives.push_back(c[k].estimate() - c[k + 1].estimate());
  r.bias_low = r.bias_derivatives.front();

  const double z = stats::normal_critical(level);
  r.ci_conventional = centered(r.tau, r.se(), z);
  r.ci_rbc = centered(r.tau_rbc, r.se_rbc(), z);
  r.p_value_rbc = two_sided_p(r.tau_rbc, r.se_rbc());
  return r;
}

ExtrapolationResult extrapolate_impl(const PairViews& views, const CutoffPair& pair, double xbar,
                                     const FitSpec& spec, int s_max, double level) {
  check_xbar(pair, xbar);
  auto xs = xbar_components(views, pair, xbar, spec, level);
  auto lows = low_components(views, pair, xbar, spec, s_max, level);
  std::vector<Component> comps;
  comps.push_back(std::move(xs[0]));
  comps.push_back(std::move(xs[1]));
  for (auto& l : lows) comps.push_back(std::move(l));
  return assemble(views, pair, xbar, std::move(comps), s_max, level);
}

void check_views_nonempty(const PairViews& views, ErrorKind kind, const std::string& where) {
  static const char* names[] = {"treated low-cutoff", "control high-cutoff", "control low-cutoff"};
  for (std::size_t i = 0; i < views.v.size(); ++i)
    if (views.v[i].empty()) throw Error(kind, where + std::string(names[i]) + " cell is empty");
}

}  // namespace

double ExtrapolationResult::se() const { return std::sqrt(std::max(variance, 0.0)); }
double ExtrapolationResult::se_rbc() const { return std::sqrt(std::max(variance_rbc, 0.0)); }

RDEffect estimate_cutoff_effect(const Dataset& ds, double cutoff, const FitSpec& spec,
                                double level) {
  RowFilter f;
  f.cutoff = cutoff;
  const Dataset group = ds.subset(f);
  RDEffect e;
  e.cutoff = cutoff;
  e.right = fit_with_rbc(group, with_side(spec, Side::Right), cutoff, level,
                         "right of cutoff " + fmt(cutoff));
  e.left = fit_with_rbc(group, with_side(spec, Side::Left), cutoff, level,
                        "left of cutoff " + fmt(cutoff));
  e.tau = e.right.fit.estimate - e.left.fit.estimate;
  e.tau_rbc = e.right.rbc_estimate() - e.left.rbc_estimate();
  e.se_conventional = std::sqrt(e.right.fit.variance + e.left.fit.variance);
  e.se_rbc = std::sqrt(e.right.corrected.variance + e.left.corrected.variance);
  const double z = stats::normal_critical(level);
  e.ci_conventional = centered(e.tau, e.se_conventional, z);
  e.ci_rbc = centered(e.tau_rbc, e.se_rbc, z);
  e.p_value_rbc = two_sided_p(e.tau_rbc, e.se_rbc);
  e.h_left = e.left.fit.h_used;
  e.h_right = e.right.fit.h_used;
  e.n_eff_left = e.left.fit.n_eff;
  e.n_eff_right = e.right.fit.n_eff;
  return e;
}

RDEffect pooled_effect(const Dataset& ds, const FitSpec& spec, double level) {
  return estimate_cutoff_effect(ds.normalized(), 0.0, spec, level);
}

WeightedEffect weighted_average_effect(const std::vector<RDEffect>& effects, const Dataset& ds,
                                       double level) {
  if (effects.size() < 2)
    throw Error(ErrorKind::InvalidArgument, "weighted average needs at least two effects");
  WeightedEffect out;
  for (const auto& e : effects) {
    if (std::find(out.cutoffs.begin(), out.cutoffs.end(), e.cutoff) != out.cutoffs.end())
      throw Error(ErrorKind::InvalidArgument, "duplicate cutoff " + fmt(e.cutoff));
    out.cutoffs.push_back(e.cutoff);
  }

  // f(c | C=c) P(C=c) = sum_i K((x_i - c)/h) / (n h): the group size cancels.
  std::vector<double> raw;
  double total = 0.0;
  for (const auto& e : effects) {
    RowFilter f;
    f.cutoff = e.cutoff;
    const Dataset g = ds.subset(f);
    const double h = 0.5 * (e.h_left + e.h_right);
    if (!(h > 0.0)) throw Error(ErrorKind::NonpositiveBandwidth, "effect bandwidth is not positive");
    double k = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      k += kernel_weight(Kernel::Triangular, (g.x(i) - e.cutoff) / h);
    raw.push_back(k / h);
    total += k / h;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateWeights, "all cutoff densities are zero");

  double var = 0.0, var_rbc = 0.0;
  for (std::size_t j = 0; j < effects.size(); ++j) {
    const double w = raw[j] / total;
    out.weights.push_back(w);
    out.estimate += w * effects[j].tau;
    out.estimate_rbc += w * effects[j].tau_rbc;
    var += w * w * effects[j].se_conventional * effects[j].se_conventional;
    var_rbc += w * w * effects[j].se_rbc * effects[j].se_rbc;
  }
  out.se = std::sqrt(var);
  out.se_rbc = std::sqrt(var_rbc);
  out.ci_rbc = centered(out.estimate_rbc, out.se_rbc, stats::normal_critical(level));
  out.p_value_rbc = two_sided_p(out.estimate_rbc, out.se_rbc);
  return out;
}

ExtrapolationResult extrapolate_sharp(const Dataset& ds, const CutoffPair& pair, double xbar,
                                      const FitSpec& spec, double level) {
  check_xbar(pair, xbar);
  const auto views = make_views(ds, pair);
  check_views_nonempty(views, ErrorKind::InsufficientData, "");
  return extrapolate_impl(views, pair, xbar, spec, 0, level);
}

std::vector<GridPoint> extrapolation_grid(const Dataset& ds, const CutoffPair& pair,
                                          const std::vector<double>& points, const FitSpec& spec,
                                          double level) {
  std::vector<GridPoint> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i].xbar = points[i];

  std::vector<Component> lows;
  PairViews views;
  try {
    views = make_views(ds, pair);
    check_views_nonempty(views, ErrorKind::InsufficientData, "");
    lows = low_components(views, pair, 0.0, spec, 0, level);
  } catch (const Error& e) {
    for (auto& g : out) {
      g.error = e.kind();
      g.message = e.what();
    }
    return out;
  }

  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& g = out[static_cast<std::size_t>(i)];
    try {
      check_xbar(pair, g.xbar);
      auto xs = xbar_components(views, pair, g.xbar, spec, level);
      std::vector<Component> comps{std::move(xs[0]), std::move(xs[1])};
      comps.insert(comps.end(), lows.begin(), lows.end());
      g.result = assemble(views, pair, g.xbar, std::move(comps), 0, level);
    } catch (const Error& e) {
      g.error = e.kind();
      g.message = e.what();
    } catch (const std::exception& e) {
      g.error = ErrorKind::InvalidArgument;
      g.message = e.what();
    }
  }
  return out;
}

ExtrapolationResult extrapolate_fuzzy(const Dataset& ds, const CutoffPair& pair, double xbar,
                                      const FitSpec& spec, double level) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.x(i) < ds.c(i) && ds.d(i) != 0)
      throw Error(ErrorKind::ComplianceViolation,
                  "treated unit below its cutoff (row " + std::to_string(ds.row_id(i) + 1) + ")",
                  ds.row_id(i) + 1);
  auto r = extrapolate_sharp(ds, pair, xbar, spec, level);

  RowFilter f;
  f.cutoff = pair.low;
  f.above_cutoff = true;
  const Dataset treated = ds.subset(f);
  std::vector<double> dv(treated.size());
  for (std::size_t i = 0; i < treated.size(); ++i) dv[i] = treated.d(i);
  const Dataset dview = treated.with_outcomes(dv);

  FitSpec fs = spec;
  fs.p = 1;
  fs.deriv = 0;
  fs.side = xbar == pair.high ? Side::Left : Side::Both;
  FirstStage st;
  st.fit = fit_with_rbc(dview, fs, xbar, level, "first stage");
  st.estimate = st.fit.fit.estimate;
  st.se = st.fit.fit.se();
  st.estimate_rbc = st.fit.rbc_estimate();
  st.se_rbc = st.fit.rbc_se();
  if (st.estimate < 0.05)
    throw Error(ErrorKind::WeakFirstStage, "first stage " + fmt(st.estimate) + " below 0.05");

  st.itt = r.tau;
  st.itt_se = r.se();
  st.itt_rbc = r.tau_rbc;
  st.itt_se_rbc = r.se_rbc();

  // Delta method for a ratio, outcome and treatment fits taken as uncorrelated.
  const double F = st.estimate, Fr = st.estimate_rbc;
  r.tau = st.itt / F;
  r.variance = r.variance / (F * F) + st.itt * st.itt * st.fit.fit.variance / (F * F * F * F);
  r.tau_rbc = st.itt_rbc / Fr;
  r.variance_rbc = r.variance_rbc / (Fr * Fr) +
                   st.itt_rbc * st.itt_rbc * st.fit.corrected.variance / (Fr * Fr * Fr * Fr);
  const double z = stats::normal_critical(level);
  r.ci_conventional = centered(r.tau, r.se(), z);
  r.ci_rbc = centered(r.tau_rbc, r.se_rbc(), z);
  r.p_value_rbc = two_sided_p(r.tau_rbc, r.se_rbc());
  r.first_stage = std::move(st);
  return r;
}

ExtrapolationResult extrapolate_polybias(const Dataset& ds, const CutoffPair& pair, double xbar,
                                         const FitSpec& spec, int s_max, double level) {
  if (s_max < 0 || s_max > 2)
    throw Error(ErrorKind::UnsupportedOrder, "bias order must be 0, 1 or 2");
  check_xbar(pair, xbar);
  const auto views = make_views(ds, pair);
  check_views_nonempty(views, ErrorKind::InsufficientData, "");
  return extrapolate_impl(views, pair, xbar, spec, s_max, level);
}

CovAdjResult extrapolate_covadj(const Dataset& ds, const CutoffPair& pair, double xbar,
                                const FitSpec& spec, double level) {
  if (!ds.has_covariates())
    throw Error(ErrorKind::InvalidArgument, "covariate adjustment needs covariate columns");
  check_xbar(pair, xbar);

  std::vector<std::size_t> in_pair;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.c(i) == pair.low || ds.c(i) == pair.high) in_pair.push_back(i);
  const Dataset sample = ds.select(in_pair);
  std::vector<double> is_low(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) is_low[i] = sample.c(i) == pair.low ? 1.0 : 0.0;
  const Dataset membership = sample.with_outcomes(is_low);

  FitSpec ps;
  ps.p = 1;
  ps.kernel = spec.kernel;
  ps.side = Side::Both;
  CovAdjResult out;
  out.bandwidth = spec.h ? *spec.h : select_bandwidth_mse(membership, ps, xbar).h;
  ps.h = out.bandwidth;

  double ktotal = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i)
    ktotal += kernel_weight(spec.kernel, (sample.x(i) - xbar) / out.bandwidth);
  if (!(ktotal > 0.0))
    throw Error(ErrorKind::InsufficientData, "no observations near the evaluation point");

  const auto cells = sample.covariate_cells();
  double norm = 0.0;
  for (const auto& z : cells) {
    CellDetail cd;
    cd.cell = z;
    RowFilter cf;
    cf.cell = z;
    const Dataset cell = sample.subset(cf);
    const Dataset cell_full = ds.subset(cf);
    const auto views = make_views(cell_full, pair);
    check_views_nonempty(views, ErrorKind::EmptyCell, "cell " + z + ": ");

    const Dataset cm = membership.subset(cf);
    double kz = 0.0;
    for (std::size_t i = 0; i < cell.size(); ++i)
      kz += kernel_weight(spec.kernel, (cell.x(i) - xbar) / out.bandwidth);
    cd.frequency = kz / ktotal;
    try {
      cd.propensity = local_fit(cm, ps, xbar).estimate;
    } catch (const Error& e) {
      throw Error(ErrorKind::SupportViolation, "cell " + z + ": " + e.what());
    }
    if (!(cd.propensity >= 0.01 && cd.propensity <= 0.99))
      throw Error(ErrorKind::SupportViolation,
                  "cell " + z + ": propensity " + fmt(cd.propensity) + " outside [0.01, 0.99]");
    cd.result = extrapolate_impl(views, pair, xbar, spec, 0, level);
    cd.weight = cd.propensity * cd.frequency;
    norm += cd.weight;
    out.cells.push_back(std::move(cd));
  }

  ExtrapolationResult& a = out.aggregate;
  a.xbar = xbar;
  a.low = pair.low;
  a.high = pair.high;
  a.level = level;
  double bias = 0.0;
  for (auto& cd : out.cells) {
    cd.weight /= norm;
    const auto& r = cd.result;
    a.tau += cd.weight * r.tau;
    a.tau_rbc += cd.weight * r.tau_rbc;
    a.variance += cd.weight * cd.weight * r.variance;
    a.variance_rbc += cd.weight * cd.weight * r.variance_rbc;
    a.cov_term += cd.weight * cd.weight * r.cov_term;
    a.cov_term_rbc += cd.weight * cd.weight * r.cov_term_rbc;
    bias += cd.weight * r.bias_low;
  }
  a.bias_low = bias;
  a.bias_derivatives = {bias};
  if (out.cells.size() == 1) a.components = out.cells.front().result.components;
  const double z = stats::normal_critical(level);
  a.ci_conventional = centered(a.tau, a.se(), z);
  a.ci_rbc = centered(a.tau_rbc, a.se_rbc(), z);
  a.p_value_rbc = two_sided_p(a.tau_rbc, a.se_rbc());
  return out;
}

}  // namespace rdx
