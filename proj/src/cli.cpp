#include "rdx/cli.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rdx/errors.hpp"
#include "rdx/extrapolation.hpp"
#include "rdx/falsification.hpp"
#include "rdx/fixedeffects.hpp"
#include "rdx/localrand.hpp"
#include "rdx/rdplot.hpp"
#include "rdx/simulate.hpp"

namespace rdx::cli {

namespace {

using nlohmann::ordered_json;
using json = ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data;
  std::string col_y = "y", col_x = "x", col_c = "c", col_d = "d";
  std::vector<std::string> col_z;
  std::optional<double> low, high, at, cutoff;
  std::string grid;
  std::string kernel = "triangular";
  int order = 1;
  std::string bandwidth = "auto";
  double level = 0.95;
  bool fuzzy = false;
  std::optional<int> polybias_order;
  bool covadj = false;
  std::vector<std::size_t> k{40};
  std::string adjustment = "constant";
  double eta = 0.01;
  std::size_t perms = 2000;
  std::size_t bb_grid = 100;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::size_t> n;
  std::string config;
  std::string estimator = "extrapolate_sharp";
  int trend_order = 2;
  bool joint = false;
  bool separate_slopes = false;
  int bins = 20;
  std::string out;
  std::string format = "json";
};

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct Report {
  json doc;
  std::vector<Table> tables;
};

// ---- formatting ----

std::string f3(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string ci3(const Interval& ci) { return "[" + f3(ci.lo) + ", " + f3(ci.hi) + "]"; }

std::string count(std::size_t v) { return std::to_string(v); }

json interval(const Interval& ci) { return json::array({ci.lo, ci.hi}); }

void print_table(std::ostream& os, const Table& t) {
  std::vector<std::size_t> w(t.header.size(), 0);
  for (std::size_t j = 0; j < t.header.size(); ++j) w[j] = t.header[j].size();
  for (const auto& r : t.rows)
    for (std::size_t j = 0; j < r.size() && j < w.size(); ++j) w[j] = std::max(w[j], r[j].size());
  if (!t.title.empty()) os << t.title << '\n';
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::string cell = j < r.size() ? r[j] : "";
      if (j == 0)
        os << cell << std::string(w[j] - cell.size(), ' ');
      else
        os << "  " << std::string(w[j] - cell.size(), ' ') << cell;
    }
    os << '\n';
  };
  line(t.header);
  std::size_t total = 0;
  for (auto v : w) total += v + 2;
  os << std::string(total - 2, '-') << '\n';
  for (const auto& r : t.rows) line(r);
}

// ---- option decoding ----

Kernel parse_kernel(const std::string& s) {
  if (s == "uniform") return Kernel::Uniform;
  if (s == "epanechnikov") return Kernel::Epanechnikov;
  return Kernel::Triangular;
}

FitSpec fit_spec(const Options& o) {
  FitSpec spec;
  spec.p = o.order;
  spec.kernel = parse_kernel(o.kernel);
  if (o.bandwidth != "auto") {
    double h = 0.0;
    std::size_t used = 0;
    try {
      h = std::stod(o.bandwidth, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != o.bandwidth.size() || !(h > 0.0))
      throw UsageError("--bandwidth must be 'auto' or a positive number");
    spec.h = h;
  }
  return spec;
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  double a = 0, b = 0;
  long n = 0;
  try {
    if (parts.size() != 3) throw std::invalid_argument("parts");
    std::size_t ua = 0, ub = 0, un = 0;
    a = std::stod(parts[0], &ua);
    b = std::stod(parts[1], &ub);
    n = std::stol(parts[2], &un);
    if (ua != parts[0].size() || ub != parts[1].size() || un != parts[2].size())
      throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw UsageError("--grid expects a:b:n");
  }
  if (n < 1 || (n == 1 && a != b) || !(a <= b)) throw UsageError("--grid expects a <= b and n >= 1");
  std::vector<double> g;
  for (long i = 0; i < n; ++i)
    g.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return g;
}

Dataset load(const Options& o, Design design) {
  if (o.data.empty()) throw UsageError("--data is required");
  ColumnMap cols;
  cols.y = o.col_y;
  cols.x = o.col_x;
  cols.c = o.col_c;
  cols.d = o.col_d;
  cols.z = o.col_z;
  return load_dataset(o.data, cols, design);
}

CutoffPair pair_of(const Options& o, const Dataset& ds) {
  if (!o.low || !o.high) throw UsageError("--cutoff-low and --cutoff-high are required");
  return make_pair(ds, *o.low, *o.high);
}

// ---- result serialization ----

json component_json(const Component& c) {
  const auto& f = c.rbc.fit;
  return {{"label", c.label},
          {"coef", c.coef},
          {"x0", c.x0},
          {"view", c.view},
          {"estimate", c.estimate()},
          {"se", std::sqrt(std::max(0.0, c.variance()))},
          {"estimate_rbc", c.rbc.rbc_estimate()},
          {"se_rbc", c.rbc.rbc_se()},
          {"ci_rbc", interval(c.rbc.ci_rbc)},
          {"p_value_rbc", c.rbc.p_value_rbc},
          {"order", f.p},
          {"deriv", f.deriv},
          {"side", to_string(f.side)},
          {"bandwidth", f.h_used},
          {"bandwidth_auto", f.h_auto},
          {"eff_n", f.n_eff}};
}

json extrapolation_json(const ExtrapolationResult& r) {
  json j = {{"xbar", r.xbar},
            {"tau", r.tau},
            {"se", r.se()},
            {"ci_conventional", interval(r.ci_conventional)},
            {"tau_rbc", r.tau_rbc},
            {"se_rbc", r.se_rbc()},
            {"ci_rbc", interval(r.ci_rbc)},
            {"p_value_rbc", r.p_value_rbc},
            {"level", r.level},
            {"bias_low", r.bias_low},
            {"bias_derivatives", r.bias_derivatives},
            {"order_bias", r.order_bias},
            {"variance", r.variance},
            {"cov_term", r.cov_term},
            {"variance_rbc", r.variance_rbc},
            {"cov_term_rbc", r.cov_term_rbc}};
  json comps = json::array();
  for (const auto& c : r.components) comps.push_back(component_json(c));
  j["components"] = comps;
  if (r.first_stage) {
    const auto& f = *r.first_stage;
    j["first_stage"] = {{"estimate", f.estimate},   {"se", f.se},
                        {"estimate_rbc", f.estimate_rbc}, {"se_rbc", f.se_rbc},
                        {"itt", f.itt},             {"itt_se", f.itt_se},
                        {"itt_rbc", f.itt_rbc},     {"itt_se_rbc", f.itt_se_rbc},
                        {"bandwidth", f.fit.fit.h_used}, {"eff_n", f.fit.fit.n_eff}};
  }
  return j;
}

void extrapolation_rows(Table& t, const ExtrapolationResult& r) {
  t.rows.push_back({"tau(" + f3(r.xbar) + ")", f3(r.tau), ci3(r.ci_rbc), f3(r.p_value_rbc), "", ""});
  t.rows.push_back({"bias(low)", f3(r.bias_low), "", "", "", ""});
  for (const auto& c : r.components)
    t.rows.push_back({c.label, f3(c.estimate()), ci3(c.rbc.ci_rbc), f3(c.rbc.p_value_rbc),
                      count(c.rbc.fit.n_eff), f3(c.rbc.fit.h_used)});
}

Table estimate_table(const std::string& title) {
  return {title, {"", "Estimate", "RBC CI", "RBC p-value", "Eff. N", "Bw"}, {}};
}

json effect_json(const RDEffect& e) {
  return {{"cutoff", e.cutoff},
          {"tau", e.tau},
          {"se", e.se_conventional},
          {"ci_conventional", interval(e.ci_conventional)},
          {"tau_rbc", e.tau_rbc},
          {"se_rbc", e.se_rbc},
          {"ci_rbc", interval(e.ci_rbc)},
          {"p_value_rbc", e.p_value_rbc},
          {"bandwidth_left", e.h_left},
          {"bandwidth_right", e.h_right},
          {"eff_n_left", e.n_eff_left},
          {"eff_n_right", e.n_eff_right}};
}

std::vector<std::string> effect_row(const std::string& label, const RDEffect& e) {
  return {label, f3(e.tau), ci3(e.ci_rbc), f3(e.p_value_rbc),
          count(e.n_eff_left) + " | " + count(e.n_eff_right),
          f3(e.h_left) + " | " + f3(e.h_right)};
}

json lr_json(const LRResult& r) {
  return {{"k", r.k},
          {"adjustment", to_string(r.adjustment)},
          {"delta_hat", r.delta_hat},
          {"tau_hat", r.tau_hat},
          {"V1", r.V1},
          {"V_delta", r.V_delta},
          {"t_stat", r.t_stat},
          {"p_neyman", r.p_neyman},
          {"p_fisher_bb", r.p_fisher_bb},
          {"eta", r.eta},
          {"permutations", r.permutations},
          {"exhaustive", r.exhaustive},
          {"grid_size", r.grid_size},
          {"counts",
           {{"low_at_low", r.counts.low_at_low},
            {"high_at_low", r.counts.high_at_low},
            {"low_at_xbar", r.counts.low_at_xbar},
            {"high_at_xbar", r.counts.high_at_xbar}}},
          {"half_width_low", r.window_low.half_width},
          {"half_width_xbar", r.window_xbar.half_width}};
}

json rdplot_side_json(const PlotSide& s) {
  json bins = json::array();
  for (const auto& b : s.bins)
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"center", b.center}, {"mean", b.mean}, {"count", b.count}});
  return {{"n", s.n}, {"fit", s.fit}, {"bins", bins}};
}

// ---- commands ----

Report cmd_effect(const Options& o) {
  const auto ds = load(o, Design::Sharp);
  const auto spec = fit_spec(o);
  Report rep;
  auto t = estimate_table("RD effects");
  json per = json::array();
  std::vector<RDEffect> ok;
  for (double c : ds.cutoffs()) {
    try {
      auto e = estimate_cutoff_effect(ds, c, spec, o.level);
      per.push_back(effect_json(e));
      t.rows.push_back(effect_row("cutoff " + f3(c), e));
      ok.push_back(std::move(e));
    } catch (const Error& err) {
      per.push_back({{"cutoff", c}, {"error", to_string(err.kind())}, {"message", err.what()}});
      t.rows.push_back({"cutoff " + f3(c), to_string(err.kind()), "", "", "", ""});
    }
  }
  const auto pooled = pooled_effect(ds, spec, o.level);
  t.rows.push_back(effect_row("pooled", pooled));
  rep.doc = {{"command", "effect"}, {"level", o.level}, {"cutoff_effects", per}, {"pooled", effect_json(pooled)}};
  if (ok.size() >= 2) {
    const auto w = weighted_average_effect(ok, ds, o.level);
    rep.doc["weighted"] = {{"cutoffs", w.cutoffs},       {"weights", w.weights},
                           {"estimate", w.estimate},     {"se", w.se},
                           {"estimate_rbc", w.estimate_rbc}, {"se_rbc", w.se_rbc},
                           {"ci_rbc", interval(w.ci_rbc)}, {"p_value_rbc", w.p_value_rbc}};
    t.rows.push_back({"weighted", f3(w.estimate), ci3(w.ci_rbc), f3(w.p_value_rbc), "", ""});
  }
  rep.tables.push_back(std::move(t));
  return rep;
}

Report cmd_extrapolate(const Options& o) {
  const int methods = (o.fuzzy ? 1 : 0) + (o.polybias_order ? 1 : 0) + (o.covadj ? 1 : 0);
  if (methods > 1) throw UsageError("--fuzzy, --polybias-order and --covadj are exclusive");
  if (o.at.has_value() == !o.grid.empty()) throw UsageError("give exactly one of --at and --grid");
  const auto ds = load(o, o.fuzzy ? Design::Fuzzy : Design::Sharp);
  const auto pair = pair_of(o, ds);
  const auto spec = fit_spec(o);
  const std::string method = o.fuzzy ? "fuzzy" : o.polybias_order ? "polybias" : o.covadj ? "covadj" : "sharp";

  Report rep;
  rep.doc = {{"command", "extrapolate"}, {"method", method}, {"cutoff_low", pair.low},
             {"cutoff_high", pair.high}, {"level", o.level}};
  auto t = estimate_table("Extrapolated effect (" + method + ")");

  auto one = [&](double xbar) -> json {
    if (o.fuzzy) {
      const auto r = extrapolate_fuzzy(ds, pair, xbar, spec, o.level);
      extrapolation_rows(t, r);
      return extrapolation_json(r);
    }
    if (o.polybias_order) {
      const auto r = extrapolate_polybias(ds, pair, xbar, spec, *o.polybias_order, o.level);
      extrapolation_rows(t, r);
      return extrapolation_json(r);
    }
    if (o.covadj) {
      const auto r = extrapolate_covadj(ds, pair, xbar, spec, o.level);
      extrapolation_rows(t, r.aggregate);
      json j = extrapolation_json(r.aggregate);
      j["propensity_bandwidth"] = r.bandwidth;
      json cells = json::array();
      for (const auto& c : r.cells)
        cells.push_back({{"cell", c.cell},
                         {"weight", c.weight},
                         {"propensity", c.propensity},
                         {"frequency", c.frequency},
                         {"result", extrapolation_json(c.result)}});
      j["cells"] = cells;
      return j;
    }
    const auto r = extrapolate_sharp(ds, pair, xbar, spec, o.level);
    extrapolation_rows(t, r);
    return extrapolation_json(r);
  };

  if (o.at) {
    rep.doc["result"] = one(*o.at);
  } else {
    const auto grid = parse_grid(o.grid);
    json pts = json::array();
    if (method == "sharp") {
      for (const auto& p : extrapolation_grid(ds, pair, grid, spec, o.level)) {
        if (p.result) {
          pts.push_back(extrapolation_json(*p.result));
          extrapolation_rows(t, *p.result);
        } else {
          pts.push_back({{"xbar", p.xbar}, {"error", to_string(*p.error)}, {"message", p.message}});
          t.rows.push_back({"tau(" + f3(p.xbar) + ")", to_string(*p.error), "", "", "", ""});
        }
      }
    } else {
      for (double x : grid) {
        try {
          pts.push_back(one(x));
        } catch (const Error& e) {
          if (is_data_error(e.kind())) throw;
          pts.push_back({{"xbar", x}, {"error", to_string(e.kind())}, {"message", e.what()}});
          t.rows.push_back({"tau(" + f3(x) + ")", to_string(e.kind()), "", "", "", ""});
        }
      }
    }
    rep.doc["grid"] = pts;
  }
  rep.tables.push_back(std::move(t));
  return rep;
}

Report cmd_falsify(const Options& o) {
  const auto ds = load(o, Design::Sharp);
  const auto pair = pair_of(o, ds);
  FitSpec spec = fit_spec(o);
  const auto g = global_parallel_test(ds, pair, o.trend_order, o.joint);
  const auto d = local_derivative_test(ds, pair, o.grid.empty() ? std::vector<double>{} : parse_grid(o.grid),
                                       o.level, spec);
  Report rep;
  json pts = json::array();
  Table dt{"Local derivative comparison below the low cutoff",
           {"x", "Difference", "RBC CI", "Reject", "Eff. N", "Bw"},
           {}};
  for (const auto& p : d.points) {
    if (!p.ok) {
      pts.push_back({{"x", p.x}, {"error", p.error ? to_string(*p.error) : "unknown"}, {"message", p.message}});
      dt.rows.push_back({f3(p.x), p.error ? to_string(*p.error) : "failed", "", "", "", ""});
      continue;
    }
    pts.push_back({{"x", p.x},
                   {"diff", p.diff},
                   {"diff_rbc", p.diff_rbc},
                   {"se_rbc", p.se_rbc},
                   {"ci_rbc", interval(p.ci_rbc)},
                   {"reject", p.reject},
                   {"bandwidth_low", p.h_low},
                   {"bandwidth_high", p.h_high},
                   {"eff_n_low", p.n_eff_low},
                   {"eff_n_high", p.n_eff_high}});
    dt.rows.push_back({f3(p.x), f3(p.diff), ci3(p.ci_rbc), p.reject ? "yes" : "no",
                       count(p.n_eff_low) + " | " + count(p.n_eff_high),
                       f3(p.h_low) + " | " + f3(p.h_high)});
  }
  rep.doc = {{"command", "falsify"},
             {"cutoff_low", pair.low},
             {"cutoff_high", pair.high},
             {"global",
              {{"order", g.order},
               {"joint", g.joint},
               {"alpha", g.alpha},
               {"beta", g.beta},
               {"gamma", g.gamma},
               {"delta", g.delta},
               {"x_mean", g.x_mean},
               {"x_sd", g.x_sd},
               {"f_stat", g.f_stat},
               {"df_num", g.df_num},
               {"df_den", g.df_den},
               {"p_value", g.p_value},
               {"n_used", g.n_used}}},
             {"derivative",
              {{"level", d.level}, {"sup_stat", d.sup_stat}, {"any_reject", d.any_reject}, {"points", pts}}}};
  rep.tables.push_back({"Global polynomial comparison below the low cutoff",
                        {"Order", "Joint", "F", "df", "p-value", "N"},
                        {{std::to_string(g.order), g.joint ? "yes" : "no", f3(g.f_stat),
                          std::to_string(g.df_num) + ", " + std::to_string(g.df_den), f3(g.p_value),
                          count(g.n_used)}}});
  rep.tables.push_back(std::move(dt));
  return rep;
}

Report cmd_fe(const Options& o) {
  const auto ds = load(o, Design::Sharp);
  const auto fit = fit_fe_model(ds, !o.separate_slopes, true);
  Report rep;
  json coefs = json::array();
  Table t{"Fixed-effects model", {"Term", "Estimate", "SE"}, {}};
  for (Eigen::Index i = 0; i < fit.coef.size(); ++i) {
    const double se = std::sqrt(std::max(0.0, fit.vcov(i, i)));
    const auto& label = fit.labels[static_cast<std::size_t>(i)];
    coefs.push_back({{"term", label}, {"estimate", fit.coef(i)}, {"se", se}});
    t.rows.push_back({label, f3(fit.coef(i)), f3(se)});
  }
  rep.doc = {{"command", "fe"},
             {"common_slope", fit.common_slope},
             {"centered", fit.centered},
             {"n", fit.n},
             {"ssr", fit.ssr},
             {"coefficients", coefs}};
  if (o.at) {
    json eff = json::array();
    for (std::size_t j = 0; j < fit.cutoffs.size(); ++j) {
      const auto e = fe_effect_at(fit, j, *o.at);
      eff.push_back({{"cutoff", fit.cutoffs[j]}, {"xbar", *o.at}, {"estimate", e.estimate}, {"se", e.se}});
      t.rows.push_back({"effect[" + f3(fit.cutoffs[j]) + "] at " + f3(*o.at), f3(e.estimate), f3(e.se)});
    }
    rep.doc["effects"] = eff;
  }
  rep.tables.push_back(std::move(t));
  if (fit.cutoffs.size() >= 2) {
    const auto s = slope_equality_test(ds);
    rep.doc["slope_test"] = {{"f_stat", s.f_stat}, {"df_num", s.df_num}, {"df_den", s.df_den}, {"p_value", s.p_value}};
    rep.tables.push_back({"Equal control slopes", {"F", "df", "p-value"},
                          {{f3(s.f_stat), std::to_string(s.df_num) + ", " + std::to_string(s.df_den), f3(s.p_value)}}});
  }
  return rep;
}

Report cmd_lr(const Options& o) {
  if (!o.at) throw UsageError("--at is required");
  const auto ds = load(o, Design::Sharp);
  const auto pair = pair_of(o, ds);
  const auto adj = o.adjustment == "linear" ? Adjustment::Linear : Adjustment::Constant;
  const auto rows = lr_sensitivity(ds, pair, *o.at, o.k, adj, o.eta, o.perms, o.bb_grid, o.seed.value_or(1));
  Report rep;
  json out = json::array();
  Table t{"Local randomization at " + f3(*o.at),
          {"k", "Delta", "tau", "Neyman p", "Fisher p*", "Eff. N", "Window"},
          {}};
  for (const auto& r : rows) {
    if (!r.result) {
      out.push_back({{"k", r.k}, {"error", to_string(*r.error)}, {"message", r.message}});
      t.rows.push_back({count(r.k), to_string(*r.error), "", "", "", "", ""});
      continue;
    }
    const auto& v = *r.result;
    out.push_back(lr_json(v));
    const auto n = v.counts.low_at_low + v.counts.high_at_low + v.counts.low_at_xbar + v.counts.high_at_xbar;
    t.rows.push_back({count(r.k), f3(v.delta_hat), f3(v.tau_hat), f3(v.p_neyman), f3(v.p_fisher_bb),
                      count(n), f3(v.window_low.half_width) + " | " + f3(v.window_xbar.half_width)});
  }
  rep.doc = {{"command", "lr"},        {"cutoff_low", pair.low}, {"cutoff_high", pair.high},
             {"xbar", *o.at},          {"eta", o.eta},           {"permutations", o.perms},
             {"seed", o.seed.value_or(1)}, {"rows", out}};
  rep.tables.push_back(std::move(t));
  return rep;
}

Report cmd_simulate(const Options& o) {
  SimulationConfig cfg = o.config.empty() ? SimulationConfig{} : load_simulation_config(o.config);
  if (o.reps) cfg.reps = *o.reps;
  if (o.n) cfg.N = *o.n;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  EstimatorSpec est;
  est.name = o.estimator;
  est.fit = fit_spec(o);
  est.level = o.level;
  if (o.polybias_order) {
    est.name = "extrapolate_polybias";
    est.s_max = *o.polybias_order;
  }
  const auto s = run_monte_carlo(cfg, est);
  Report rep;
  json comps = json::array();
  Table t{"Simulation (" + std::to_string(s.reps_completed) + " of " + std::to_string(s.reps) + " replications)",
          {"Mean", "Bias", "SD", "RMSE", "RBC coverage", "Failed"},
          {{f3(s.mean_tau_hat), f3(s.bias), f3(s.sd), f3(s.rmse), f3(s.coverage_rbc), count(s.failed)}}};
  Table ct{"Components", {"", "Mean Eff. N", "Mean Bw"}, {}};
  for (std::size_t i = 0; i < s.components.size(); ++i) {
    comps.push_back({{"label", s.components[i]}, {"mean_bandwidth", s.mean_bandwidths[i]}, {"mean_eff_n", s.mean_eff_n[i]}});
    ct.rows.push_back({s.components[i], f3(s.mean_eff_n[i]), f3(s.mean_bandwidths[i])});
  }
  rep.doc = {{"command", "simulate"},
             {"config",
              {{"gamma", cfg.gamma},
               {"Delta", cfg.Delta},
               {"tau", cfg.tau},
               {"sigma", cfg.sigma},
               {"N", cfg.N},
               {"N_ell", cfg.n_ell()},
               {"ell", cfg.ell},
               {"H", cfg.H},
               {"xbar", cfg.xbar},
               {"reps", cfg.reps},
               {"seed", cfg.seed},
               {"complier_share", cfg.complier_share}}},
             {"estimator", s.estimator},
             {"target", s.target},
             {"reps", s.reps},
             {"reps_completed", s.reps_completed},
             {"failed", s.failed},
             {"mean_tau_hat", s.mean_tau_hat},
             {"bias", s.bias},
             {"sd", s.sd},
             {"rmse", s.rmse},
             {"coverage_rbc", s.coverage_rbc},
             {"mean_se_rbc", s.mean_se_rbc},
             {"components", comps}};
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(ct));
  return rep;
}

Report cmd_rdplot(const Options& o) {
  const auto ds = load(o, Design::Sharp);
  const auto p = rdplot_bins(ds, o.cutoff, o.bins, o.order);
  Report rep;
  rep.doc = {{"command", "rdplot"},
             {"cutoff", p.cutoff ? json(*p.cutoff) : json(nullptr)},
             {"normalized", p.normalized},
             {"order", p.order},
             {"left", rdplot_side_json(p.left)},
             {"right", rdplot_side_json(p.right)}};
  for (const auto* side : {&p.left, &p.right}) {
    Table t{side == &p.left ? "Left of cutoff" : "Right of cutoff", {"Center", "Mean", "Count"}, {}};
    for (const auto& b : side->bins) t.rows.push_back({f3(b.center), f3(b.mean), count(b.count)});
    rep.tables.push_back(std::move(t));
  }
  return rep;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("RDX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Regression discontinuity extrapolation in multi-cutoff designs", "rdx"};
  app.require_subcommand(1);

  auto data_opts = [&](CLI::App* s) {
    s->add_option("--data", o.data, "CSV input file")->required();
    s->add_option("--y", o.col_y, "outcome column");
    s->add_option("--x", o.col_x, "score column");
    s->add_option("--c", o.col_c, "cutoff column");
    s->add_option("--d", o.col_d, "treatment column");
    s->add_option("--z", o.col_z, "covariate columns")->delimiter(',');
  };
  auto fit_opts = [&](CLI::App* s) {
    s->add_option("--kernel", o.kernel)->check(CLI::IsMember({"triangular", "uniform", "epanechnikov"}));
    s->add_option("--order", o.order, "local polynomial order")->check(CLI::Range(0, 4));
    s->add_option("--bandwidth", o.bandwidth, "auto or a positive value");
    s->add_option("--level", o.level, "confidence level")->check(CLI::Range(0.5, 0.999999));
  };
  auto pair_opts = [&](CLI::App* s) {
    s->add_option("--cutoff-low,--low", o.low, "low cutoff");
    s->add_option("--cutoff-high,--high", o.high, "high cutoff");
  };
  auto out_opts = [&](CLI::App* s) {
    s->add_option("--out", o.out, "output file");
    s->add_option("--format", o.format)->check(CLI::IsMember({"json", "table"}));
  };

  auto* effect = app.add_subcommand("effect", "cutoff-specific, pooled and weighted effects");
  data_opts(effect);
  fit_opts(effect);
  out_opts(effect);

  auto* extrap = app.add_subcommand("extrapolate", "effect away from the low cutoff");
  data_opts(extrap);
  fit_opts(extrap);
  pair_opts(extrap);
  out_opts(extrap);
  extrap->add_option("--at", o.at, "evaluation point");
  extrap->add_option("--grid", o.grid, "evaluation grid a:b:n");
  extrap->add_flag("--fuzzy", o.fuzzy, "fuzzy design");
  extrap->add_option("--polybias-order", o.polybias_order)->check(CLI::IsMember({0, 1, 2}));
  extrap->add_flag("--covadj", o.covadj, "discrete covariate adjustment");

  auto* falsify = app.add_subcommand("falsify", "compare control functions below the low cutoff");
  data_opts(falsify);
  fit_opts(falsify);
  pair_opts(falsify);
  out_opts(falsify);
  falsify->add_option("--trend-order", o.trend_order, "global polynomial order")->check(CLI::Range(1, 6));
  falsify->add_flag("--joint", o.joint, "also restrict the intercept shift");
  falsify->add_option("--grid", o.grid, "derivative test points a:b:n");

  auto* fe = app.add_subcommand("fe", "fixed-effects model and slope equality test");
  data_opts(fe);
  out_opts(fe);
  fe->add_flag("--separate-slopes", o.separate_slopes, "cutoff-specific control slopes");
  fe->add_option("--at", o.at, "report effects at this score");

  auto* lr = app.add_subcommand("lr", "local randomization inference");
  data_opts(lr);
  pair_opts(lr);
  out_opts(lr);
  lr->add_option("--at", o.at, "evaluation point");
  lr->add_option("--k", o.k, "window sizes")->delimiter(',');
  lr->add_option("--adjustment", o.adjustment)->check(CLI::IsMember({"constant", "linear"}));
  lr->add_option("--eta", o.eta);
  lr->add_option("--perms", o.perms);
  lr->add_option("--bb-grid", o.bb_grid, "grid points for the shift");
  lr->add_option("--seed", o.seed);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study");
  fit_opts(sim);
  out_opts(sim);
  sim->add_option("--config", o.config, "JSON or key=value configuration");
  sim->add_option("--reps", o.reps);
  sim->add_option("--n", o.n, "sample size");
  sim->add_option("--seed", o.seed);
  sim->add_option("--estimator", o.estimator);
  sim->add_option("--polybias-order", o.polybias_order)->check(CLI::IsMember({0, 1, 2}));

  auto* plot = app.add_subcommand("rdplot", "binned means and global polynomial fits");
  data_opts(plot);
  out_opts(plot);
  plot->add_option("--cutoff", o.cutoff, "cutoff (pooled when omitted)");
  plot->add_option("--bins", o.bins, "bins per side");
  plot->add_option("--order", o.order, "global fit order")->check(CLI::IsMember({1, 2}));

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return Ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return Ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return Usage;
  }

  apply_thread_cap();
  try {
    Report rep;
    if (*effect) {
      rep = cmd_effect(o);
    } else if (*extrap) {
      rep = cmd_extrapolate(o);
    } else if (*falsify) {
      rep = cmd_falsify(o);
    } else if (*fe) {
      rep = cmd_fe(o);
    } else if (*lr) {
      rep = cmd_lr(o);
    } else if (*sim) {
      rep = cmd_simulate(o);
    } else {
      rep = cmd_rdplot(o);
    }

    std::ostringstream text;
    if (o.format == "table") {
      for (std::size_t i = 0; i < rep.tables.size(); ++i) {
        if (i) text << '\n';
        print_table(text, rep.tables[i]);
      }
    } else {
      text << rep.doc.dump(2) << '\n';
    }
    if (o.out.empty()) {
      out << text.str();
    } else {
      std::ofstream f(o.out, std::ios::binary);
      if (!f) {
        err << "error: cannot write '" << o.out << "'\n";
        return DataError;
      }
      f << text.str();
    }
    return Ok;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return Usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_data_error(e.kind()) ? DataError : EstimationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return EstimationError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rdx::cli
