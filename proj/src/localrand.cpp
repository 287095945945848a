#include "rdx/localrand.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rdx/rng.hpp"
#include "rdx/stats.hpp"

namespace rdx {

const char* to_string(Adjustment a) { return a == Adjustment::Linear ? "linear" : "constant"; }

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Cell summary at `center`: mean (constant) or intercept of y on x - center
// (linear), with its sampling variance.
struct CellFit {
  double value = 0.0;
  double variance = 0.0;
};

struct Sums {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  void add(double x, double y) {
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
};

double intercept(const Sums& s, Adjustment adj) {
  const double my = s.sy / s.n;
  if (adj == Adjustment::Constant) return my;
  const double mx = s.sx / s.n;
  const double cxx = s.sxx - s.n * mx * mx;
  if (!(cxx > 1e-12 * std::max(1.0, s.sxx))) return my;
  const double b = (s.sxy - s.n * mx * my) / cxx;
  return my - b * mx;
}

CellFit cell_fit(const std::vector<double>& x, const std::vector<double>& y, double center,
                 Adjustment adj) {
  const std::size_t n = y.size();
  CellFit f;
  double my = 0.0;
  for (double v : y) my += v;
  my /= static_cast<double>(n);
  if (adj == Adjustment::Constant || n < 3) {
    f.value = my;
    if (n > 1) {
      double ss = 0.0;
      for (double v : y) ss += (v - my) * (v - my);
      f.variance = ss / static_cast<double>(n - 1) / static_cast<double>(n);
    }
    return f;
  }
  double mx = 0.0;
  for (double v : x) mx += v - center;
  mx /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - center - mx) * (x[i] - center - mx);
    sxy += (x[i] - center - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return cell_fit(x, y, center, Adjustment::Constant);
  const double b = sxy / sxx;
  f.value = my - b * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - f.value - b * (x[i] - center);
    ssr += e * e;
  }
  f.variance = ssr / static_cast<double>(n - 2) * (1.0 / static_cast<double>(n) + mx * mx / sxx);
  return f;
}

struct PairWindows {
  LRWindow at_low;
  LRWindow at_xbar;
  std::vector<std::size_t> low_pos;   // ds positions of the window at low
  std::vector<std::size_t> xbar_pos;  // ds positions of the window at xbar
};

PairWindows pair_windows(const Dataset& ds, const CutoffPair& pair, double xbar, std::size_t k) {
  if (!(pair.low < xbar && xbar <= pair.high))
    throw Error(ErrorKind::XbarOutOfRange, "evaluation point " + fmt(xbar) + " outside (" +
                                               fmt(pair.low) + ", " + fmt(pair.high) + "]");
  std::vector<std::size_t> near_low, near_xbar;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double c = ds.c(i), x = ds.x(i);
    if (c == pair.low) {
      (x < pair.low ? near_low : near_xbar).push_back(i);
    } else if (c == pair.high) {
      near_low.push_back(i);
      if (x < pair.high) near_xbar.push_back(i);
    }
  }
  PairWindows w;
  const Dataset vl = ds.select(near_low);
  const Dataset vx = ds.select(near_xbar);
  w.at_low = build_window(vl, pair.low, k);
  w.at_xbar = build_window(vx, xbar, k);
  for (auto& m : w.at_low.members) m = near_low[m];
  for (auto& m : w.at_xbar.members) m = near_xbar[m];
  if (!(pair.low + w.at_low.half_width < xbar - w.at_xbar.half_width))
    throw Error(ErrorKind::OverlappingWindows,
                "windows around " + fmt(pair.low) + " and " + fmt(xbar) + " overlap");
  w.low_pos = w.at_low.members;
  w.xbar_pos = w.at_xbar.members;
  return w;
}

struct Split {
  std::vector<double> xl, yl, xh, yh;
};

Split split(const Dataset& ds, const std::vector<std::size_t>& pos, double low) {
  Split s;
  for (auto p : pos) {
    if (ds.c(p) == low) {
      s.xl.push_back(ds.x(p));
      s.yl.push_back(ds.y(p));
    } else {
      s.xh.push_back(ds.x(p));
      s.yh.push_back(ds.y(p));
    }
  }
  return s;
}

double statistic(const PermutationProblem& p, const std::vector<char>& labels, double delta) {
  Sums lo, hi;
  for (std::size_t i = 0; i < p.y.size(); ++i) {
    // Adjusted outcomes follow the observed labels; only the split is permuted.
    const double ya = p.y[i] + (p.is_low[i] ? 0.0 : delta);
    (labels[i] ? lo : hi).add(p.x[i] - p.center, ya);
  }
  return std::abs(intercept(lo, p.adjustment) - intercept(hi, p.adjustment));
}

double tie_tolerance(const PermutationProblem& p, double delta) {
  double scale = std::abs(delta);
  for (double v : p.y) scale = std::max(scale, std::abs(v));
  return 1e-12 * (1.0 + scale);
}

RandomizationResult randomization_impl(const PermutationProblem& prob, double delta,
                                       std::size_t draws, std::uint64_t seed, bool parallel) {
  const std::size_t n = prob.y.size();
  const auto n_low = static_cast<std::size_t>(std::count(prob.is_low.begin(), prob.is_low.end(), 1));
  if (n_low == 0 || n_low == n)
    throw Error(ErrorKind::EmptyCell, "window needs units from both cutoff groups");
  if (draws == 0) throw Error(ErrorKind::InvalidArgument, "need at least one permutation");

  RandomizationResult r;
  r.statistic = statistic(prob, prob.is_low, delta);
  const double tol = tie_tolerance(prob, delta);
  const double t_obs = r.statistic - tol;

  const std::uint64_t total = relabeling_count(n, n_low, draws);
  if (total <= draws) {
    // Every relabeling with the observed group sizes, identity included.
    std::vector<char> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_low), 1);
    std::size_t hits = 0, count = 0;
    do {
      ++count;
      if (statistic(prob, labels, delta) >= t_obs) ++hits;
    } while (std::prev_permutation(labels.begin(), labels.end()));
    r.exhaustive = true;
    r.draws = count;
    r.p_value = static_cast<double>(hits) / static_cast<double>(count);
    return r;
  }

  long long hits = 0;
  const auto m_total = static_cast<long long>(draws);
#pragma omp parallel for reduction(+ : hits) schedule(static) if (parallel)
  for (long long m = 0; m < m_total; ++m) {
    std::vector<char> labels = prob.is_low;
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(m)));
    std::shuffle(labels.begin(), labels.end(), rng);
    if (statistic(prob, labels, delta) >= t_obs) ++hits;
  }
  r.draws = draws;
  r.p_value = (1.0 + static_cast<double>(hits)) / (static_cast<double>(draws) + 1.0);
  return r;
}

}  // namespace

LRWindow build_window(const Dataset& ds, double center, std::size_t k) {
  if (k < 4) throw Error(ErrorKind::InvalidArgument, "window needs k >= 4");
  if (k > ds.size())
    throw Error(ErrorKind::InsufficientData, "k = " + std::to_string(k) + " exceeds the " +
                                                 std::to_string(ds.size()) + " available rows");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(ds.x(a) - center) < std::abs(ds.x(b) - center);
  });
  const double cut = std::abs(ds.x(order[k - 1]) - center);
  LRWindow w;
  w.center = center;
  w.k = k;
  for (auto p : order) {
    if (std::abs(ds.x(p) - center) > cut) break;
    w.members.push_back(p);
  }
  w.half_width = cut;
  std::stable_sort(w.members.begin(), w.members.end(), [&](std::size_t a, std::size_t b) {
    return ds.x(a) < ds.x(b) || (ds.x(a) == ds.x(b) && a < b);
  });
  return w;
}

LRResult lr_estimate(const Dataset& ds, const CutoffPair& pair, double xbar, std::size_t k,
                     Adjustment adjustment) {
  const auto w = pair_windows(ds, pair, xbar, k);
  const Split at_low = split(ds, w.low_pos, pair.low);
  const Split at_xbar = split(ds, w.xbar_pos, pair.low);
  if (at_low.yl.empty()) throw Error(ErrorKind::EmptyCell, "no low-cutoff controls near " + fmt(pair.low));
  if (at_low.yh.empty()) throw Error(ErrorKind::EmptyCell, "no high-cutoff units near " + fmt(pair.low));
  if (at_xbar.yl.empty()) throw Error(ErrorKind::EmptyCell, "no low-cutoff treated units near " + fmt(xbar));
  if (at_xbar.yh.empty()) throw Error(ErrorKind::EmptyCell, "no high-cutoff controls near " + fmt(xbar));

  const auto l0 = cell_fit(at_low.xl, at_low.yl, pair.low, adjustment);
  const auto h0 = cell_fit(at_low.xh, at_low.yh, pair.low, adjustment);
  const auto l1 = cell_fit(at_xbar.xl, at_xbar.yl, xbar, adjustment);
  const auto h1 = cell_fit(at_xbar.xh, at_xbar.yh, xbar, adjustment);

  LRResult r;
  r.xbar = xbar;
  r.k = k;
  r.adjustment = adjustment;
  r.delta_hat = l0.value - h0.value;
  r.tau_hat = l1.value - h1.value - r.delta_hat;
  r.V_delta = l0.variance + h0.variance;
  r.V1 = l1.variance + h1.variance;
  r.counts = {at_low.yl.size(), at_low.yh.size(), at_xbar.yl.size(), at_xbar.yh.size()};
  r.window_low = w.at_low;
  r.window_xbar = w.at_xbar;
  r.p_neyman = std::numeric_limits<double>::quiet_NaN();
  return r;
}

NeymanResult neyman_test(const LRResult& lr) {
  const double v = lr.V1 + lr.V_delta;
  if (!(v > 0.0)) throw Error(ErrorKind::ZeroVariance, "V1 + V_delta is zero");
  NeymanResult out;
  out.t_stat = lr.tau_hat / std::sqrt(v);
  out.p_value = stats::normal_two_sided_p(out.t_stat);
  return out;
}

PermutationProblem permutation_problem(const Dataset& ds, const CutoffPair& pair, double xbar,
                                       std::size_t k, Adjustment adjustment) {
  const auto w = pair_windows(ds, pair, xbar, k);
  PermutationProblem p;
  p.center = xbar;
  p.adjustment = adjustment;
  for (auto pos : w.xbar_pos) {
    p.y.push_back(ds.y(pos));
    p.x.push_back(ds.x(pos));
    p.is_low.push_back(ds.c(pos) == pair.low ? 1 : 0);
  }
  return p;
}

std::uint64_t relabeling_count(std::size_t n, std::size_t n_low, std::uint64_t cap) {
  const std::size_t r = std::min(n_low, n - n_low);
  // C(n, r) built incrementally; every prefix C(n - r + i, i) is an integer.
  unsigned __int128 c = 1;
  for (std::size_t i = 1; i <= r; ++i) {
    c = c * (n - r + i) / i;
    if (c > cap) return cap + 1;
  }
  return static_cast<std::uint64_t>(c);
}

RandomizationResult randomization_pvalue(const PermutationProblem& prob, double delta,
                                         std::size_t draws, std::uint64_t seed) {
  return randomization_impl(prob, delta, draws, seed, true);
}

RandomizationResult randomization_pvalue_serial(const PermutationProblem& prob, double delta,
                                                std::size_t draws, std::uint64_t seed) {
  return randomization_impl(prob, delta, draws, seed, false);
}

BergerBoosResult bergerboos_pvalue(const Dataset& ds, const CutoffPair& pair, double xbar,
                                   std::size_t k, Adjustment adjustment, double eta,
                                   std::size_t draws, std::size_t grid, std::uint64_t seed,
                                   bool parallel) {
  if (!(eta > 0.0 && eta <= 0.1)) throw Error(ErrorKind::InvalidEta, "eta must lie in (0, 0.1]");
  if (draws < 500) throw Error(ErrorKind::InvalidArgument, "at least 500 permutations required");
  if (grid == 0) throw Error(ErrorKind::InvalidArgument, "empty grid");
  const auto lr = lr_estimate(ds, pair, xbar, k, adjustment);
  const auto prob = permutation_problem(ds, pair, xbar, k, adjustment);

  BergerBoosResult out;
  out.eta = eta;
  const double half = stats::normal_critical(1.0 - eta) * std::sqrt(lr.V_delta);
  const double lo = lr.delta_hat - half, hi = lr.delta_hat + half;
  for (std::size_t g = 0; g < grid; ++g)
    out.grid.push_back(grid == 1 || half == 0.0
                           ? lr.delta_hat
                           : lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1));
  out.p_values.resize(grid);

  const auto gn = static_cast<long long>(grid);
  std::vector<char> exhaustive(grid, 0);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long long g = 0; g < gn; ++g) {
    const auto ug = static_cast<std::size_t>(g);
    const auto r = randomization_pvalue_serial(prob, out.grid[ug], draws, seed);
    out.p_values[ug] = r.p_value;
    exhaustive[ug] = r.exhaustive;
  }
  out.exhaustive = exhaustive.front() != 0;
  out.p_star = *std::max_element(out.p_values.begin(), out.p_values.end()) + eta;
  return out;
}

LRResult local_randomization(const Dataset& ds, const CutoffPair& pair, double xbar,
                             std::size_t k, Adjustment adjustment, double eta, std::size_t draws,
                             std::size_t grid, std::uint64_t seed) {
  auto lr = lr_estimate(ds, pair, xbar, k, adjustment);
  if (lr.V1 + lr.V_delta > 0.0) {
    const auto ny = neyman_test(lr);
    lr.t_stat = ny.t_stat;
    lr.p_neyman = ny.p_value;
  }
  const auto bb = bergerboos_pvalue(ds, pair, xbar, k, adjustment, eta, draws, grid, seed);
  lr.p_fisher_bb = bb.p_star;
  lr.eta = eta;
  lr.permutations = draws;
  lr.exhaustive = bb.exhaustive;
  lr.grid_size = grid;
  return lr;
}

std::vector<SensitivityRow> lr_sensitivity(const Dataset& ds, const CutoffPair& pair, double xbar,
                                           const std::vector<std::size_t>& k_list,
                                           Adjustment adjustment, double eta, std::size_t draws,
                                           std::size_t grid, std::uint64_t seed) {
  std::vector<SensitivityRow> rows;
  for (auto k : k_list) {
    SensitivityRow row;
    row.k = k;
    try {
      row.result = local_randomization(ds, pair, xbar, k, adjustment, eta, draws, grid, seed);
    } catch (const Error& e) {
      row.error = e.kind();
      row.message = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rdx
