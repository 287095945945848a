// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. argv[1] is the path of the rdx executable.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rdx/errors.hpp"
#include "rdx/extrapolation.hpp"
#include "rdx/falsification.hpp"
#include "rdx/fixedeffects.hpp"
#include "rdx/localrand.hpp"
#include "rdx/locfit.hpp"
#include "rdx/simulate.hpp"
#include "test_util.hpp"

using namespace rdx;
using rdx::testing::make_sharp;
using rdx::testing::make_single;
namespace fs = std::filesystem;

namespace {

constexpr double kLow = -850.0;
constexpr double kHigh = -571.0;

struct Verdict {
  bool ok = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

FitSpec spec_of(int p, int deriv, Kernel k, std::optional<double> h, Side side = Side::Both) {
  FitSpec s;
  s.p = p;
  s.deriv = deriv;
  s.kernel = k;
  s.h = h;
  s.side = side;
  return s;
}

// Two cutoff groups on (-1000, -1), alternating rows, constant effect tau.
struct Rows {
  std::vector<double> x, y, c;
  std::vector<int> d;
};

Rows two_group(std::size_t n, const std::function<double(double)>& m_low,
               const std::function<double(double)>& m_high, double tau, double sd, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(-1000, -1);
  std::normal_distribution<double> eps(0, 1);
  Rows g;
  for (std::size_t i = 0; i < n; ++i) {
    const bool low = i % 2 == 0;
    const double c = low ? kLow : kHigh;
    const double x = ux(gen);
    const int d = x >= c;
    g.x.push_back(x);
    g.c.push_back(c);
    g.d.push_back(d);
    g.y.push_back((low ? m_low(x) : m_high(x)) + tau * d + sd * eps(gen));
  }
  return g;
}

double mu_high(double x) { return 1.0 + 0.002 * x; }
double mu_low(double x) { return mu_high(x) - 0.14; }


void coverage_and_accuracy(Verdict& c1, Verdict& c2) {
  const double lo[] = {0.88, 0.89, 0.91};
  const double hi[] = {0.94, 0.95, 0.965};
  const std::size_t sizes[] = {1000, 2000, 5000};
  for (int i = 0; i < 3; ++i) {
    SimulationConfig cfg;
    cfg.N = sizes[i];
    const auto s = run_monte_carlo(cfg);
    c1.detail << " N=" << cfg.N << " coverage=" << s.coverage_rbc;
    c1.require(s.reps_completed == cfg.reps, "all replications complete at N=" + std::to_string(cfg.N));
    c1.require(s.coverage_rbc >= lo[i] && s.coverage_rbc <= hi[i],
               "coverage band at N=" + std::to_string(cfg.N));
    c2.detail << " N=" << cfg.N << " mean=" << s.mean_tau_hat << " bias=" << s.bias << " sd=" << s.sd;
    if (cfg.N == 5000) {
      c2.require(std::abs(s.mean_tau_hat - 0.19) <= 0.01, "mean within 0.19 +- 0.01 at N=5000");
      c2.require(std::abs(s.bias) < s.sd / 3.0, "|bias| < sd/3 at N=5000");
    }
  }
}

void exactness(Verdict& v) {
  auto g = two_group(4000, mu_low, mu_high, 0.19, 0.0, 5);
  auto ds = make_sharp(g.x, g.y, g.c);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double xbar = kLow + (kHigh - kLow) * (k + 1) / 10.0;
    const auto r = extrapolate_sharp(ds, {kLow, kHigh}, xbar, spec_of(1, 0, Kernel::Triangular, std::nullopt));
    worst = std::max(worst, std::abs(r.tau - 0.19));
  }
  v.detail << " max |tau - truth| over 10 points = " << worst;
  v.require(worst <= 1e-8, "tolerance 1e-8");
}

void oracles(Verdict& v) {
  // (a) Uniform kernel, bandwidth covering the range: global OLS.
  {
    auto ds = make_single(120, -2, 4, 0, [](double x) { return std::sin(x) + 0.2 * x * x; }, 0.3, 9);
    std::vector<double> x, y, w(ds.size(), 1.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      x.push_back(ds.x(i));
      y.push_back(ds.y(i));
    }
    double worst = 0.0;
    for (int p : {0, 1, 2, 3}) {
      const auto fit = local_fit(ds, spec_of(p, 0, Kernel::Uniform, 10.0), 0.7);
      const auto o = testing::wls_oracle(x, y, w, 0.7, p);
      for (std::size_t j = 0; j < o.size(); ++j) worst = std::max(worst, std::abs(fit.beta[j] - o[j]));
    }
    v.detail << " (a) " << worst;
    v.require(worst <= 1e-8, "(a) global OLS to 1e-8");
  }
  // (b) Bias-corrected estimate with rho = 1 is the order p+1 fit.
  {
    auto ds = make_single(300, -1, 1, 0, [](double x) { return std::exp(2 * x); }, 0.2, 73);
    double worst = 0.0;
    for (int p : {0, 1, 2})
      for (auto side : {Side::Left, Side::Right, Side::Both}) {
        const auto spec = spec_of(p, 0, Kernel::Triangular, 0.5, side);
        const auto fit = local_fit(ds, spec, 0.1);
        const auto r = rbc_interval(fit, ds, spec, 0.95);
        const auto direct = local_fit(ds, spec_of(p + 1, 0, Kernel::Triangular, 0.5, side), 0.1);
        worst = std::max(worst, std::abs(r.rbc_estimate() - direct.estimate));
      }
    v.detail << " (b) " << worst;
    v.require(worst == 0.0, "(b) identical to the order p+1 fit");
  }
  // (c) Covariance of two fits against brute-force weight sums.
  {
    std::vector<double> x, y, c;
    for (int i = 0; i < 20; ++i) {
      x.push_back(0.05 * i + 0.01 * std::sin(i));
      y.push_back(std::cos(3.0 * x.back()) + 0.1 * std::sin(17.0 * i));
      c.push_back(5.0);
    }
    auto ds = make_sharp(x, y, c);
    const double ha = 0.35, hb = 0.4, xa = 0.3, xb = 0.55;
    const auto fa = local_fit(ds, spec_of(1, 0, Kernel::Triangular, ha), xa);
    const auto fb = local_fit(ds, spec_of(1, 0, Kernel::Triangular, hb), xb);
    const auto wa = testing::triangular_smoother_oracle(x, xa, ha, 1);
    const auto wb = testing::triangular_smoother_oracle(x, xb, hb, 1);
    const auto s2 = testing::nn_variance_oracle(x, y);
    double brute = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) brute += wa[i] * wb[i] * s2[i];
    const double diff = std::abs(fit_covariance(fa, fb, ds) - brute);
    v.detail << " (c) " << diff;
    v.require(diff <= 1e-12, "(c) brute force to 1e-12");
  }
  // (d) Berger-Boos on a six-row window at xbar against full enumeration.
  {
    std::vector<double> x, y, c;
    auto add = [&](double xi, double yi, double ci) {
      x.push_back(xi);
      y.push_back(yi);
      c.push_back(ci);
    };
    // Window at the low cutoff (0): three rows per group.
    for (double d : {0.3, 1.1, 2.0}) {
      add(-d, 1.1 + 0.05 * d, 0.0);
      add(d - 1.0, 0.95 - 0.02 * d, 100.0);
    }
    // Window at xbar = 50: six rows.
    const double xw[] = {49.0, 49.5, 50.0, 50.2, 50.7, 51.0};
    const double yw[] = {1.3, 0.2, 0.9, 1.7, 0.4, 1.1};
    const int lw[] = {1, 0, 1, 1, 0, 0};
    for (int i = 0; i < 6; ++i) add(xw[i], yw[i], lw[i] ? 0.0 : 100.0);
    auto ds = make_sharp(x, y, c);
    bool all_equal = true;
    for (auto adj : {Adjustment::Constant, Adjustment::Linear}) {
      const auto bb = bergerboos_pvalue(ds, {0.0, 100.0}, 50.0, 6, adj, 0.01, 500, 15, 3);
      double sup = 0.0;
      for (std::size_t g = 0; g < bb.grid.size(); ++g) {
        const double delta = bb.grid[g];
        auto stat = [&](unsigned mask) {
          std::vector<double> xl, yl, xh, yh;
          for (int i = 0; i < 6; ++i) {
            const double ya = yw[i] + (lw[i] ? 0.0 : delta);
            if (mask >> i & 1u) {
              xl.push_back(xw[i] - 50.0);
              yl.push_back(ya);
            } else {
              xh.push_back(xw[i] - 50.0);
              yh.push_back(ya);
            }
          }
          const int p = adj == Adjustment::Linear ? 1 : 0;
          auto icpt = [&](const std::vector<double>& a, const std::vector<double>& b) {
            return testing::wls_oracle(a, b, std::vector<double>(a.size(), 1.0), 0.0, p)[0];
          };
          return std::abs(icpt(xl, yl) - icpt(xh, yh));
        };
        unsigned obs = 0;
        for (int i = 0; i < 6; ++i)
          if (lw[i]) obs |= 1u << i;
        const double t = stat(obs);
        int hits = 0, total = 0;
        for (unsigned m = 0; m < 64; ++m) {
          if (__builtin_popcount(m) != 3) continue;
          ++total;
          if (stat(m) >= t - 1e-12) ++hits;
        }
        const double p = static_cast<double>(hits) / total;
        all_equal = all_equal && bb.p_values[g] == p;
        sup = std::max(sup, p);
      }
      all_equal = all_equal && bb.exhaustive && bb.p_star == sup + 0.01;
    }
    v.detail << " (d) " << (all_equal ? "exact" : "mismatch");
    v.require(all_equal, "(d) exhaustive enumeration");
  }
}

double quad(double x) {
  const double t = (x + 925.0) / 40.0;
  return 0.5 + 0.3 * t - 0.1 * t * t;
}

Dataset null_groups(std::size_t n, double sd, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(-1000, -1);
  std::normal_distribution<double> eps(0, 1);
  std::vector<double> x, y, c;
  for (std::size_t i = 0; i < n; ++i) {
    const bool low = i % 2 == 0;
    const double xi = ux(gen);
    x.push_back(xi);
    c.push_back(low ? kLow : kHigh);
    y.push_back(quad(xi) + (low ? -0.14 : 0.0) + sd * eps(gen));
  }
  return make_sharp(x, y, c);
}

// Equal slopes at both cutoffs; separate intercepts and jumps.
Dataset equal_slopes(std::size_t n_per, double sd, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> eps(0, 1);
  const double cut[] = {kLow, kHigh}, gamma[] = {0.2, 0.5}, delta[] = {0.19, 0.1};
  std::vector<double> x, y, c;
  for (int j = 0; j < 2; ++j) {
    std::uniform_real_distribution<double> ux(cut[j] - 100, cut[j] + 100);
    for (std::size_t i = 0; i < n_per; ++i) {
      const double xi = ux(gen);
      const double d = xi >= cut[j] ? 1.0 : 0.0;
      x.push_back(xi);
      c.push_back(cut[j]);
      y.push_back(gamma[j] + 0.003 * (xi - cut[j]) + delta[j] * d + sd * eps(gen));
    }
  }
  return make_sharp(x, y, c);
}

void size(Verdict& v) {
  const int seeds = 2000;
  int rej_global = 0, rej_slope = 0;
  for (int s = 0; s < seeds; ++s) {
    if (global_parallel_test(null_groups(4000, 0.3, 1000 + static_cast<std::uint64_t>(s)), {kLow, kHigh}).p_value <
        0.05)
      ++rej_global;
    if (slope_equality_test(equal_slopes(400, 0.3, 100 + static_cast<std::uint64_t>(s))).p_value < 0.05)
      ++rej_slope;
  }
  const double rg = static_cast<double>(rej_global) / seeds, rs = static_cast<double>(rej_slope) / seeds;
  v.detail << " global=" << rg << " slopes=" << rs;
  v.require(rg >= 0.035 && rg <= 0.065, "global test size 5% +- 1.5%");
  v.require(rs >= 0.035 && rs <= 0.065, "slope test size 5% +- 1.5%");

  // Randomization test at the true shift: every fixed-margin assignment of
  // ten units is taken in turn as the observed one, so P[p <= alpha] is the
  // exact share of assignments rejecting.
  std::mt19937_64 gen(404);
  std::normal_distribution<double> eps(0, 1);
  const double delta = -0.14;
  std::vector<double> base(10), xs(10);
  for (int i = 0; i < 10; ++i) {
    base[i] = 1.0 + 0.3 * eps(gen);
    xs[i] = 50.0 + 0.5 * (i - 4.5);
  }
  const double alphas[] = {0.01, 0.05, 0.1, 0.2, 0.5};
  bool valid = true;
  for (auto adj : {Adjustment::Constant, Adjustment::Linear}) {
    std::vector<int> reject(5, 0);
    int total = 0;
    for (unsigned m = 0; m < 1024; ++m) {
      if (__builtin_popcount(m) != 5) continue;
      PermutationProblem prob;
      prob.x = xs;
      prob.center = 50.0;
      prob.adjustment = adj;
      for (int i = 0; i < 10; ++i) {
        const bool low = m >> i & 1u;
        prob.is_low.push_back(low ? 1 : 0);
        // Adjusted outcomes equal `base` under the null whatever the labels.
        prob.y.push_back(base[i] - (low ? 0.0 : delta));
      }
      const auto r = randomization_pvalue(prob, delta, 1000, 1);
      valid = valid && r.exhaustive;
      ++total;
      for (int a = 0; a < 5; ++a)
        if (r.p_value <= alphas[a]) ++reject[a];
    }
    v.detail << " " << to_string(adj) << ":";
    for (int a = 0; a < 5; ++a) {
      const double rate = static_cast<double>(reject[a]) / total;
      v.detail << " P[p<=" << alphas[a] << "]=" << rate;
      valid = valid && rate <= alphas[a];
    }
  }
  v.require(valid, "randomization test P[p <= alpha] <= alpha");
}

Dataset as_fuzzy(const Dataset& ds) {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < ds.size(); ++i) obs.push_back({ds.y(i), ds.x(i), ds.c(i), ds.d(i), {}});
  return Dataset::from_observations(std::move(obs), Design::Fuzzy);
}

void fuzzy(Verdict& v) {
  SimulationConfig cfg;
  cfg.N = 5000;
  const auto ds = generate_sample(cfg, rep_seed(cfg, 0));
  const FitSpec spec;
  const auto s = extrapolate_sharp(ds, {cfg.ell, cfg.H}, cfg.xbar, spec);
  const auto f = extrapolate_fuzzy(as_fuzzy(ds), {cfg.ell, cfg.H}, cfg.xbar, spec);
  const bool same = f.first_stage && f.first_stage->estimate == 1.0 && f.tau == s.tau &&
                    f.variance == s.variance && f.tau_rbc == s.tau_rbc && f.variance_rbc == s.variance_rbc &&
                    f.ci_rbc.lo == s.ci_rbc.lo && f.ci_rbc.hi == s.ci_rbc.hi &&
                    f.ci_conventional.lo == s.ci_conventional.lo && f.ci_conventional.hi == s.ci_conventional.hi;
  v.detail << " full compliance " << (same ? "bit-identical" : "differs");
  v.require(same, "full-compliance fuzzy equals sharp");

  cfg.N = 20000;
  cfg.complier_share = 0.6;
  const auto r = extrapolate_fuzzy(generate_sample(cfg, rep_seed(cfg, 0)), {cfg.ell, cfg.H}, cfg.xbar, spec);
  const double z = std::abs(r.tau_rbc - 0.19) / r.se_rbc();
  v.detail << "; 60% compliers tau_rbc=" << r.tau_rbc << " se=" << r.se_rbc() << " |z|=" << z;
  v.require(z <= 3.0, "complier effect within 3 se");
}

void polybias(Verdict& v) {
  const double xbar = -650.0;
  const double predicted = 0.0005 * (xbar - kLow);
  auto diverging = [](double x) { return mu_low(x) + 0.0005 * (x - kLow); };
  const int reps = 500;
  std::vector<double> b0, b1;
  for (int r = 0; r < reps; ++r) {
    auto g = two_group(4000, diverging, mu_high, 0.19, 0.3, 70000 + static_cast<std::uint64_t>(r));
    auto ds = make_sharp(g.x, g.y, g.c);
    const FitSpec spec;
    b0.push_back(extrapolate_polybias(ds, {kLow, kHigh}, xbar, spec, 0).tau - 0.19);
    b1.push_back(extrapolate_polybias(ds, {kLow, kHigh}, xbar, spec, 1).tau - 0.19);
  }
  auto mean_se = [](const std::vector<double>& a) {
    double m = 0, q = 0;
    for (double e : a) m += e;
    m /= static_cast<double>(a.size());
    for (double e : a) q += (e - m) * (e - m);
    return std::make_pair(m, std::sqrt(q / static_cast<double>(a.size() - 1) / static_cast<double>(a.size())));
  };
  const auto [m0, se0] = mean_se(b0);
  const auto [m1, se1] = mean_se(b1);
  v.detail << " predicted=" << predicted << " s_max=0 bias=" << m0 << " (se " << se0 << ") s_max=1 bias=" << m1
           << " (se " << se1 << ")";
  v.require(std::abs(m0 - predicted) <= 3 * se0, "s_max=0 bias matches prediction");
  v.require(std::abs(m1) <= 3 * se1, "s_max=1 unbiased");
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

void determinism(Verdict& v, const std::string& exe) {
  const auto dir = fs::temp_directory_path() / "rdx_acceptance";
  fs::create_directories(dir);
  const auto csv = (dir / "sample.csv").string();
  {
    SimulationConfig cfg;
    cfg.N = 3000;
    std::ofstream f(csv);
    write_csv(f, generate_sample(cfg, 77));
  }
  const auto cfg_path = (dir / "sim.cfg").string();
  {
    std::ofstream f(cfg_path);
    f << "N=1000\nreps=40\nseed=7\n";
  }
  const std::vector<std::string> commands = {
      "effect --data " + csv,
      "extrapolate --data " + csv + " --cutoff-low -850 --cutoff-high -571 --at -650",
      "extrapolate --data " + csv + " --cutoff-low -850 --cutoff-high -571 --grid -800:-600:5",
      "extrapolate --data " + csv + " --cutoff-low -850 --cutoff-high -571 --at -650 --polybias-order 1",
      "falsify --data " + csv + " --cutoff-low -850 --cutoff-high -571",
      "fe --data " + csv + " --at -650",
      "lr --data " + csv + " --cutoff-low -850 --cutoff-high -571 --at -650 --k 30,40 --perms 999 --seed 9",
      "simulate --config " + cfg_path,
      "simulate --config " + cfg_path + " --estimator extrapolate_polybias",
      "rdplot --data " + csv + " --cutoff -850",
  };
  int n_cmd = 0, stable = 0;
  for (const auto& cmd : commands)
    for (const char* fmt : {"json", "table"}) {
      std::vector<std::string> outs;
      for (const char* threads : {"1", "1", "4"}) {
        const auto out = dir / ("out_" + std::to_string(outs.size()));
        fs::remove(out);
        const std::string line = "RDX_THREADS=" + std::string(threads) + " \"" + exe + "\" " + cmd +
                                 " --format " + fmt + " --out \"" + out.string() + "\"";
        const int rc = std::system(line.c_str());
        outs.push_back(rc == 0 ? slurp(out) : std::string());
      }
      ++n_cmd;
      if (!outs[0].empty() && outs[0] == outs[1] && outs[0] == outs[2]) ++stable;
      else v.detail << " [unstable: " << cmd.substr(0, cmd.find(' ')) << " " << fmt << "]";
    }
  v.detail << " " << stable << "/" << n_cmd << " command outputs byte-identical";
  v.require(stable == n_cmd, "byte-identical outputs");
}

template <class F>
void guarded(Verdict& v, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-rdx>\n";
    return 2;
  }
  const std::string exe = argv[1];
  std::cout.precision(6);
  Verdict v[8];
  const char* names[8] = {"simulation coverage",       "point-estimate accuracy", "exactness with parallel controls",
                          "oracle equivalences",        "test size",               "fuzzy degeneracy",
                          "polynomial-bias correction", "determinism"};
  const auto t0 = std::chrono::steady_clock::now();
  guarded(v[0], [&] { coverage_and_accuracy(v[0], v[1]); });
  if (!v[0].ok && v[1].detail.str().empty()) v[1].require(false, "simulation runs did not complete");
  guarded(v[2], [&] { exactness(v[2]); });
  guarded(v[3], [&] { oracles(v[3]); });
  guarded(v[4], [&] { size(v[4]); });
  guarded(v[5], [&] { fuzzy(v[5]); });
  guarded(v[6], [&] { polybias(v[6]); });
  guarded(v[7], [&] { determinism(v[7], exe); });
  int failed = 0;
  for (int i = 0; i < 8; ++i) {
    std::cout << (v[i].ok ? "PASS" : "FAIL") << " " << i + 1 << " " << names[i] << ":" << v[i].detail.str() << "\n";
    failed += v[i].ok ? 0 : 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << failed << " of 8 criteria failed (" << secs << " s)\n";
  return failed;
}
