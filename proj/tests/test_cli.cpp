#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rdx/cli.hpp"
#include "rdx/errors.hpp"
#include "rdx/extrapolation.hpp"
#include "rdx/rdplot.hpp"
#include "rdx/simulate.hpp"
#include "test_util.hpp"

using namespace rdx;
using rdx::testing::make_sharp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "rdx_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string sample_csv() {
  static const std::string path = [] {
    SimulationConfig cfg;
    cfg.N = 3000;
    const auto ds = generate_sample(cfg, 77);
    const auto p = scratch("sample.csv");
    std::ofstream f(p);
    write_csv(f, ds);
    return p.string();
  }();
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// Histogram means computed directly from the bin edges.
struct OracleBin {
  double mean;
  std::size_t count;
};

std::vector<OracleBin> histogram(const std::vector<double>& x, const std::vector<double>& y, int bins) {
  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  std::vector<OracleBin> out;
  for (int b = 0; b < bins; ++b) {
    const double a = lo + (hi - lo) * b / bins;
    const double e = lo + (hi - lo) * (b + 1) / bins;
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool in = b + 1 == bins ? (x[i] >= a && x[i] <= hi) : (x[i] >= a && x[i] < e);
      if (in) {
        s += y[i];
        ++n;
      }
    }
    out.push_back({n ? s / n : std::numeric_limits<double>::quiet_NaN(), n});
  }
  return out;
}

}  // namespace

TEST_CASE("rdplot: constant outcomes and one row per bin") {
  std::vector<double> x, y, c;
  for (int i = 0; i < 40; ++i) {
    x.push_back(-10.0 + 0.5 * i + 0.25);
    y.push_back(2.5);
    c.push_back(0.0);
  }
  const auto p = rdplot_bins(make_sharp(x, y, c), 0.0, 5, 2);
  for (const auto* side : {&p.left, &p.right}) {
    for (const auto& b : side->bins) CHECK(b.mean == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(side->fit[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(std::abs(side->fit[1]) < 1e-12);
    CHECK(std::abs(side->fit[2]) < 1e-12);
  }

  // Four rows per side placed at bin centres.
  std::vector<double> x1{-3.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5};
  std::vector<double> y1{1, 4, 9, 16, 25, 36, 49, 64};
  const auto q = rdplot_bins(make_sharp(x1, y1, std::vector<double>(8, 0.0)), 0.0, 3, 1);
  REQUIRE(q.left.bins.size() == 3);
  // Range [-3.5, -0.5] in three bins: -3.5 | -2.5 | -1.5, -0.5 (right edge closed).
  CHECK(q.left.bins[0].mean == 1.0);
  CHECK(q.left.bins[1].mean == 4.0);
  CHECK(q.left.bins[2].count == 2);

  std::vector<double> x2{-2, -1, 1, 2};
  const auto r = rdplot_bins(make_sharp(x2, {3, 5, 7, 11}, std::vector<double>(4, 0.0)), 0.0, 2, 1);
  CHECK(r.left.bins[0].mean == 3.0);
  CHECK(r.left.bins[1].mean == 5.0);
  CHECK(r.right.bins[0].mean == 7.0);
  CHECK(r.right.bins[1].mean == 11.0);
}

TEST_CASE("rdplot: histogram oracle on 200 rows") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::normal_distribution<double> e(0, 1);
  std::vector<double> x, y, c;
  for (int i = 0; i < 200; ++i) {
    x.push_back(u(gen));
    y.push_back(1.0 + 0.5 * x.back() + e(gen));
    c.push_back(0.0);
  }
  const auto ds = make_sharp(x, y, c);
  for (int order : {1, 2}) {
    const auto p = rdplot_bins(ds, 0.0, 7, order);
    std::vector<double> xl, yl, xr, yr;
    for (std::size_t i = 0; i < x.size(); ++i) (x[i] < 0 ? xl : xr).push_back(x[i]), (x[i] < 0 ? yl : yr).push_back(y[i]);
    for (const auto& [side, xs, ys] : {std::tuple{&p.left, &xl, &yl}, std::tuple{&p.right, &xr, &yr}}) {
      const auto want = histogram(*xs, *ys, 7);
      std::size_t total = 0;
      for (std::size_t b = 0; b < 7; ++b) {
        CHECK(side->bins[b].count == want[b].count);
        if (want[b].count) CHECK(side->bins[b].mean == doctest::Approx(want[b].mean).epsilon(1e-12));
        total += side->bins[b].count;
      }
      CHECK(total == xs->size());
      // Global fit against the normal-equation oracle.
      const auto coef = rdx::testing::wls_oracle(*xs, *ys, std::vector<double>(xs->size(), 1.0), 0.0, order);
      for (int j = 0; j <= order; ++j)
        CHECK(side->fit[static_cast<std::size_t>(j)] == doctest::Approx(coef[static_cast<std::size_t>(j)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("rdplot: pooled and errors") {
  std::vector<double> x{-3, -2, -1, 0.5, 1, 2, 7, 8, 9, 10.5, 11, 12};
  std::vector<double> c{0, 0, 0, 0, 0, 0, 10, 10, 10, 10, 10, 10};
  std::vector<double> y(x.size(), 1.0);
  const auto ds = make_sharp(x, y, c);
  const auto p = rdplot_bins(ds, std::nullopt, 2, 1);
  CHECK(p.normalized);
  CHECK(p.left.n == 6);
  CHECK(p.right.n == 6);
  CHECK(p.left.bins.front().lo == -3.0);
  CHECK_THROWS_AS(rdplot_bins(ds, 0.0, 1, 1), Error);
  CHECK_THROWS_AS(rdplot_bins(ds, 0.0, 4, 3), Error);
  CHECK_THROWS_AS(rdplot_bins(ds, 5.0, 4, 1), Error);
  CHECK_THROWS_AS(rdplot_bins(make_sharp({-1, 1}, {0, 0}, {0, 0}), 0.0, 2, 1), Error);
}

TEST_CASE("cli: usage errors") {
  auto r = call({"extrapolate", "--data", sample_csv(), "--bogus", "1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(call({}).code == 2);
  CHECK(call({"frobnicate"}).code == 2);
  CHECK(call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571", "--grid", "1:2"}).code == 2);
  CHECK(call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571"}).code == 2);
  CHECK(call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571", "--at", "-650",
              "--bandwidth", "wide"})
            .code == 2);
  CHECK(call({"--help"}).code == 0);
}

TEST_CASE("cli: data and estimation errors") {
  CHECK(call({"effect", "--data", scratch("missing.csv").string()}).code == 3);
  const auto bad = scratch("bad.csv");
  {
    std::ofstream f(bad);
    f << "y,x\n1,2\n";
  }
  CHECK(call({"effect", "--data", bad.string()}).code == 3);
  CHECK(call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-500", "--at", "-650"}).code == 3);
  auto r = call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571", "--at", "-900"});
  CHECK(r.code == 4);
  CHECK(r.err.find("XbarOutOfRange") != std::string::npos);
}

TEST_CASE("cli: extrapolate output matches the library") {
  auto r = call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571", "--at", "-650"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  const auto& res = j["result"];
  for (const char* key : {"tau", "bias_low", "ci_rbc", "p_value_rbc", "tau_rbc", "se_rbc"}) CHECK(res.contains(key));
  REQUIRE(res["components"].size() == 4);
  for (const auto& c : res["components"]) {
    CHECK(c.contains("eff_n"));
    CHECK(c.contains("bandwidth"));
  }

  const auto ds = load_dataset(sample_csv(), {}, Design::Sharp);
  const auto lib = extrapolate_sharp(ds, {-850, -571}, -650, {});
  CHECK(res["tau"].get<double>() == lib.tau);
  CHECK(res["bias_low"].get<double>() == lib.bias_low);
  CHECK(res["ci_rbc"][0].get<double>() == lib.ci_rbc.lo);
  CHECK(res["ci_rbc"][1].get<double>() == lib.ci_rbc.hi);
  CHECK(res["se_rbc"].get<double>() == lib.se_rbc());
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(res["components"][i]["estimate"].get<double>() == lib.components[i].estimate());
    CHECK(res["components"][i]["bandwidth"].get<double>() == lib.components[i].rbc.fit.h_used);
    CHECK(res["components"][i]["eff_n"].get<std::size_t>() == lib.components[i].rbc.fit.n_eff);
  }

  auto t = call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571", "--at", "-650",
                 "--format", "table"});
  REQUIRE(t.code == 0);
  for (const char* h : {"Estimate", "RBC CI", "RBC p-value", "Eff. N", "Bw"}) CHECK(t.out.find(h) != std::string::npos);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", lib.tau);
  CHECK(t.out.find(buf) != std::string::npos);
}

TEST_CASE("cli: every subcommand runs") {
  const auto csv = sample_csv();
  const std::vector<std::vector<std::string>> cmds = {
      {"effect", "--data", csv},
      {"extrapolate", "--data", csv, "--cutoff-low", "-850", "--cutoff-high", "-571", "--grid", "-800:-600:5"},
      {"extrapolate", "--data", csv, "--cutoff-low", "-850", "--cutoff-high", "-571", "--at", "-650",
       "--polybias-order", "1"},
      {"falsify", "--data", csv, "--cutoff-low", "-850", "--cutoff-high", "-571"},
      {"fe", "--data", csv, "--at", "-650"},
      {"lr", "--data", csv, "--cutoff-low", "-850", "--cutoff-high", "-571", "--at", "-650", "--k", "30,50",
       "--perms", "500", "--bb-grid", "10"},
      {"rdplot", "--data", csv, "--cutoff", "-850"},
      {"rdplot", "--data", csv, "--order", "2", "--bins", "10"},
  };
  for (const auto& c : cmds) {
    for (const char* fmt : {"json", "table"}) {
      auto args = c;
      args.push_back("--format");
      args.push_back(fmt);
      const auto r = call(args);
      INFO(c[0] << " " << fmt << ": " << r.err);
      CHECK(r.code == 0);
      CHECK_FALSE(r.out.empty());
      if (std::string(fmt) == "json") CHECK_NOTHROW((void)nlohmann::json::parse(r.out));
    }
  }
  const auto grid = nlohmann::json::parse(call(cmds[1]).out);
  CHECK(grid["grid"].size() == 5);
  const auto plot = nlohmann::json::parse(call(cmds[7]).out);
  CHECK(plot["left"]["bins"].size() == 10);
  CHECK(plot["normalized"].get<bool>());
}

TEST_CASE("cli: JSON numbers round-trip exactly") {
  const auto out = scratch("extrap.json");
  REQUIRE(call({"extrapolate", "--data", sample_csv(), "--low", "-850", "--high", "-571", "--at", "-700",
                "--out", out.string()})
              .code == 0);
  const auto text = slurp(out);
  const auto j = nlohmann::ordered_json::parse(text);
  CHECK(j.dump(2) + "\n" == text);
  const auto lib = extrapolate_sharp(load_dataset(sample_csv(), {}, Design::Sharp), {-850, -571}, -700, {});
  CHECK(j["result"]["variance"].get<double>() == lib.variance);
  CHECK(j["result"]["cov_term"].get<double>() == lib.cov_term);
}

TEST_CASE("cli: seeded commands are byte-identical across runs and threads") {
  const auto cfg = scratch("sim.json");
  {
    std::ofstream f(cfg);
    f << R"({"N": 1000, "reps": 40, "seed": 3})";
  }
  const std::vector<std::string> sim = {"simulate", "--config", cfg.string(), "--reps", "40", "--seed", "7"};
  const std::vector<std::string> lr = {"lr", "--data", sample_csv(), "--cutoff-low", "-850", "--cutoff-high", "-571",
                                       "--at", "-650", "--k", "40", "--perms", "999", "--bb-grid", "8", "--seed", "9"};
  for (const auto& cmd : {sim, lr}) {
    setenv("RDX_THREADS", "1", 1);
    const auto a = call(cmd);
    const auto b = call(cmd);
    setenv("RDX_THREADS", "4", 1);
    const auto c = call(cmd);
    unsetenv("RDX_THREADS");
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);
  }
  const auto j = nlohmann::json::parse(call(sim).out);
  CHECK(j["config"]["seed"].get<int>() == 7);
  CHECK(j["reps"].get<int>() == 40);
}
