#include "rdx/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "rdx/extrapolation.hpp"
#include "rdx/rng.hpp"

namespace rdx {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto t = trim(v);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw Error(ErrorKind::InvalidArgument, "config key '" + key + "': bad number '" + v + "'");
  return out;
}

std::uint64_t to_count(const std::string& key, double v) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1.8e19)
    throw Error(ErrorKind::InvalidArgument, "config key '" + key + "' must be a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

void set_field(SimulationConfig& cfg, const std::string& key, const std::vector<double>& vals) {
  auto scalar = [&]() {
    if (vals.size() != 1)
      throw Error(ErrorKind::InvalidArgument, "config key '" + key + "' takes one value");
    return vals[0];
  };
  if (key == "gamma") {
    if (vals.size() != 5) throw Error(ErrorKind::InvalidArgument, "gamma needs five coefficients");
    std::copy(vals.begin(), vals.end(), cfg.gamma.begin());
  } else if (key == "Delta") {
    cfg.Delta = scalar();
  } else if (key == "tau") {
    cfg.tau = scalar();
  } else if (key == "sigma") {
    cfg.sigma = scalar();
  } else if (key == "N") {
    cfg.N = to_count(key, scalar());
  } else if (key == "N_ell") {
    cfg.N_ell = to_count(key, scalar());
  } else if (key == "ell") {
    cfg.ell = scalar();
  } else if (key == "H") {
    cfg.H = scalar();
  } else if (key == "xbar") {
    cfg.xbar = scalar();
  } else if (key == "reps") {
    cfg.reps = to_count(key, scalar());
  } else if (key == "seed") {
    cfg.seed = to_count(key, scalar());
  } else if (key == "complier_share") {
    cfg.complier_share = scalar();
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
  }
}

SimulationConfig parse_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "config must be a JSON object");
  SimulationConfig cfg;
  for (const auto& [key, v] : j.items()) {
    std::vector<double> vals;
    if (v.is_array()) {
      for (const auto& e : v) {
        if (!e.is_number()) throw Error(ErrorKind::InvalidArgument, "config key '" + key + "': non-numeric entry");
        vals.push_back(e.get<double>());
      }
    } else if (v.is_number()) {
      vals.push_back(v.get<double>());
    } else {
      throw Error(ErrorKind::InvalidArgument, "config key '" + key + "' must be numeric");
    }
    set_field(cfg, key, vals);
  }
  return cfg;
}

SimulationConfig parse_key_value(const std::string& text) {
  SimulationConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::ParseError, "config line " + std::to_string(lineno) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    std::vector<double> vals;
    std::istringstream list(line.substr(eq + 1));
    std::string item;
    while (std::getline(list, item, ',')) vals.push_back(to_double(key, item));
    set_field(cfg, key, vals);
  }
  return cfg;
}

SimulationSummary summarize(const SimulationConfig& cfg, const EstimatorSpec& est,
                            const std::vector<RepOutcome>& reps) {
  SimulationSummary s;
  s.estimator = est.name;
  s.reps = reps.size();
  s.target = cfg.tau;
  double sum = 0.0, sum_se = 0.0;
  std::size_t covered = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    ++s.reps_completed;
    sum += r.tau_hat;
    sum_se += r.se_rbc;
    covered += r.covered ? 1 : 0;
    if (s.components.empty()) {
      s.components = r.labels;
      s.mean_bandwidths.assign(r.bandwidths.size(), 0.0);
      s.mean_eff_n.assign(r.eff_n.size(), 0.0);
    }
    for (std::size_t i = 0; i < r.bandwidths.size(); ++i) {
      s.mean_bandwidths[i] += r.bandwidths[i];
      s.mean_eff_n[i] += r.eff_n[i];
    }
  }
  if (s.reps_completed == 0) return s;
  const auto m = static_cast<double>(s.reps_completed);
  s.mean_tau_hat = sum / m;
  s.mean_se_rbc = sum_se / m;
  s.bias = s.mean_tau_hat - cfg.tau;
  double ss = 0.0;
  for (const auto& r : reps)
    if (r.ok) ss += (r.tau_hat - s.mean_tau_hat) * (r.tau_hat - s.mean_tau_hat);
  s.sd = std::sqrt(ss / m);
  s.rmse = std::sqrt(s.bias * s.bias + s.sd * s.sd);
  s.coverage_rbc = static_cast<double>(covered) / m;
  for (auto& v : s.mean_bandwidths) v /= m;
  for (auto& v : s.mean_eff_n) v /= m;
  return s;
}

void check_estimator(const EstimatorSpec& est) {
  if (est.name != "extrapolate_sharp" && est.name != "extrapolate_fuzzy" &&
      est.name != "extrapolate_polybias")
    throw Error(ErrorKind::EstimatorUnknown, "unknown estimator '" + est.name + "'");
}

}  // namespace

double SimulationConfig::mu0H(double x) const {
  double v = 0.0;
  for (auto it = gamma.rbegin(); it != gamma.rend(); ++it) v = v * x + *it;
  return v;
}

void SimulationConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
  if (!(sigma > 0.0)) bad("sigma must be positive");
  if (N < 2) bad("N must be at least 2");
  if (!(n_ell() > 0 && n_ell() < N)) bad("N_ell must lie strictly between 0 and N");
  if (!(ell < xbar && xbar <= H)) bad("need ell < xbar <= H");
  if (!(ell > -1000.0 && H < -1.0)) bad("cutoffs must lie inside the score support (-1000, -1)");
  if (reps < 1) bad("reps must be at least 1");
  if (!(complier_share > 0.0 && complier_share <= 1.0)) bad("complier_share must lie in (0, 1]");
}

SimulationConfig parse_simulation_config(const std::string& text) {
  const auto t = trim(text);
  auto cfg = !t.empty() && t.front() == '{' ? parse_json(t) : parse_key_value(t);
  cfg.validate();
  return cfg;
}

SimulationConfig load_simulation_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_simulation_config(buf.str());
}

Dataset generate_sample(const SimulationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  std::uniform_real_distribution<double> score(-1000.0, -1.0);
  std::normal_distribution<double> noise(0.0, cfg.sigma);
  std::bernoulli_distribution complier(cfg.complier_share);

  std::vector<char> is_ell(cfg.N, 0);
  std::fill(is_ell.begin(), is_ell.begin() + static_cast<std::ptrdiff_t>(cfg.n_ell()), 1);
  std::shuffle(is_ell.begin(), is_ell.end(), rng);

  const bool fuzzy = cfg.complier_share < 1.0;
  std::vector<Observation> obs(cfg.N);
  for (std::size_t i = 0; i < cfg.N; ++i) {
    auto& o = obs[i];
    o.x = score(rng);
    o.c = is_ell[i] ? cfg.ell : cfg.H;
    const bool above = o.x >= o.c;
    const bool takes = fuzzy ? complier(rng) : true;
    o.d = above && takes ? 1 : 0;
    o.y = cfg.mu0H(o.x) + cfg.tau * o.d + (is_ell[i] ? cfg.Delta : 0.0) + noise(rng);
  }
  return Dataset::from_observations(std::move(obs), fuzzy ? Design::Fuzzy : Design::Sharp);
}

std::uint64_t rep_seed(const SimulationConfig& cfg, std::size_t rep) {
  return stream_seed(cfg.seed, static_cast<std::uint64_t>(rep));
}

RepOutcome simulate_rep(const SimulationConfig& cfg, const EstimatorSpec& est, std::size_t rep) {
  check_estimator(est);
  RepOutcome out;
  const auto ds = generate_sample(cfg, rep_seed(cfg, rep));
  const CutoffPair pair{cfg.ell, cfg.H};
  try {
    ExtrapolationResult r;
    if (est.name == "extrapolate_fuzzy")
      r = extrapolate_fuzzy(ds, pair, cfg.xbar, est.fit, est.level);
    else if (est.name == "extrapolate_polybias")
      r = extrapolate_polybias(ds, pair, cfg.xbar, est.fit, est.s_max, est.level);
    else
      r = extrapolate_sharp(ds, pair, cfg.xbar, est.fit, est.level);
    out.ok = true;
    out.tau_hat = r.tau;
    out.se_rbc = r.se_rbc();
    out.covered = r.ci_rbc.contains(cfg.tau);
    for (const auto& c : r.components) {
      out.labels.push_back(c.label);
      out.bandwidths.push_back(c.rbc.fit.h_used);
      out.eff_n.push_back(static_cast<double>(c.rbc.fit.n_eff));
    }
  } catch (const Error& e) {
    out.error = e.kind();
  }
  return out;
}

SimulationSummary run_monte_carlo(const SimulationConfig& cfg, const EstimatorSpec& est) {
  cfg.validate();
  check_estimator(est);
  std::vector<RepOutcome> reps(cfg.reps);
  const auto n = static_cast<long long>(cfg.reps);
#pragma omp parallel for schedule(dynamic)
  for (long long r = 0; r < n; ++r)
    reps[static_cast<std::size_t>(r)] = simulate_rep(cfg, est, static_cast<std::size_t>(r));
  return summarize(cfg, est, reps);
}

SimulationSummary run_monte_carlo_serial(const SimulationConfig& cfg, const EstimatorSpec& est) {
  cfg.validate();
  check_estimator(est);
  std::vector<RepOutcome> reps;
  reps.reserve(cfg.reps);
  for (std::size_t r = 0; r < cfg.reps; ++r) reps.push_back(simulate_rep(cfg, est, r));
  return summarize(cfg, est, reps);
}

}  // namespace rdx
