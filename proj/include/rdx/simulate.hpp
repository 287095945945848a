#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rdx/dataset.hpp"
#include "rdx/errors.hpp"
#include "rdx/locfit.hpp"

namespace rdx {

/// Two-cutoff design with X ~ Uniform(-1000, -1), fixed-margins cutoff
/// labels independent of X and
///   Y = mu_{0,H}(X) + tau * D + Delta * 1(C = ell) + Normal(0, sigma^2),
/// where mu_{0,H} is a quartic with coefficients gamma (constant first).
struct SimulationConfig {
  std::array<double, 5> gamma{-14.089, -0.074, -1.372e-4, -1.125e-7, -3.444e-11};
  double Delta = -0.14;
  double tau = 0.19;
  double sigma = 0.3;
  std::size_t N = 1000;
  /// Units facing ell; 0 means N / 2.
  std::size_t N_ell = 0;
  double ell = -850.0;
  double H = -571.0;
  double xbar = -650.0;
  std::size_t reps = 1000;
  std::uint64_t seed = 1;
  /// Share of compliers among units above their cutoff; the rest are
  /// never-takers. 1 gives a sharp design.
  double complier_share = 1.0;

  std::size_t n_ell() const { return N_ell == 0 ? N / 2 : N_ell; }
  double mu0H(double x) const;
  /// Throws InvalidArgument on an inconsistent configuration.
  void validate() const;
};

/// Reads a configuration from JSON or from key=value lines ('#' starts a
/// comment). Keys match the field names; gamma is a list of five numbers.
SimulationConfig parse_simulation_config(const std::string& text);
SimulationConfig load_simulation_config(const std::string& path);

Dataset generate_sample(const SimulationConfig& cfg, std::uint64_t rep_seed);

/// Estimator run on every replication. Names: extrapolate_sharp,
/// extrapolate_fuzzy, extrapolate_polybias (uses s_max).
struct EstimatorSpec {
  std::string name = "extrapolate_sharp";
  FitSpec fit;
  int s_max = 1;
  double level = 0.95;
};

struct RepOutcome {
  bool ok = false;
  double tau_hat = 0.0;
  double se_rbc = 0.0;
  bool covered = false;
  std::vector<std::string> labels;
  std::vector<double> bandwidths;
  std::vector<double> eff_n;
  std::optional<ErrorKind> error;
};

struct SimulationSummary {
  std::string estimator;
  std::size_t reps = 0;
  std::size_t reps_completed = 0;
  std::size_t failed = 0;
  double target = 0.0;
  double mean_tau_hat = 0.0;
  double bias = 0.0;
  /// Dispersion with divisor reps_completed, so rmse^2 = bias^2 + sd^2.
  double sd = 0.0;
  double rmse = 0.0;
  double coverage_rbc = 0.0;
  double mean_se_rbc = 0.0;
  std::vector<std::string> components;
  std::vector<double> mean_bandwidths;
  std::vector<double> mean_eff_n;
};

/// Seed of replication r.
std::uint64_t rep_seed(const SimulationConfig& cfg, std::size_t rep);

/// One replication. InsufficientData and other estimation failures are
/// reported in the outcome, not thrown.
RepOutcome simulate_rep(const SimulationConfig& cfg, const EstimatorSpec& est, std::size_t rep);

/// Replications run in parallel; results are gathered by index and reduced
/// in order, so the summary does not depend on the thread count.
SimulationSummary run_monte_carlo(const SimulationConfig& cfg, const EstimatorSpec& est = {});
SimulationSummary run_monte_carlo_serial(const SimulationConfig& cfg,
                                         const EstimatorSpec& est = {});

}  // namespace rdx
