#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rdx/dataset.hpp"
#include "rdx/errors.hpp"

namespace rdx {

enum class Adjustment { Constant, Linear };

const char* to_string(Adjustment a);

/// The k rows nearest to `center`; every row tied with the k-th distance is
/// included, so members.size() can exceed k.
struct LRWindow {
  double center = 0.0;
  std::size_t k = 0;
  /// View positions, ordered by score (ties by position).
  std::vector<std::size_t> members;
  double half_width = 0.0;
};

LRWindow build_window(const Dataset& ds, double center, std::size_t k);

struct LRCounts {
  std::size_t low_at_low = 0;    // controls facing the low cutoff, window at low
  std::size_t high_at_low = 0;   // high-cutoff units, window at low
  std::size_t low_at_xbar = 0;   // treated units facing the low cutoff, window at xbar
  std::size_t high_at_xbar = 0;  // high-cutoff controls, window at xbar
};

struct LRResult {
  double xbar = 0.0;
  std::size_t k = 0;
  Adjustment adjustment = Adjustment::Constant;
  double delta_hat = 0.0;
  double tau_hat = 0.0;
  double V1 = 0.0;
  double V_delta = 0.0;
  double t_stat = 0.0;
  double p_neyman = 1.0;
  /// Berger-Boos p-value p*(eta); NaN until computed.
  double p_fisher_bb = std::numeric_limits<double>::quiet_NaN();
  double eta = 0.01;
  std::size_t permutations = 0;
  bool exhaustive = false;
  std::size_t grid_size = 0;
  LRCounts counts;
  LRWindow window_low;
  LRWindow window_xbar;
};

/// Point estimates: cell means (constant) or cell intercepts of y on
/// (x - center) (linear). Inference fields are left unset.
LRResult lr_estimate(const Dataset& ds, const CutoffPair& pair, double xbar, std::size_t k,
                     Adjustment adjustment);

struct NeymanResult {
  double t_stat = 0.0;
  double p_value = 1.0;
};

/// Studentized statistic tau / sqrt(V1 + V_delta) with a normal p-value.
NeymanResult neyman_test(const LRResult& lr);

/// Outcomes, scores and cutoff labels of the window at xbar.
struct PermutationProblem {
  std::vector<double> y;
  std::vector<double> x;
  std::vector<char> is_low;
  double center = 0.0;
  Adjustment adjustment = Adjustment::Constant;
};

PermutationProblem permutation_problem(const Dataset& ds, const CutoffPair& pair, double xbar,
                                       std::size_t k, Adjustment adjustment);

struct RandomizationResult {
  double p_value = 1.0;
  double statistic = 0.0;
  std::size_t draws = 0;
  bool exhaustive = false;
};

/// Number of relabelings that keep the group counts, saturating at `cap`+1.
std::uint64_t relabeling_count(std::size_t n, std::size_t n_low, std::uint64_t cap);

/// Randomization p-value of no effect given the control shift `delta`:
/// outcomes of high-cutoff units are moved by +delta and the cutoff labels
/// permuted with fixed group counts; the statistic is the absolute
/// difference in (adjusted) means. All relabelings are enumerated when there
/// are at most `draws` of them; otherwise p = (1 + #{|T*| >= |T|}) / (draws + 1)
/// over random relabelings. Draw m uses stream m of `seed`, so every Delta
/// sees the same relabelings.
RandomizationResult randomization_pvalue(const PermutationProblem& prob, double delta,
                                         std::size_t draws, std::uint64_t seed);
/// Same result computed without threads.
RandomizationResult randomization_pvalue_serial(const PermutationProblem& prob, double delta,
                                                std::size_t draws, std::uint64_t seed);

struct BergerBoosResult {
  double p_star = 1.0;
  double eta = 0.01;
  std::vector<double> grid;
  std::vector<double> p_values;
  bool exhaustive = false;
};

/// p*(eta) = max over an equidistant grid on the (1 - eta) normal interval
/// for Delta of p(Delta), plus eta.
BergerBoosResult bergerboos_pvalue(const Dataset& ds, const CutoffPair& pair, double xbar,
                                   std::size_t k, Adjustment adjustment, double eta = 0.01,
                                   std::size_t draws = 2000, std::size_t grid = 100,
                                   std::uint64_t seed = 1, bool parallel = true);

/// Estimates plus Neyman and Berger-Boos inference.
LRResult local_randomization(const Dataset& ds, const CutoffPair& pair, double xbar,
                             std::size_t k, Adjustment adjustment, double eta = 0.01,
                             std::size_t draws = 2000, std::size_t grid = 100,
                             std::uint64_t seed = 1);

struct SensitivityRow {
  std::size_t k = 0;
  std::optional<LRResult> result;
  std::optional<ErrorKind> error;
  std::string message;
};

std::vector<SensitivityRow> lr_sensitivity(const Dataset& ds, const CutoffPair& pair, double xbar,
                                           const std::vector<std::size_t>& k_list,
                                           Adjustment adjustment, double eta = 0.01,
                                           std::size_t draws = 2000, std::size_t grid = 100,
                                           std::uint64_t seed = 1);

}  // namespace rdx
