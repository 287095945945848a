#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rdx/dataset.hpp"
#include "rdx/errors.hpp"
#include "rdx/locfit.hpp"

namespace rdx {

/// Sharp RD effect at one cutoff: right limit minus left limit within the
/// group facing that cutoff.
struct RDEffect {
  double cutoff = 0.0;
  double tau = 0.0;
  double tau_rbc = 0.0;
  double se_conventional = 0.0;
  double se_rbc = 0.0;
  Interval ci_conventional;
  Interval ci_rbc;
  double p_value_rbc = 1.0;
  double h_left = 0.0;
  double h_right = 0.0;
  std::size_t n_eff_left = 0;
  std::size_t n_eff_right = 0;
  RbcResult left;
  RbcResult right;
};

RDEffect estimate_cutoff_effect(const Dataset& ds, double cutoff, const FitSpec& spec,
                                double level = 0.95);

/// Effect at zero after recentring every score at its own cutoff.
RDEffect pooled_effect(const Dataset& ds, const FitSpec& spec, double level = 0.95);

struct WeightedEffect {
  std::vector<double> cutoffs;
  std::vector<double> weights;
  double estimate = 0.0;
  double se = 0.0;
  double estimate_rbc = 0.0;
  double se_rbc = 0.0;
  Interval ci_rbc;
  double p_value_rbc = 1.0;
};

/// Average of cutoff-specific effects weighted by f(c | C = c) * P(C = c).
/// The density uses a triangular kernel at the cutoff with bandwidth equal to
/// the mean of the effect's two bandwidths. Weights are treated as fixed.
WeightedEffect weighted_average_effect(const std::vector<RDEffect>& effects, const Dataset& ds,
                                       double level = 0.95);

/// One term of an extrapolated estimate: coef * (fit at x0).
struct Component {
  std::string label;
  double coef = 0.0;
  double x0 = 0.0;
  /// Index of the sample view the fit was computed on; fits on different
  /// views share no observations.
  int view = 0;
  RbcResult rbc;

  double estimate() const { return rbc.fit.estimate; }
  double variance() const { return rbc.fit.variance; }
};

struct FirstStage {
  double estimate = 0.0;
  double se = 0.0;
  double estimate_rbc = 0.0;
  double se_rbc = 0.0;
  double itt = 0.0;
  double itt_se = 0.0;
  double itt_rbc = 0.0;
  double itt_se_rbc = 0.0;
  RbcResult fit;
};

struct ExtrapolationResult {
  double xbar = 0.0;
  double low = 0.0;
  double high = 0.0;
  double tau = 0.0;
  /// B(low) = mu_{0,low}(low-) - mu_{0,high}(low).
  double bias_low = 0.0;
  /// Derivative bias terms B^{(s)}(low), s = 0..order_bias.
  std::vector<double> bias_derivatives;
  /// The first four entries are mu_{1,low}(xbar), mu_{0,high}(xbar),
  /// mu_{0,low}(low), mu_{0,high}(low); derivative terms follow.
  std::vector<Component> components;
  double variance = 0.0;
  /// variance = sum coef^2 * var - 2 * cov_term.
  double cov_term = 0.0;
  double tau_rbc = 0.0;
  double variance_rbc = 0.0;
  double cov_term_rbc = 0.0;
  double level = 0.95;
  Interval ci_conventional;
  Interval ci_rbc;
  double p_value_rbc = 1.0;
  int order_bias = 0;
  std::optional<FirstStage> first_stage;

  double se() const;
  double se_rbc() const;
};

ExtrapolationResult extrapolate_sharp(const Dataset& ds, const CutoffPair& pair, double xbar,
                                      const FitSpec& spec, double level = 0.95);

struct GridPoint {
  double xbar = 0.0;
  std::optional<ExtrapolationResult> result;
  std::optional<ErrorKind> error;
  std::string message;
};

/// Pointwise extrapolation over a grid. The two fits at the low cutoff are
/// computed once; points are evaluated in parallel and returned in input
/// order. A failing point carries its error instead of a result.
std::vector<GridPoint> extrapolation_grid(const Dataset& ds, const CutoffPair& pair,
                                          const std::vector<double>& points, const FitSpec& spec,
                                          double level = 0.95);

/// Effect on compliers under one-sided noncompliance: the sharp double
/// difference on observed outcomes divided by the first stage at xbar.
ExtrapolationResult extrapolate_fuzzy(const Dataset& ds, const CutoffPair& pair, double xbar,
                                      const FitSpec& spec, double level = 0.95);

/// Control-function gap modelled as a polynomial of order s_max in the score
/// around the low cutoff.
ExtrapolationResult extrapolate_polybias(const Dataset& ds, const CutoffPair& pair, double xbar,
                                         const FitSpec& spec, int s_max, double level = 0.95);

struct CellDetail {
  std::string cell;
  double weight = 0.0;
  double propensity = 0.0;
  double frequency = 0.0;
  ExtrapolationResult result;
};

struct CovAdjResult {
  ExtrapolationResult aggregate;
  std::vector<CellDetail> cells;
  double bandwidth = 0.0;
};

/// Cell-wise extrapolation over discrete covariate cells, aggregated with
/// weights P(C=low | xbar, z) f(z | xbar) / P(C=low | xbar).
CovAdjResult extrapolate_covadj(const Dataset& ds, const CutoffPair& pair, double xbar,
                                const FitSpec& spec, double level = 0.95);

}  // namespace rdx
