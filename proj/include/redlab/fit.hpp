#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "redlab/gap.hpp"

namespace redlab {

struct FitConfig {
  GapDefinition gap_def = GapDefinition::logit;
  int replicates = 1000;
  std::uint64_t seed = 0;
  bool clamp_slope_nonneg = false;
  bool include_direct_query_row = true;
  double alpha = 0.05;  // interval level used for reported metrics
  // Fit every replicate on the observations as-is instead of resampling;
  // with replicates=1 this reduces to plain least squares.
  bool identity_resample = false;
};

// One bootstrap resample: ML line parameters plus the residual standard
// deviation in logit space.
struct FitReplicate {
  double w = 0.0;
  double b = 0.0;
  double sigma = 0.0;
};

struct FitResult {
  std::string target_id;
  FitConfig config;
  std::vector<FitReplicate> replicates;
  double median_k = 0.0;  // componentwise medians over replicates
  double median_b = 0.0;
  std::vector<GapObservation> observations;
  int skipped_replicates = 0;  // degenerate resamples dropped after redraws
};

struct Interval {
  double lower = 0.0;
  double median = 0.0;
  double upper = 0.0;
};

// Ordinary least squares of z on delta; sigma is sqrt(mean squared residual).
FitReplicate least_squares(const std::vector<double>& deltas, const std::vector<double>& zs);

FitResult fit_bootstrap(const std::vector<GapObservation>& observations, const FitConfig& cfg);

// Quantiles (alpha/2, 1/2, 1-alpha/2) of the equal-weight normal mixture over
// replicates, evaluated at the given gap and mapped through the sigmoid. The
// mixture CDF is inverted by bisection to 1e-6 in logit units.
Interval predictive_interval(const FitResult& fit, double delta, double alpha);

// Equal-weight mixture over the targets' replicate mixtures.
Interval aggregate_family(const std::vector<FitResult>& fits, double delta, double alpha);

double r2_logit(const FitResult& fit, const std::vector<GapObservation>& observations);
double r2_prob(const FitResult& fit, const std::vector<GapObservation>& observations);

// Fraction of observations whose clipped ASR falls outside the predictive
// interval at level alpha. Clipped values are the quantity the model explains;
// raw 0/1 rates have no finite logit and would sit outside any interval.
double miscoverage(const FitResult& fit, const std::vector<GapObservation>& observations,
                   double alpha);

// Interval width plus 2/alpha times the distance of y from the violated end.
double winkler(double lower, double upper, double y, double alpha);

double mean_winkler(const FitResult& fit, const std::vector<GapObservation>& observations,
                    double alpha);

double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys);

struct ForecastPoint {
  double target_score = 0.0;
  double delta = 0.0;
  double asr = 0.0;
};

// ASR = sigmoid(k * (logit(attacker) - logit(target)) + b) per target score.
std::vector<ForecastPoint> forecast_fixed_attacker(double k, double b, double attacker_score,
                                                   const std::vector<double>& target_scores);

// --- report / export ---------------------------------------------------------------

struct FitMetrics {
  double r2_logit = 0.0;
  double r2_prob = 0.0;
  double miscoverage_pct = 0.0;
  double winkler_mean = 0.0;
};

FitMetrics fit_metrics(const FitResult& fit);

struct CurvePoint {
  double delta = 0.0;
  Interval interval;
};

std::vector<CurvePoint> predictive_curve(const FitResult& fit, double lo, double hi, double step,
                                         double alpha);
std::vector<CurvePoint> family_curve(const std::vector<FitResult>& fits, double lo, double hi,
                                     double step, double alpha);

std::string fit_report_json(const std::vector<FitResult>& fits, bool emit_replicates);
std::string curve_to_csv(const std::vector<CurvePoint>& curve);
std::string forecast_to_csv(const std::vector<ForecastPoint>& curve);

}  // namespace redlab
