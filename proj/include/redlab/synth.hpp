#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "redlab/fit.hpp"
#include "redlab/gap.hpp"

namespace redlab {

// Gaps are either given explicitly or drawn uniformly from a range.
struct DeltaRange {
  int count = 20;
  double lo = -4.0;
  double hi = 4.0;
};

struct SynthSpec {
  double true_k = 1.5;
  double true_b = 0.0;
  double true_sigma = 0.3;
  std::variant<std::vector<double>, DeltaRange> deltas = DeltaRange{};
  int trials = 25;  // binomial N per point
  std::uint64_t seed = 0;
  // Optional misspecification cohort: the last `outlier_count` points get the
  // given additive offset on the latent line, mimicking heavily safety-tuned
  // targets that sit off the capability trend.
  int outlier_count = 0;
  double outlier_offset = 0.0;
};

// Draw one population: z ~ Normal(k*delta + b, sigma), p = sigmoid(z),
// s ~ Binomial(N, p), y = s/N. Binomial quantization always applies so the
// data inherit the same clipping behavior as real best-of-N rates.
std::vector<GapObservation> generate_population(const SynthSpec& spec);

struct RecoveryReport {
  SynthSpec spec;
  FitConfig fit_config;
  int repetitions = 0;
  double mean_abs_err_k = 0.0;
  double mean_abs_err_b = 0.0;
  double coverage = 0.0;  // held-out points inside the (1-alpha) interval
  double alpha = 0.05;
  int fit_failures = 0;
  struct PerRep {
    std::uint64_t seed = 0;
    double median_k = 0.0;
    double median_b = 0.0;
    double coverage = 0.0;
    bool failed = false;
  };
  std::vector<PerRep> per_rep;
};

// Generate -> fit per repetition with derived seeds; reports mean absolute
// error of the median parameters and held-out coverage at level alpha.
// Coverage is evaluated on the clip-transformed scale: a raw rate of exactly
// 0 or 1 has no finite logit and can never fall inside a logit-space interval.
RecoveryReport recovery_experiment(const SynthSpec& spec, const FitConfig& fit_cfg,
                                   int repetitions, double alpha = 0.05);

std::string recovery_report_json(const RecoveryReport& report);
std::string recovery_report_csv(const RecoveryReport& report);

// Observation CSV shared by synth exports and `fit --obs-csv`. Columns:
// target_id,attacker_id,delta,successes,trials,y
std::string observations_to_csv(const std::vector<GapObservation>& observations);
std::vector<GapObservation> observations_from_csv(const std::string& csv_text,
                                                  const std::string& origin);

}  // namespace redlab
