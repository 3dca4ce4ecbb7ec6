#pragma once

#include <cmath>
#include <string>

#include "redlab/errors.hpp"

namespace redlab {

enum class GapDefinition { abs, log_score, log_err, logit };

inline std::string to_string(GapDefinition def) {
  switch (def) {
    case GapDefinition::abs: return "abs";
    case GapDefinition::log_score: return "log_score";
    case GapDefinition::log_err: return "log_err";
    case GapDefinition::logit: return "logit";
  }
  return "?";
}

inline GapDefinition gap_definition_from_string(const std::string& s) {
  if (s == "abs") return GapDefinition::abs;
  if (s == "log_score") return GapDefinition::log_score;
  if (s == "log_err") return GapDefinition::log_err;
  if (s == "logit") return GapDefinition::logit;
  throw ValidationError("unknown gap definition '" + s + "'");
}

// log(p / (1-p)), natural base.
inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("logit: argument " + std::to_string(p) + " outside (0,1)");
  }
  return std::log(p / (1.0 - p));
}

inline double sigmoid(double z) {
  // Split on the sign to avoid overflow in exp.
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Clamp an observed success rate into [1/(2N), (2N-1)/(2N)]: half the
// resolution of an N-trial score, keeping the logit finite.
inline double clip_asr(double y, int n_trials) {
  if (n_trials < 1) throw DomainError("clip_asr: N must be >= 1");
  const double lo = 1.0 / (2.0 * n_trials);
  const double hi = (2.0 * n_trials - 1.0) / (2.0 * n_trials);
  if (y < lo) return lo;
  if (y > hi) return hi;
  return y;
}

// Capability gap between attacker score a and target score t, both in (0,1).
//   abs:       a - t
//   log_score: log(a / t)
//   log_err:   log((1-t) / (1-a))
//   logit:     logit(a) - logit(t)  ( = log_score + log_err )
inline double gap(GapDefinition def, double a, double t) {
  if (!(a > 0.0 && a < 1.0) || !(t > 0.0 && t < 1.0)) {
    throw DomainError("gap: scores must lie in the open interval (0,1)");
  }
  switch (def) {
    case GapDefinition::abs: return a - t;
    case GapDefinition::log_score: return std::log(a / t);
    case GapDefinition::log_err: return std::log((1.0 - t) / (1.0 - a));
    case GapDefinition::logit: return logit(a) - logit(t);
  }
  throw DomainError("gap: bad definition");
}

// One attacker->target data point of a per-target fit.
struct GapObservation {
  std::string attacker_id;
  std::string target_id;
  double delta = 0.0;
  double successes = 0.0;  // integral for synthetic data; y * trials otherwise
  int trials = 1;          // resolution anchor for clipping
  double y = 0.0;
  double y_clipped = 0.0;
  double z = 0.0;  // logit(y_clipped)
};

inline GapObservation make_observation(std::string attacker_id, std::string target_id, double delta,
                                       double successes, int trials) {
  GapObservation o;
  o.attacker_id = std::move(attacker_id);
  o.target_id = std::move(target_id);
  o.delta = delta;
  o.successes = successes;
  o.trials = trials;
  o.y = successes / trials;
  o.y_clipped = clip_asr(o.y, trials);
  o.z = logit(o.y_clipped);
  return o;
}

inline GapObservation make_observation_from_asr(std::string attacker_id, std::string target_id,
                                                double delta, double asr, int trials) {
  GapObservation o;
  o.attacker_id = std::move(attacker_id);
  o.target_id = std::move(target_id);
  o.delta = delta;
  o.trials = trials;
  o.successes = asr * trials;
  o.y = asr;
  o.y_clipped = clip_asr(asr, trials);
  o.z = logit(o.y_clipped);
  return o;
}

}  // namespace redlab
