#include "redlab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "redlab/csv.hpp"
#include "redlab/errors.hpp"
#include "redlab/util.hpp"

namespace redlab {

using ordered_json = nlohmann::ordered_json;

namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct MixtureComponent {
  double mu;
  double sigma;
  double weight;
};

double mixture_cdf(const std::vector<MixtureComponent>& mix, double z) {
  double acc = 0.0;
  for (const auto& c : mix) {
    // sigma = 0 components are point masses; >= keeps the CDF right-continuous
    // so bisection converges onto the mass.
    const double f = c.sigma <= 0.0 ? (z >= c.mu ? 1.0 : 0.0) : normal_cdf((z - c.mu) / c.sigma);
    acc += c.weight * f;
  }
  return acc;
}

double mixture_quantile(const std::vector<MixtureComponent>& mix, double p) {
  if (mix.empty()) throw DomainError("mixture quantile: empty replicate set");
  double lo = mix.front().mu, hi = mix.front().mu, max_sigma = 0.0;
  for (const auto& c : mix) {
    lo = std::min(lo, c.mu);
    hi = std::max(hi, c.mu);
    max_sigma = std::max(max_sigma, c.sigma);
  }
  lo -= 10.0 * max_sigma + 1.0;
  hi += 10.0 * max_sigma + 1.0;
  while (mixture_cdf(mix, lo) > p) lo -= (hi - lo);
  while (mixture_cdf(mix, hi) < p) hi += (hi - lo);
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (mixture_cdf(mix, mid) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<MixtureComponent> mixture_at(const std::vector<FitResult>& fits, double delta) {
  std::vector<MixtureComponent> mix;
  if (fits.empty()) throw DomainError("predictive mixture: no fits");
  const double per_target = 1.0 / static_cast<double>(fits.size());
  for (const auto& fit : fits) {
    if (fit.replicates.empty()) throw DomainError("predictive mixture: empty replicate set");
    const double w = per_target / static_cast<double>(fit.replicates.size());
    for (const auto& rep : fit.replicates) {
      mix.push_back({rep.w * delta + rep.b, rep.sigma, w});
    }
  }
  return mix;
}

Interval interval_from_mixture(const std::vector<MixtureComponent>& mix, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("interval level alpha outside (0,1]");
  Interval out;
  out.lower = sigmoid(mixture_quantile(mix, alpha / 2.0));
  out.median = sigmoid(mixture_quantile(mix, 0.5));
  out.upper = sigmoid(mixture_quantile(mix, 1.0 - alpha / 2.0));
  return out;
}

}  // namespace

FitReplicate least_squares(const std::vector<double>& deltas, const std::vector<double>& zs) {
  if (deltas.size() != zs.size() || deltas.size() < 2) {
    throw DomainError("least_squares: need >= 2 paired points");
  }
  const double n = static_cast<double>(deltas.size());
  double mx = 0.0, mz = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    mx += deltas[i];
    mz += zs[i];
  }
  mx /= n;
  mz /= n;
  double sxx = 0.0, sxz = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    sxx += (deltas[i] - mx) * (deltas[i] - mx);
    sxz += (deltas[i] - mx) * (zs[i] - mz);
  }
  if (sxx == 0.0) throw DomainError("least_squares: all gaps identical");
  FitReplicate rep;
  rep.w = sxz / sxx;
  rep.b = mz - rep.w * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double r = zs[i] - (rep.w * deltas[i] + rep.b);
    sse += r * r;
  }
  rep.sigma = std::sqrt(sse / n);
  return rep;
}

FitResult fit_bootstrap(const std::vector<GapObservation>& observations, const FitConfig& cfg) {
  if (observations.size() < 3) {
    throw DomainError("fit_bootstrap: need at least 3 attacker points, got " +
                      std::to_string(observations.size()));
  }
  for (const auto& o : observations) {
    if (o.target_id != observations.front().target_id) {
      throw ValidationError("fit_bootstrap: observations span multiple targets ('" +
                            observations.front().target_id + "' vs '" + o.target_id + "')");
    }
  }
  std::set<double> distinct;
  for (const auto& o : observations) distinct.insert(o.delta);
  if (distinct.size() < 2) {
    throw DomainError("fit_bootstrap: all observations share one gap value");
  }

  const std::size_t n = observations.size();
  std::vector<double> deltas(n), zs(n);

  FitResult result;
  result.target_id = observations.front().target_id;
  result.config = cfg;
  result.observations = observations;
  result.replicates.reserve(cfg.replicates);

  for (int rep_idx = 0; rep_idx < cfg.replicates; ++rep_idx) {
    bool usable = false;
    if (cfg.identity_resample) {
      for (std::size_t i = 0; i < n; ++i) {
        deltas[i] = observations[i].delta;
        zs[i] = observations[i].z;
      }
      usable = true;
    } else {
      Rng rng(mix64(cfg.seed, static_cast<std::uint64_t>(rep_idx)));
      for (int attempt = 0; attempt < 100 && !usable; ++attempt) {
        double first = 0.0;
        bool varied = false;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& o = observations[rng.below(n)];
          deltas[i] = o.delta;
          zs[i] = o.z;
          if (i == 0) first = o.delta;
          else if (o.delta != first) varied = true;
        }
        usable = varied;
      }
    }
    if (!usable) {
      ++result.skipped_replicates;
      continue;
    }
    FitReplicate rep = least_squares(deltas, zs);
    if (cfg.clamp_slope_nonneg && rep.w < 0.0) {
      // Constrained ML at the boundary: slope zero, intercept the mean,
      // residuals recomputed.
      rep.w = 0.0;
      double mz = 0.0;
      for (double z : zs) mz += z;
      rep.b = mz / static_cast<double>(n);
      double sse = 0.0;
      for (double z : zs) sse += (z - rep.b) * (z - rep.b);
      rep.sigma = std::sqrt(sse / static_cast<double>(n));
    }
    result.replicates.push_back(rep);
  }

  if (result.replicates.empty()) {
    throw DomainError("fit_bootstrap: every resample was degenerate");
  }

  std::vector<double> ws, bs;
  ws.reserve(result.replicates.size());
  bs.reserve(result.replicates.size());
  for (const auto& rep : result.replicates) {
    ws.push_back(rep.w);
    bs.push_back(rep.b);
  }
  result.median_k = median_of(std::move(ws));
  result.median_b = median_of(std::move(bs));
  return result;
}

Interval predictive_interval(const FitResult& fit, double delta, double alpha) {
  return interval_from_mixture(mixture_at({fit}, delta), alpha);
}

Interval aggregate_family(const std::vector<FitResult>& fits, double delta, double alpha) {
  return interval_from_mixture(mixture_at(fits, delta), alpha);
}

namespace {

double r_squared(const std::vector<double>& observed, const std::vector<double>& predicted) {
  const double n = static_cast<double>(observed.size());
  double mean = 0.0;
  for (double v : observed) mean += v;
  mean /= n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    sse += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    sst += (observed[i] - mean) * (observed[i] - mean);
  }
  if (sst == 0.0) throw DomainError("r_squared: zero-variance observations");
  return 1.0 - sse / sst;
}

}  // namespace

double r2_logit(const FitResult& fit, const std::vector<GapObservation>& observations) {
  if (observations.empty()) throw DomainError("r2_logit: no observations");
  std::vector<double> obs, pred;
  for (const auto& o : observations) {
    if (o.target_id != fit.target_id) {
      throw ValidationError("r2_logit: observation target mismatch");
    }
    obs.push_back(o.z);
    pred.push_back(fit.median_k * o.delta + fit.median_b);
  }
  return r_squared(obs, pred);
}

double r2_prob(const FitResult& fit, const std::vector<GapObservation>& observations) {
  if (observations.empty()) throw DomainError("r2_prob: no observations");
  std::vector<double> obs, pred;
  for (const auto& o : observations) {
    if (o.target_id != fit.target_id) {
      throw ValidationError("r2_prob: observation target mismatch");
    }
    obs.push_back(o.y);
    pred.push_back(sigmoid(fit.median_k * o.delta + fit.median_b));
  }
  return r_squared(obs, pred);
}

double miscoverage(const FitResult& fit, const std::vector<GapObservation>& observations,
                   double alpha) {
  if (observations.empty()) return 0.0;
  int outside = 0;
  for (const auto& o : observations) {
    const Interval iv = predictive_interval(fit, o.delta, alpha);
    if (o.y_clipped < iv.lower || o.y_clipped > iv.upper) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(observations.size());
}

double winkler(double lower, double upper, double y, double alpha) {
  if (lower > upper) throw DomainError("winkler: inverted interval");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("winkler: alpha outside (0,1)");
  double score = upper - lower;
  if (y < lower) score += (2.0 / alpha) * (lower - y);
  else if (y > upper) score += (2.0 / alpha) * (y - upper);
  return score;
}

double mean_winkler(const FitResult& fit, const std::vector<GapObservation>& observations,
                    double alpha) {
  if (observations.empty()) throw DomainError("mean_winkler: no observations");
  double acc = 0.0;
  for (const auto& o : observations) {
    const Interval iv = predictive_interval(fit, o.delta, alpha);
    acc += winkler(iv.lower, iv.upper, o.y_clipped, alpha);
  }
  return acc / static_cast<double>(observations.size());
}

double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 3) {
    throw DomainError("pearson_r: need >= 3 paired points");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson_r: degenerate variance");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<ForecastPoint> forecast_fixed_attacker(double k, double b, double attacker_score,
                                                   const std::vector<double>& target_scores) {
  const double attacker_logit = logit(attacker_score);
  std::vector<ForecastPoint> out;
  out.reserve(target_scores.size());
  for (double t : target_scores) {
    ForecastPoint p;
    p.target_score = t;
    p.delta = attacker_logit - logit(t);
    p.asr = sigmoid(k * p.delta + b);
    out.push_back(p);
  }
  return out;
}

// --- report / export -------------------------------------------------------------------

FitMetrics fit_metrics(const FitResult& fit) {
  FitMetrics m;
  m.r2_logit = r2_logit(fit, fit.observations);
  m.r2_prob = r2_prob(fit, fit.observations);
  m.miscoverage_pct = 100.0 * miscoverage(fit, fit.observations, fit.config.alpha);
  m.winkler_mean = mean_winkler(fit, fit.observations, fit.config.alpha);
  return m;
}

std::vector<CurvePoint> predictive_curve(const FitResult& fit, double lo, double hi, double step,
                                         double alpha) {
  return family_curve({fit}, lo, hi, step, alpha);
}

std::vector<CurvePoint> family_curve(const std::vector<FitResult>& fits, double lo, double hi,
                                     double step, double alpha) {
  if (step <= 0.0) throw DomainError("curve: step must be positive");
  std::vector<CurvePoint> out;
  for (int i = 0;; ++i) {
    const double delta = lo + i * step;
    if (delta > hi + 1e-12) break;
    out.push_back({delta, aggregate_family(fits, delta, alpha)});
  }
  return out;
}

namespace {

ordered_json config_json(const FitConfig& cfg) {
  ordered_json j;
  j["gap_def"] = to_string(cfg.gap_def);
  j["replicates"] = cfg.replicates;
  j["seed"] = cfg.seed;
  j["clamp_slope_nonneg"] = cfg.clamp_slope_nonneg;
  j["include_direct_query_row"] = cfg.include_direct_query_row;
  j["alpha"] = cfg.alpha;
  j["identity_resample"] = cfg.identity_resample;
  return j;
}

}  // namespace

std::string fit_report_json(const std::vector<FitResult>& fits, bool emit_replicates) {
  ordered_json targets = ordered_json::array();
  double sum_r2l = 0.0, sum_r2p = 0.0, sum_mis = 0.0, sum_wink = 0.0;
  for (const auto& fit : fits) {
    const FitMetrics m = fit_metrics(fit);
    ordered_json t;
    t["target"] = fit.target_id;
    t["n_obs"] = fit.observations.size();
    t["median_k"] = fit.median_k;
    t["median_b"] = fit.median_b;
    t["r2_logit"] = m.r2_logit;
    t["r2_prob"] = m.r2_prob;
    t["miscoverage_pct"] = m.miscoverage_pct;
    t["winkler_mean"] = m.winkler_mean;
    t["skipped_replicates"] = fit.skipped_replicates;
    if (emit_replicates) {
      ordered_json reps = ordered_json::array();
      for (const auto& r : fit.replicates) reps.push_back({r.w, r.b, r.sigma});
      t["replicates"] = std::move(reps);
    }
    ordered_json obs = ordered_json::array();
    for (const auto& o : fit.observations) {
      obs.push_back({{"attacker", o.attacker_id},
                     {"delta", o.delta},
                     {"y", o.y},
                     {"y_clipped", o.y_clipped},
                     {"trials", o.trials}});
    }
    t["observations"] = std::move(obs);
    targets.push_back(std::move(t));
    sum_r2l += m.r2_logit;
    sum_r2p += m.r2_prob;
    sum_mis += m.miscoverage_pct;
    sum_wink += m.winkler_mean;
  }

  ordered_json doc;
  doc["config"] = fits.empty() ? ordered_json::object() : config_json(fits.front().config);
  doc["targets"] = std::move(targets);
  if (!fits.empty()) {
    const double n = static_cast<double>(fits.size());
    ordered_json avg;
    avg["r2_logit"] = sum_r2l / n;
    avg["r2_prob"] = sum_r2p / n;
    avg["miscoverage_pct"] = sum_mis / n;
    avg["winkler_mean"] = sum_wink / n;
    doc["averages"] = std::move(avg);
  }
  return doc.dump(2) + "\n";
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "delta,lower,median,upper\n";
  for (const auto& p : curve) {
    out += csv_join({format_double(p.delta), format_double(p.interval.lower), format_double(p.interval.median),
                     format_double(p.interval.upper)});
  }
  return out;
}

std::string forecast_to_csv(const std::vector<ForecastPoint>& curve) {
  std::string out = "target_score,delta,asr\n";
  for (const auto& p : curve) {
    out += csv_join({format_double(p.target_score), format_double(p.delta), format_double(p.asr)});
  }
  return out;
}

}  // namespace redlab
