#include <doctest.h>

#include <cmath>

#include "redlab/errors.hpp"
#include "redlab/fit.hpp"
#include "redlab/gap.hpp"
#include "redlab/util.hpp"

using namespace redlab;

namespace {

std::vector<GapObservation> obs_from(const std::vector<double>& deltas,
                                     const std::vector<double>& ys, int trials = 25) {
  std::vector<GapObservation> out;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    out.push_back(make_observation_from_asr("a" + std::to_string(i), "t", deltas[i], ys[i], trials));
  }
  return out;
}

// Independent least-squares oracle using the raw-sum formulation.
void ls_oracle(const std::vector<double>& xs, const std::vector<double>& zs, double& w, double& b) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sz = 0, sxx = 0, sxz = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sz += zs[i];
    sxx += xs[i] * xs[i];
    sxz += xs[i] * zs[i];
  }
  w = (n * sxz - sx * sz) / (n * sxx - sx * sx);
  b = (sz - w * sx) / n;
}

FitResult fit_of_replicates(std::vector<FitReplicate> reps) {
  FitResult fit;
  fit.target_id = "t";
  fit.replicates = std::move(reps);
  std::vector<double> ws, bs;
  for (const auto& r : fit.replicates) {
    ws.push_back(r.w);
    bs.push_back(r.b);
  }
  std::sort(ws.begin(), ws.end());
  std::sort(bs.begin(), bs.end());
  fit.median_k = ws[ws.size() / 2];
  fit.median_b = bs[bs.size() / 2];
  return fit;
}

}  // namespace

TEST_CASE("identity-resample fit matches the closed-form oracle") {
  Rng rng(31337);
  for (int dataset = 0; dataset < 10; ++dataset) {
    const int n = 4 + static_cast<int>(rng.below(6));
    std::vector<double> deltas, ys;
    for (int i = 0; i < n; ++i) {
      deltas.push_back(rng.uniform(-3.0, 3.0));
      ys.push_back(rng.uniform(0.05, 0.95));
    }
    const auto obs = obs_from(deltas, ys);

    FitConfig cfg;
    cfg.replicates = 1;
    cfg.identity_resample = true;
    const FitResult fit = fit_bootstrap(obs, cfg);

    std::vector<double> zs;
    for (const auto& o : obs) zs.push_back(o.z);
    double w_expect = 0, b_expect = 0;
    ls_oracle(deltas, zs, w_expect, b_expect);

    REQUIRE(fit.replicates.size() == 1);
    CHECK(std::abs(fit.replicates[0].w - w_expect) < 1e-10);
    CHECK(std::abs(fit.replicates[0].b - b_expect) < 1e-10);
    CHECK(fit.median_k == fit.replicates[0].w);
    CHECK(fit.median_b == fit.replicates[0].b);
  }
}

TEST_CASE("residual sigma follows the mean-squared formula") {
  const std::vector<double> deltas{-1.0, 0.0, 1.0, 2.0};
  const std::vector<double> ys{0.2, 0.4, 0.5, 0.9};
  const auto obs = obs_from(deltas, ys);
  FitConfig cfg;
  cfg.replicates = 1;
  cfg.identity_resample = true;
  const auto fit = fit_bootstrap(obs, cfg);
  double sse = 0.0;
  for (const auto& o : obs) {
    const double r = o.z - (fit.replicates[0].w * o.delta + fit.replicates[0].b);
    sse += r * r;
  }
  CHECK(fit.replicates[0].sigma ==
        doctest::Approx(std::sqrt(sse / static_cast<double>(obs.size()))).epsilon(1e-12));
}

TEST_CASE("fit_bootstrap rejects degenerate inputs") {
  CHECK_THROWS_AS(fit_bootstrap(obs_from({0.0, 1.0}, {0.2, 0.4}), FitConfig{}), DomainError);
  CHECK_THROWS_AS(fit_bootstrap(obs_from({1.0, 1.0, 1.0}, {0.2, 0.4, 0.6}), FitConfig{}),
                  DomainError);
  auto mixed_targets = obs_from({0.0, 1.0, 2.0}, {0.2, 0.4, 0.6});
  mixed_targets[1].target_id = "other";
  CHECK_THROWS_AS(fit_bootstrap(mixed_targets, FitConfig{}), ValidationError);
}

TEST_CASE("fit replays identically under the same seed and differs across seeds") {
  const auto obs = obs_from({-2, -1, 0, 1, 2}, {0.1, 0.2, 0.5, 0.7, 0.9});
  FitConfig cfg;
  cfg.replicates = 50;
  cfg.seed = 11;
  const auto a = fit_bootstrap(obs, cfg);
  const auto b = fit_bootstrap(obs, cfg);
  REQUIRE(a.replicates.size() == b.replicates.size());
  for (std::size_t i = 0; i < a.replicates.size(); ++i) {
    CHECK(a.replicates[i].w == b.replicates[i].w);
    CHECK(a.replicates[i].b == b.replicates[i].b);
    CHECK(a.replicates[i].sigma == b.replicates[i].sigma);
  }
  cfg.seed = 12;
  const auto c = fit_bootstrap(obs, cfg);
  CHECK(c.median_k != a.median_k);
}

TEST_CASE("clamped slopes stop at zero with the constrained intercept") {
  // decreasing data: unconstrained slope is negative
  const auto obs = obs_from({-2, -1, 0, 1, 2}, {0.9, 0.8, 0.5, 0.3, 0.1});
  FitConfig cfg;
  cfg.replicates = 20;
  cfg.clamp_slope_nonneg = true;
  const auto fit = fit_bootstrap(obs, cfg);
  for (const auto& r : fit.replicates) CHECK(r.w >= 0.0);
  CHECK(fit.median_k == 0.0);
}

TEST_CASE("logit-gap fits equal fits on decomposed deltas") {
  Rng rng(5);
  std::vector<GapObservation> via_logit, via_sum;
  for (int i = 0; i < 8; ++i) {
    const double a = rng.uniform(0.1, 0.9);
    const double t = 0.55;
    const double y = rng.uniform(0.05, 0.95);
    const double d_logit = gap(GapDefinition::logit, a, t);
    const double d_sum =
        gap(GapDefinition::log_score, a, t) + gap(GapDefinition::log_err, a, t);
    CHECK(std::abs(d_logit - d_sum) < 1e-12);
    via_logit.push_back(make_observation_from_asr("a" + std::to_string(i), "t", d_logit, y, 25));
    via_sum.push_back(make_observation_from_asr("a" + std::to_string(i), "t", d_sum, y, 25));
  }
  FitConfig cfg;
  cfg.replicates = 50;
  cfg.seed = 3;
  const auto f1 = fit_bootstrap(via_logit, cfg);
  const auto f2 = fit_bootstrap(via_sum, cfg);
  REQUIRE(f1.replicates.size() == f2.replicates.size());
  for (std::size_t i = 0; i < f1.replicates.size(); ++i) {
    CHECK(std::abs(f1.replicates[i].w - f2.replicates[i].w) < 1e-10);
    CHECK(std::abs(f1.replicates[i].b - f2.replicates[i].b) < 1e-10);
  }
}

// --- predictive intervals ----------------------------------------------------------

TEST_CASE("point-mass replicate collapses the interval") {
  const auto fit = fit_of_replicates({{1.0, 0.0, 0.0}});
  const Interval iv = predictive_interval(fit, 0.0, 0.05);
  CHECK(iv.lower == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(iv.median == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(iv.upper == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("unit-sigma replicate reproduces normal quantiles") {
  const auto fit = fit_of_replicates({{0.0, 0.0, 1.0}});
  const Interval iv = predictive_interval(fit, 0.0, 0.05);
  CHECK(iv.lower == doctest::Approx(sigmoid(-1.959964)).epsilon(1e-4));
  CHECK(iv.median == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(iv.upper == doctest::Approx(sigmoid(1.959964)).epsilon(1e-4));
}

TEST_CASE("two point masses bracket the mixture median") {
  const auto fit = fit_of_replicates({{1.0, 0.0, 1e-12}, {1.0, 2.0, 1e-12}});
  const Interval iv = predictive_interval(fit, 0.0, 0.5);
  CHECK(iv.median >= 0.5 - 1e-4);
  CHECK(iv.median <= sigmoid(2.0) + 1e-4);
  CHECK(iv.lower <= 0.5 + 1e-4);
  CHECK(iv.upper >= sigmoid(2.0) - 1e-4);
}

TEST_CASE("alpha=1 collapses the interval onto the median") {
  const auto fit = fit_of_replicates({{1.0, 0.3, 0.4}, {0.8, -0.1, 0.2}, {1.2, 0.0, 0.6}});
  const Interval iv = predictive_interval(fit, 0.7, 1.0);
  CHECK(iv.lower == doctest::Approx(iv.median).epsilon(1e-5));
  CHECK(iv.upper == doctest::Approx(iv.median).epsilon(1e-5));
}

TEST_CASE("interval is open whenever some replicate carries noise") {
  const auto fit = fit_of_replicates({{1.0, 0.0, 0.5}, {1.0, 0.0, 0.0}});
  const Interval iv = predictive_interval(fit, 1.0, 0.05);
  CHECK(iv.lower < iv.upper);
  CHECK(iv.lower < iv.median);
  CHECK(iv.median < iv.upper);
}

TEST_CASE("predictive interval requires replicates") {
  FitResult fit;
  fit.target_id = "t";
  CHECK_THROWS_AS(predictive_interval(fit, 0.0, 0.05), DomainError);
}

TEST_CASE("family aggregation: one fit equals its own interval") {
  const auto fit = fit_of_replicates({{1.3, 0.2, 0.3}, {1.1, -0.2, 0.4}, {0.9, 0.1, 0.2}});
  const Interval one = predictive_interval(fit, 0.5, 0.05);
  const Interval fam = aggregate_family({fit}, 0.5, 0.05);
  CHECK(fam.lower == doctest::Approx(one.lower).epsilon(1e-6));
  CHECK(fam.median == doctest::Approx(one.median).epsilon(1e-6));
  CHECK(fam.upper == doctest::Approx(one.upper).epsilon(1e-6));

  const Interval dup = aggregate_family({fit, fit}, 0.5, 0.05);
  CHECK(dup.median == doctest::Approx(one.median).epsilon(1e-6));
  CHECK(dup.lower == doctest::Approx(one.lower).epsilon(1e-6));
  CHECK(dup.upper == doctest::Approx(one.upper).epsilon(1e-6));

  CHECK_THROWS_AS(aggregate_family({}, 0.0, 0.05), DomainError);
}

TEST_CASE("saturated regime: deep negative gaps predict low ASR") {
  // paper-plausible parameters: k >= 1, b <= 0.5
  std::vector<FitResult> fits;
  fits.push_back(fit_of_replicates({{1.0, 0.5, 0.3}}));
  fits.push_back(fit_of_replicates({{1.5, 0.0, 0.2}}));
  fits.push_back(fit_of_replicates({{2.0, -0.5, 0.4}}));
  const Interval iv = aggregate_family(fits, -3.5, 0.05);
  CHECK(iv.median < 0.2);
}

// --- fit quality metrics --------------------------------------------------------------

TEST_CASE("r2 is one on an exact line and <= 0 for constant predictions") {
  std::vector<GapObservation> on_line;
  for (double d : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    on_line.push_back(make_observation_from_asr("a", "t", d, sigmoid(1.2 * d + 0.3), 25));
  }
  FitConfig cfg;
  cfg.replicates = 1;
  cfg.identity_resample = true;
  const auto fit = fit_bootstrap(on_line, cfg);
  CHECK(r2_logit(fit, on_line) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r2_prob(fit, on_line) == doctest::Approx(1.0).epsilon(1e-9));

  auto flat = fit_of_replicates({{0.0, 0.0, 0.1}});
  CHECK(r2_logit(flat, on_line) <= 0.0);
  CHECK(r2_prob(flat, on_line) <= 0.0);

  std::vector<GapObservation> constant;
  for (double d : {-1.0, 0.0, 1.0}) {
    constant.push_back(make_observation_from_asr("a", "t", d, 0.5, 25));
  }
  CHECK_THROWS_AS(r2_logit(fit_of_replicates({{1.0, 0.0, 0.1}}), constant), DomainError);
}

TEST_CASE("miscoverage counts points outside the interval") {
  // single replicate (w=0, b=0, sigma=1): every delta has the same interval
  const auto fit = fit_of_replicates({{0.0, 0.0, 1.0}});
  const double lower = sigmoid(-1.959964);
  std::vector<GapObservation> obs;
  for (int i = 0; i < 19; ++i) {
    obs.push_back(make_observation_from_asr("a", "t", static_cast<double>(i) / 10.0, 0.5, 25));
  }
  obs.push_back(make_observation_from_asr("a", "t", 2.0, lower / 2.0, 25));  // below the band
  CHECK(miscoverage(fit, obs, 0.05) == doctest::Approx(0.05));
  obs.pop_back();
  obs.push_back(make_observation_from_asr("a", "t", 2.0, 0.5, 25));
  CHECK(miscoverage(fit, obs, 0.05) == 0.0);
}

TEST_CASE("winkler interval score") {
  CHECK(winkler(0.2, 0.6, 0.4, 0.05) == doctest::Approx(0.4));
  CHECK(winkler(0.2, 0.6, 0.7, 0.05) == doctest::Approx(4.4));
  CHECK(winkler(0.2, 0.6, 0.1, 0.05) == doctest::Approx(4.4));
  CHECK(winkler(0.2, 0.6, 0.2, 0.05) == doctest::Approx(0.4));  // boundary counts as inside
  CHECK_THROWS_AS(winkler(0.6, 0.2, 0.4, 0.05), DomainError);
  CHECK_THROWS_AS(winkler(0.2, 0.6, 0.4, 0.0), DomainError);
}

TEST_CASE("pearson_r matches an independent sum-formula oracle") {
  std::vector<double> xs{1, 2, 3, 4};
  std::vector<double> lin{3, 5, 7, 9};  // 2x + 1
  CHECK(pearson_r(xs, lin) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> neg{-1, -2, -3, -4};
  CHECK(pearson_r(xs, neg) == doctest::Approx(-1.0).epsilon(1e-12));

  Rng rng(17);
  std::vector<double> x2, y2;
  for (int i = 0; i < 30; ++i) {
    x2.push_back(static_cast<double>(i));
    y2.push_back(-static_cast<double>(i) + rng.normal(0.0, 2.0));
  }
  const double n = 30.0;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < 30; ++i) {
    sx += x2[i];
    sy += y2[i];
    sxx += x2[i] * x2[i];
    syy += y2[i] * y2[i];
    sxy += x2[i] * y2[i];
  }
  const double oracle = (n * sxy - sx * sy) /
                        std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  CHECK(pearson_r(x2, y2) == doctest::Approx(oracle).epsilon(1e-12));

  CHECK_THROWS_AS(pearson_r({1, 2}, {1, 2}), DomainError);
  CHECK_THROWS_AS(pearson_r({1, 1, 1}, {1, 2, 3}), DomainError);
}

// --- forecasting ------------------------------------------------------------------------

TEST_CASE("forecast reproduces the published operating points") {
  const auto at_equal = forecast_fixed_attacker(1.73, -0.79, 0.898, {0.898});
  REQUIRE(at_equal.size() == 1);
  CHECK(at_equal[0].asr == doctest::Approx(0.312).epsilon(0.0033));
  CHECK(at_equal[0].delta == doctest::Approx(0.0).epsilon(1e-12));

  const auto vs_weaker = forecast_fixed_attacker(1.73, -0.79, 0.898, {0.62});
  CHECK(vs_weaker[0].asr == doctest::Approx(0.894).epsilon(0.006));
}

TEST_CASE("zero gap reduces the forecast to sigmoid(b)") {
  for (double k : {0.5, 1.0, 2.5}) {
    const auto points = forecast_fixed_attacker(k, -0.4, 0.7, {0.7});
    CHECK(points[0].asr == doctest::Approx(sigmoid(-0.4)).epsilon(1e-12));
  }
}

TEST_CASE("forecast declines strictly in target score for positive slopes") {
  std::vector<double> grid;
  for (double t = 0.60; t <= 0.99 + 1e-9; t += 0.01) grid.push_back(t);
  const auto curve = forecast_fixed_attacker(1.73, -0.79, 0.898, grid);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].asr < curve[i - 1].asr);
  }
  // flat when the slope is zero
  const auto flat = forecast_fixed_attacker(0.0, -0.79, 0.898, grid);
  for (const auto& p : flat) CHECK(p.asr == doctest::Approx(sigmoid(-0.79)));
}

TEST_CASE("forecast rejects boundary scores") {
  CHECK_THROWS_AS(forecast_fixed_attacker(1.0, 0.0, 1.0, {0.5}), DomainError);
  CHECK_THROWS_AS(forecast_fixed_attacker(1.0, 0.0, 0.5, {0.0}), DomainError);
}

// --- exports ------------------------------------------------------------------------------

TEST_CASE("curve and report exports carry the schema") {
  const auto obs = obs_from({-2, -1, 0, 1, 2}, {0.1, 0.25, 0.5, 0.7, 0.85});
  FitConfig cfg;
  cfg.replicates = 30;
  cfg.seed = 2;
  const auto fit = fit_bootstrap(obs, cfg);
  const auto curve = predictive_curve(fit, -2.0, 2.0, 0.5, 0.05);
  REQUIRE(curve.size() == 9);
  for (const auto& p : curve) {
    CHECK(p.interval.lower <= p.interval.median);
    CHECK(p.interval.median <= p.interval.upper);
    CHECK(p.interval.lower > 0.0);
    CHECK(p.interval.upper < 1.0);
  }
  const auto csv = curve_to_csv(curve);
  CHECK(csv.rfind("delta,lower,median,upper\n", 0) == 0);

  const auto report = fit_report_json({fit}, false);
  CHECK(report.find("\"median_k\"") != std::string::npos);
  CHECK(report.find("\"r2_logit\"") != std::string::npos);
  CHECK(report.find("\"miscoverage_pct\"") != std::string::npos);
  CHECK(report.find("\"winkler_mean\"") != std::string::npos);
  // same inputs, same bytes
  CHECK(fit_report_json({fit}, false) == report);
}
