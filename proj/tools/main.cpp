#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "redlab/campaign.hpp"
#include "redlab/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

// "lo:hi:step"
void parse_grid(const std::string& grid, double& lo, double& hi, double& step) {
  const auto a = grid.find(':');
  const auto b = grid.rfind(':');
  if (a == std::string::npos || b == a) {
    throw redlab::ConfigError("grid must be lo:hi:step, got '" + grid + "'");
  }
  lo = std::stod(grid.substr(0, a));
  hi = std::stod(grid.substr(a + 1, b - a - 1));
  step = std::stod(grid.substr(b + 1));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"redlab: LLM-vs-LLM red-team runner with capability-gap scaling fits"};
  app.require_subcommand(1);

  // run ------------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "Execute a campaign: one ledger per (attack, pair, behavior)");
  std::string campaign_path;
  std::optional<int> run_parallel;
  std::optional<std::uint64_t> run_seed;
  run->add_option("--campaign", campaign_path, "campaign JSON file")->required();
  run->add_option("--parallel", run_parallel, "max concurrent runs (overrides campaign)");
  run->add_option("--seed", run_seed, "master seed (overrides campaign)");

  // judge ----------------------------------------------------------------------
  auto* judge = app.add_subcommand("judge", "Post-hoc verdicts for every trial of matching ledgers");
  std::string judge_glob, judge_spec, judge_registry, judge_behaviors, judge_prompts;
  judge->add_option("--ledgers", judge_glob, "ledger glob, e.g. 'out/*.jsonl'")->required();
  judge->add_option("--judge", judge_spec, "model id or lexical:<pattern-file>")->required();
  judge->add_option("--registry", judge_registry, "registry file (model judges)");
  judge->add_option("--behaviors", judge_behaviors, "behaviors CSV (model judges)");
  judge->add_option("--prompts", judge_prompts, "prompt pack directory (model judges)");

  // report ---------------------------------------------------------------------
  auto* report = app.add_subcommand("report", "ASR matrices and attacker/target summaries");
  std::string report_glob, report_registry, report_out;
  std::optional<int> report_k;
  report->add_option("--ledgers", report_glob, "judged ledger glob")->required();
  report->add_option("--registry", report_registry, "registry file")->required();
  report->add_option("--out", report_out, "output directory")->required();
  report->add_option("--k", report_k, "ASR@k (default: each attack's budget)");

  // fit ------------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "Per-target bootstrapped scaling fits");
  std::vector<std::string> fit_obs, fit_matrices;
  std::string fit_glob, fit_registry, fit_out = "fit_out", fit_gap = "logit", fit_family,
              fit_attack;
  int fit_replicates = 1000;
  std::uint64_t fit_seed = 0;
  double fit_alpha = 0.05;
  bool fit_clamp = false, fit_no_direct = false, fit_emit_replicates = false;
  fit->add_option("--obs-csv", fit_obs, "observation CSV file(s)");
  fit->add_option("--matrix", fit_matrices, "ASR matrix CSV file(s)");
  fit->add_option("--verdicts", fit_glob, "judged ledger glob");
  fit->add_option("--registry", fit_registry, "registry file (matrix/ledger inputs)");
  fit->add_option("--attack", fit_attack, "fit one attack instead of max-over-attacks");
  fit->add_option("--out", fit_out, "output directory");
  fit->add_option("--gap-def", fit_gap, "abs | log_score | log_err | logit");
  fit->add_option("--replicates", fit_replicates, "bootstrap replicates (default 1000)");
  fit->add_option("--seed", fit_seed, "bootstrap master seed");
  fit->add_option("--alpha", fit_alpha, "interval level (default 0.05)");
  fit->add_option("--family", fit_family, "aggregate family curve ('all' or a family name)");
  fit->add_flag("--clamp-slope", fit_clamp, "clamp negative slopes to zero");
  fit->add_flag("--no-direct", fit_no_direct, "exclude direct-query dummy rows");
  fit->add_flag("--emit-replicates", fit_emit_replicates, "include per-replicate parameters");

  // forecast -------------------------------------------------------------------
  auto* forecast = app.add_subcommand("forecast", "ASR curve for a fixed attacker");
  double fc_k = 1.73, fc_b = -0.79, fc_attacker = 0.898;
  std::string fc_grid = "0.60:0.99:0.01", fc_out = "forecast_out";
  forecast->add_option("--k", fc_k, "slope (default 1.73)");
  forecast->add_option("--b", fc_b, "intercept (default -0.79)");
  forecast->add_option("--attacker-score", fc_attacker, "attacker score (default 0.898)");
  forecast->add_option("--grid", fc_grid, "target score grid lo:hi:step");
  forecast->add_option("--out", fc_out, "output directory");

  // synth ----------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Estimator-recovery experiment on synthetic data");
  double sy_k = 1.5, sy_b = 0.0, sy_sigma = 0.3, sy_alpha = 0.05;
  std::string sy_deltas = "20:-4:4", sy_out = "synth_out";
  int sy_trials = 25, sy_reps = 50, sy_replicates = 1000;
  std::uint64_t sy_seed = 0;
  bool sy_per_rep = false;
  int sy_outliers = 0;
  double sy_outlier_offset = 0.0;
  synth->add_option("--true-k", sy_k, "true slope");
  synth->add_option("--true-b", sy_b, "true intercept");
  synth->add_option("--sigma", sy_sigma, "latent noise");
  synth->add_option("--deltas", sy_deltas, "count:lo:hi (uniform draws)");
  synth->add_option("--n", sy_trials, "binomial trials per point");
  synth->add_option("--reps", sy_reps, "repetitions (>= 20)");
  synth->add_option("--replicates", sy_replicates, "bootstrap replicates per fit");
  synth->add_option("--seed", sy_seed, "master seed");
  synth->add_option("--alpha", sy_alpha, "coverage level");
  synth->add_option("--out", sy_out, "output directory");
  synth->add_option("--outliers", sy_outliers, "size of the off-trend cohort");
  synth->add_option("--outlier-offset", sy_outlier_offset, "latent offset of the cohort");
  synth->add_flag("--per-rep-csv", sy_per_rep, "write per-repetition estimates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      redlab::CampaignSpec spec = redlab::load_campaign(campaign_path);
      if (run_parallel) spec.parallel = *run_parallel;
      if (run_seed) spec.seed = *run_seed;
      const auto stats = redlab::cmd_run(spec);
      std::printf("runs: %d planned, %d executed, %d resumed, %d degraded\n", stats.planned,
                  stats.executed, stats.resumed, stats.degraded);
      return stats.degraded > 0 ? kExitPartial : kExitOk;
    }

    if (*judge) {
      const auto outcome = redlab::cmd_judge(judge_glob, judge_spec, judge_registry,
                                             judge_behaviors, judge_prompts);
      std::printf("judged %d ledgers\n", outcome.ledgers);
      for (const auto& row : outcome.rows) {
        std::printf("%s attacker=%s target=%s n=%d ASR@1=%.4f ASR@%d=%.4f\n",
                    redlab::to_string(row.attack).c_str(), row.attacker_id.c_str(),
                    row.target_id.c_str(), row.n_behaviors, row.asr_at_1, row.budget,
                    row.asr_at_budget);
      }
      return kExitOk;
    }

    if (*report) {
      const auto paths = redlab::cmd_report(report_glob, report_registry, report_out, report_k);
      for (const auto& p : paths.matrices) std::printf("wrote %s\n", p.string().c_str());
      std::printf("wrote %s\n", paths.summary.string().c_str());
      return kExitOk;
    }

    if (*fit) {
      redlab::FitCommandInput input;
      for (const auto& p : fit_obs) input.obs_csv.emplace_back(p);
      for (const auto& p : fit_matrices) input.matrices.emplace_back(p);
      input.ledger_glob = fit_glob;
      input.registry_path = fit_registry;
      if (!fit_attack.empty()) input.attack_filter = redlab::attack_kind_from_string(fit_attack);

      redlab::FitConfig cfg;
      cfg.gap_def = redlab::gap_definition_from_string(fit_gap);
      cfg.replicates = fit_replicates;
      cfg.seed = fit_seed;
      cfg.alpha = fit_alpha;
      cfg.clamp_slope_nonneg = fit_clamp;
      cfg.include_direct_query_row = !fit_no_direct;

      const auto result = redlab::cmd_fit(
          input, cfg, fit_out,
          fit_family.empty() ? std::nullopt : std::optional<std::string>(fit_family),
          fit_emit_replicates);
      for (const auto& fitres : result.fits) {
        std::printf("target=%s n=%zu median_k=%.4f median_b=%.4f\n", fitres.target_id.c_str(),
                    fitres.observations.size(), fitres.median_k, fitres.median_b);
      }
      for (const auto& s : result.skipped) std::printf("skipped %s\n", s.c_str());
      std::printf("wrote %s\n", result.report_path.string().c_str());
      return result.skipped.empty() ? kExitOk : kExitPartial;
    }

    if (*forecast) {
      double lo, hi, step;
      parse_grid(fc_grid, lo, hi, step);
      const auto csv = redlab::cmd_forecast(fc_k, fc_b, fc_attacker, lo, hi, step, fc_out);
      std::printf("wrote %s\n", csv.string().c_str());
      return kExitOk;
    }

    if (*synth) {
      redlab::SynthSpec spec;
      spec.true_k = sy_k;
      spec.true_b = sy_b;
      spec.true_sigma = sy_sigma;
      spec.trials = sy_trials;
      spec.seed = sy_seed;
      spec.outlier_count = sy_outliers;
      spec.outlier_offset = sy_outlier_offset;
      double dlo, dhi, dcount;
      parse_grid(sy_deltas, dcount, dlo, dhi);
      spec.deltas = redlab::DeltaRange{static_cast<int>(dcount), dlo, dhi};

      redlab::FitConfig cfg;
      cfg.replicates = sy_replicates;

      const auto path = redlab::cmd_synth(spec, cfg, sy_reps, sy_alpha, sy_out, sy_per_rep);
      std::printf("wrote %s\n", path.string().c_str());
      return kExitOk;
    }
  } catch (const redlab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const redlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
