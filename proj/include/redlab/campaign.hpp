#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "redlab/adjudicate.hpp"
#include "redlab/attacks.hpp"
#include "redlab/fit.hpp"
#include "redlab/gateway.hpp"
#include "redlab/registry.hpp"
#include "redlab/synth.hpp"

namespace redlab {

struct CampaignSpec {
  std::filesystem::path registry_path;
  std::filesystem::path behaviors_path;
  std::optional<std::size_t> behavior_limit;
  std::vector<AttackConfig> attacks;
  std::vector<std::string> attacker_ids;
  std::vector<std::string> target_ids;
  std::string judge_id;  // empty = the attacker judges its own run
  std::string direct_attacker_id = "direct_query";
  std::filesystem::path output_dir;
  std::filesystem::path prompts_dir;
  std::filesystem::path strategy_pool_path;
  int parallel = 1;
  std::uint64_t seed = 0;
};

CampaignSpec load_campaign(const std::filesystem::path& path);

struct RunStats {
  int planned = 0;
  int executed = 0;
  int resumed = 0;   // complete ledgers skipped
  int degraded = 0;  // runs that recorded gateway hard failures
};

// One ledger per (attack, attacker, target, behavior); existing complete
// ledgers are skipped, keyed by the header identity hash.
RunStats cmd_run(const CampaignSpec& spec);

// Expands a pattern whose final component may contain '*'. Matches ledger
// .jsonl files only (verdict sidecars are excluded).
std::vector<std::filesystem::path> glob_ledgers(const std::string& pattern);

struct JudgeSummaryRow {
  AttackKind attack;
  std::string attacker_id;
  std::string target_id;
  int n_behaviors = 0;
  int budget = 0;
  double asr_at_1 = 0.0;
  double asr_at_budget = 0.0;
};

// Judge spec: "lexical:<pattern-file>" or a registry model id.
struct JudgeOutcome {
  std::vector<JudgeSummaryRow> rows;
  int ledgers = 0;
};

JudgeOutcome cmd_judge(const std::string& ledger_glob, const std::string& judge_spec,
                       const std::filesystem::path& registry_path,
                       const std::filesystem::path& behaviors_path,
                       const std::filesystem::path& prompts_dir);

struct ReportPaths {
  std::vector<std::filesystem::path> matrices;
  std::filesystem::path summary;
};

// Per-attack ASR matrices, the max-over-attacks matrix, and a summary with
// average attacker ASR, per-target vulnerability, and Pearson correlations
// between average attacker ASR and every benchmark in the registry.
ReportPaths cmd_report(const std::string& ledger_glob, const std::filesystem::path& registry_path,
                       const std::filesystem::path& out_dir, std::optional<int> k = std::nullopt);

// Observations grouped by target id, built from a judged ASR matrix. The clip
// anchor is the matrix-level attempt budget k.
std::map<std::string, std::vector<GapObservation>> observations_from_matrix(
    const ASRMatrix& matrix, const Registry& registry, GapDefinition def,
    bool include_direct_query_row);

struct FitCommandInput {
  std::vector<std::filesystem::path> obs_csv;   // pre-built observations
  std::vector<std::filesystem::path> matrices;  // matrix CSVs
  std::string ledger_glob;                      // judged ledgers
  std::optional<AttackKind> attack_filter;      // per-attack fit instead of max-over-attacks
  std::filesystem::path registry_path;          // required unless obs_csv given
};

struct FitCommandResult {
  std::vector<FitResult> fits;
  std::vector<std::string> skipped;  // targets skipped with reasons
  std::filesystem::path report_path;
};

FitCommandResult cmd_fit(const FitCommandInput& input, const FitConfig& cfg,
                         const std::filesystem::path& out_dir,
                         const std::optional<std::string>& family, bool emit_replicates,
                         double curve_step = 0.05);

std::filesystem::path cmd_forecast(double k, double b, double attacker_score, double grid_lo,
                                   double grid_hi, double grid_step,
                                   const std::filesystem::path& out_dir);

std::filesystem::path cmd_synth(const SynthSpec& spec, const FitConfig& fit_cfg, int repetitions,
                                double alpha, const std::filesystem::path& out_dir,
                                bool per_rep_csv);

}  // namespace redlab
