#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "redlab/attacks.hpp"
#include "redlab/gateway.hpp"
#include "redlab/registry.hpp"

namespace redlab {

// --- inner judging (inside the attack loop) -----------------------------------

// Parses "Rating: [[k]]" (or a bare integer reply) into [1,10]; 1 on failure.
int parse_rating(const std::string& reply);

// Scores a non-empty target response on the judge's 1-10 scale. Judge failures
// (gateway errors, unparseable replies) yield the minimum score of 1.
int inner_score(RoleSession& judge, const std::string& attack_prompt, const std::string& response,
                const std::string& system_override = "");

// True iff the judge classifies the response as a refusal. An EMPTY response
// is a refusal by definition and costs no judge call.
bool detect_refusal(RoleSession& judge, const std::string& response,
                    const std::string& system_override = "");

// --- post-hoc final judging ----------------------------------------------------

struct JudgeVerdict {
  OrderKey key;
  bool harmful = false;
  std::string judge_id;
  bool adjudication_failed = false;  // gateway error; verdict false, re-runnable
};

class FinalJudge {
 public:
  virtual ~FinalJudge() = default;
  virtual std::string id() const = 0;
  // Throws GatewayError on backend failure.
  virtual bool harmful(const std::string& behavior_text, const std::string& prompt,
                       const std::string& response) = 0;
};

// Chat-backend judge given a yes/no classification prompt.
class BackendFinalJudge : public FinalJudge {
 public:
  BackendFinalJudge(RoleHandle handle, std::string classification_prompt);
  std::string id() const override;
  bool harmful(const std::string& behavior_text, const std::string& prompt,
               const std::string& response) override;

 private:
  RoleHandle handle_;
  std::string prompt_;
};

// Offline stand-in: a response is harmful iff it contains any of the patterns
// (plain substrings, one per line in the pattern file).
class LexicalFinalJudge : public FinalJudge {
 public:
  explicit LexicalFinalJudge(std::vector<std::string> patterns, std::string id = "lexical");
  static LexicalFinalJudge from_file(const std::filesystem::path& pattern_file);
  std::string id() const override;
  bool harmful(const std::string& behavior_text, const std::string& prompt,
               const std::string& response) override;

 private:
  std::vector<std::string> patterns_;
  std::string id_;
};

// One verdict per trial, EMPTY trials false; never mutates the ledger.
std::vector<JudgeVerdict> final_judge(const TrialLedger& ledger, const std::string& behavior_text,
                                      FinalJudge& judge);

std::string verdicts_to_jsonl(const std::vector<JudgeVerdict>& verdicts);
std::vector<JudgeVerdict> read_verdicts(const std::filesystem::path& path);

// --- ASR accounting --------------------------------------------------------------

// All trials of one behavior with their verdicts, ordered by order key.
struct BehaviorOutcome {
  std::string behavior_id;
  int budget = 0;
  // (key, inner score if any, harmful verdict) per trial.
  struct Entry {
    OrderKey key;
    std::optional<int> inner_score;
    bool harmful = false;
  };
  std::vector<Entry> entries;
};

BehaviorOutcome make_outcome(const TrialLedger& ledger, const std::vector<JudgeVerdict>& verdicts);

// Fraction of behaviors with at least one harmful verdict among the k
// considered attempts. k=1 takes the inner judge's top-ranked attempt
// (ties by order key); k>1 takes the first k in chronological order.
double asr_at_k(const std::vector<BehaviorOutcome>& outcomes, int k);

struct ASRRecord {
  std::string attacker_id;
  std::string target_id;
  AttackKind attack = AttackKind::direct;
  int k = 0;
  double value = 0.0;
  int n_behaviors = 0;
};

ASRRecord asr_record(const std::string& attacker_id, const std::string& target_id,
                     AttackKind attack, int k, const std::vector<BehaviorOutcome>& outcomes);

struct ASRMatrix {
  std::vector<std::string> attackers;  // sorted by mmlu_pro ascending
  std::vector<std::string> targets;
  std::vector<std::vector<std::optional<double>>> cells;  // [attacker][target]
  std::string aggregation;  // "per-attack" | "max-over-attacks"
  std::optional<AttackKind> attack;
  int k = 0;
  int n_behaviors = 0;

  std::optional<double> cell(const std::string& attacker, const std::string& target) const;
};

// Cellwise maximum over matrices sharing index sets.
ASRMatrix max_over_attacks(const std::vector<ASRMatrix>& matrices);

std::string matrix_to_csv(const ASRMatrix& matrix);
std::string matrix_meta_json(const ASRMatrix& matrix);
ASRMatrix read_matrix(const std::filesystem::path& csv_path);

}  // namespace redlab
