#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "redlab/gateway.hpp"
#include "redlab/registry.hpp"

namespace redlab {

enum class AttackKind { direct, pair, crescendo, pap, tap };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackConfig {
  AttackKind kind = AttackKind::direct;
  int streams = 1;              // pair/crescendo
  int rounds = 1;               // pair/crescendo/tap (tap: total rounds incl. the first)
  int width = 2;                // tap: candidates kept per round
  int initial_generations = 7;  // tap: round-one generation count
  int branch_factor = 3;        // tap: fresh branches per kept candidate
  int strategy_pool = 40;       // pap
  int samples = 25;             // pap
  std::uint64_t seed = 0;

  // pair 5x5=25, crescendo 3x8=24, tap 7+3*(2*3)=25, pap 25, direct 1.
  static AttackConfig preset(AttackKind kind);
  int budget() const;
};

struct OrderKey {
  int stream = 0;
  int round = 0;
  int branch = 0;
  auto operator<=>(const OrderKey&) const = default;
};

struct Trial {
  OrderKey key;
  std::string prompt;    // empty string = EMPTY attempt
  std::string response;  // empty string = EMPTY response
  std::optional<int> inner_score;
  std::optional<bool> refused;       // crescendo only
  std::optional<OrderKey> parent;    // tap only
  std::int64_t t_start_ms = 0;
  std::int64_t t_end_ms = 0;
  std::string error;  // gateway failure note, if any
};

// An EMPTY attempt counts as a failure but still occupies budget.
inline bool trial_is_empty(const Trial& t) { return t.prompt.empty() || t.response.empty(); }

struct LedgerHeader {
  AttackKind attack = AttackKind::direct;
  std::string attacker_id;
  std::string target_id;
  std::string behavior_id;
  AttackConfig config;
  std::uint64_t seed = 0;
  int budget = 0;
  bool degraded = false;  // any gateway hard failure during the run
};

struct TrialLedger {
  LedgerHeader header;
  std::vector<Trial> trials;  // sorted by order key
};

// Role prompts loaded from a prompt-pack directory; {{BEHAVIOR}} (and
// {{STRATEGY}} for pap) are substituted at call time.
struct PromptPack {
  std::string target_system;
  std::string attacker_pair;
  std::string attacker_tap;
  std::string attacker_crescendo;
  std::string attacker_pap;
  std::string judge_score;
  std::string judge_scheme;
  std::string judge_score_crescendo;
  std::string judge_refusal;
  std::string judge_final;

  static PromptPack load(const std::filesystem::path& dir);
};

std::string substitute(std::string text, std::string_view key, std::string_view value);

// Structured attacker output. pair/tap expect {"improvement", "prompt"},
// crescendo {"prompt", "summary"}, pap/direct a plain rewrite. One repair
// pass (stripping code fences) runs before the attempt is declared EMPTY.
struct Envelope {
  std::string prompt;
  std::string summary;
};

std::optional<Envelope> extract_attack_prompt(AttackKind kind, const std::string& raw);

TrialLedger run_direct(const RoleHandle& target, const Behavior& behavior);
TrialLedger run_pair(const RoleHandle& attacker, const RoleHandle& target, const RoleHandle& judge,
                     const Behavior& behavior, const AttackConfig& cfg, const PromptPack& prompts);
TrialLedger run_crescendo(const RoleHandle& attacker, const RoleHandle& target,
                          const RoleHandle& judge, const Behavior& behavior,
                          const AttackConfig& cfg, const PromptPack& prompts);
TrialLedger run_pap(const RoleHandle& attacker, const RoleHandle& target, const Behavior& behavior,
                    const AttackConfig& cfg, const std::vector<std::string>& strategy_pool,
                    const PromptPack& prompts);
TrialLedger run_tap(const RoleHandle& attacker, const RoleHandle& target, const RoleHandle& judge,
                    const Behavior& behavior, const AttackConfig& cfg, const PromptPack& prompts);

std::vector<std::string> load_strategy_pool(const std::filesystem::path& path);

// --- persistence -------------------------------------------------------------

std::string ledger_basename(const LedgerHeader& header);  // {attack}_{attacker}_{target}_{behavior}
std::string header_to_json(const LedgerHeader& header);
std::string trials_to_jsonl(const std::vector<Trial>& trials);
std::uint64_t header_identity_hash(const LedgerHeader& header);

// Writes {stem}.jsonl and {stem}.header.json atomically.
void write_ledger(const TrialLedger& ledger, const std::filesystem::path& dir);
TrialLedger read_ledger(const std::filesystem::path& jsonl_path);

}  // namespace redlab
