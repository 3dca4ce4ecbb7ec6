#include "redlab/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "redlab/errors.hpp"
#include "redlab/svg.hpp"
#include "redlab/util.hpp"

namespace redlab {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

CampaignSpec load_campaign(const fs::path& path) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  CampaignSpec spec;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_relative() ? base / fp : fp;
  };

  try {
    spec.registry_path = resolve(doc.at("registry").get<std::string>());
    const auto& behaviors = doc.at("behaviors");
    spec.behaviors_path = resolve(behaviors.at("path").get<std::string>());
    if (behaviors.contains("limit") && !behaviors["limit"].is_null()) {
      spec.behavior_limit = behaviors["limit"].get<std::size_t>();
    }
    for (const auto& a : doc.at("attacks")) {
      AttackConfig cfg = AttackConfig::preset(attack_kind_from_string(a.at("kind").get<std::string>()));
      if (a.contains("streams")) cfg.streams = a["streams"].get<int>();
      if (a.contains("rounds")) cfg.rounds = a["rounds"].get<int>();
      if (a.contains("width")) cfg.width = a["width"].get<int>();
      if (a.contains("initial_generations")) cfg.initial_generations = a["initial_generations"].get<int>();
      if (a.contains("branch_factor")) cfg.branch_factor = a["branch_factor"].get<int>();
      if (a.contains("strategy_pool")) cfg.strategy_pool = a["strategy_pool"].get<int>();
      if (a.contains("samples")) cfg.samples = a["samples"].get<int>();
      spec.attacks.push_back(cfg);
    }
    for (const auto& id : doc.value("attackers", ordered_json::array())) {
      spec.attacker_ids.push_back(id.get<std::string>());
    }
    for (const auto& id : doc.at("targets")) spec.target_ids.push_back(id.get<std::string>());
    spec.judge_id = doc.value("judge", std::string{});
    spec.direct_attacker_id = doc.value("direct_attacker", std::string("direct_query"));
    spec.output_dir = resolve(doc.at("output_dir").get<std::string>());
    spec.prompts_dir = resolve(doc.at("prompts_dir").get<std::string>());
    if (doc.contains("strategy_pool")) {
      spec.strategy_pool_path = resolve(doc["strategy_pool"].get<std::string>());
    }
    spec.parallel = doc.value("parallel", 1);
    spec.seed = doc.value("seed", 0ull);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (spec.attacks.empty()) throw ConfigError(path.string() + ": no attacks configured");
  if (spec.target_ids.empty()) throw ConfigError(path.string() + ": no targets configured");
  if (spec.parallel < 1) throw ConfigError(path.string() + ": parallel must be >= 1");
  return spec;
}

namespace {

struct PlannedRun {
  AttackConfig config;
  std::string attacker_id;
  std::string target_id;
  Behavior behavior;
};

LedgerHeader expected_header(const PlannedRun& run) {
  LedgerHeader h;
  h.attack = run.config.kind;
  h.attacker_id = run.attacker_id;
  h.target_id = run.target_id;
  h.behavior_id = run.behavior.behavior_id;
  h.config = run.config;
  h.seed = run.config.seed;
  h.budget = run.config.budget();
  return h;
}

bool ledger_complete(const fs::path& dir, const LedgerHeader& expected) {
  const std::string stem = ledger_basename(expected);
  const fs::path jsonl = dir / (stem + ".jsonl");
  const fs::path header = dir / (stem + ".header.json");
  if (!fs::exists(jsonl) || !fs::exists(header)) return false;
  try {
    const auto doc = ordered_json::parse(read_text_file(header));
    if (doc.value("identity", std::string{}) != hex64(header_identity_hash(expected))) return false;
    const std::string body = read_text_file(jsonl);
    const auto lines = std::count(body.begin(), body.end(), '\n');
    return lines == expected.budget;
  } catch (const std::exception&) {
    return false;
  }
}

std::uint64_t run_seed(std::uint64_t master, const PlannedRun& run) {
  const std::string key = to_string(run.config.kind) + "|" + run.attacker_id + "|" +
                          run.target_id + "|" + run.behavior.behavior_id;
  return mix64(master, fnv1a(key));
}

}  // namespace

RunStats cmd_run(const CampaignSpec& spec) {
  const Registry registry = load_registry(spec.registry_path);
  const auto behaviors = load_behaviors(spec.behaviors_path, spec.behavior_limit);
  const PromptPack prompts = PromptPack::load(spec.prompts_dir);
  Gateway gateway = Gateway::from_registry_file(spec.registry_path);

  std::vector<std::string> strategy_pool;
  const bool wants_pap = std::any_of(spec.attacks.begin(), spec.attacks.end(),
                                     [](const AttackConfig& a) { return a.kind == AttackKind::pap; });
  if (wants_pap) {
    if (spec.strategy_pool_path.empty()) {
      throw ConfigError("campaign: pap attack configured without a strategy_pool file");
    }
    strategy_pool = load_strategy_pool(spec.strategy_pool_path);
  }

  // Referenced ids must resolve before any run starts.
  for (const auto& id : spec.attacker_ids) registry.find(id);
  for (const auto& id : spec.target_ids) registry.find(id);
  if (!spec.judge_id.empty()) registry.find(spec.judge_id);

  std::vector<PlannedRun> plan;
  for (const auto& attack : spec.attacks) {
    const bool direct = attack.kind == AttackKind::direct;
    std::vector<std::string> attackers =
        direct ? std::vector<std::string>{spec.direct_attacker_id} : spec.attacker_ids;
    if (!direct && attackers.empty()) {
      throw ConfigError("campaign: attack '" + to_string(attack.kind) + "' needs attackers");
    }
    for (const auto& attacker : attackers) {
      for (const auto& target : spec.target_ids) {
        for (const auto& behavior : behaviors) {
          PlannedRun run{attack, attacker, target, behavior};
          run.config.seed = run_seed(spec.seed, run);
          plan.push_back(std::move(run));
        }
      }
    }
  }

  fs::create_directories(spec.output_dir);

  RunStats stats;
  stats.planned = static_cast<int>(plan.size());

  std::atomic<std::size_t> cursor{0};
  std::mutex stats_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= plan.size()) return;
      const PlannedRun& run = plan[i];
      try {
        const LedgerHeader expected = expected_header(run);
        if (ledger_complete(spec.output_dir, expected)) {
          std::lock_guard lock(stats_mutex);
          ++stats.resumed;
          continue;
        }

        const ModelProfile& target_profile = registry.find(run.target_id);
        const RoleHandle target =
            bind_role(target_profile, Role::target, prompts.target_system, gateway);

        TrialLedger ledger;
        if (run.config.kind == AttackKind::direct) {
          ledger = run_direct(target, run.behavior);
          ledger.header.attacker_id = run.attacker_id;
          ledger.header.config = run.config;
          ledger.header.seed = run.config.seed;
        } else {
          const ModelProfile& attacker_profile = registry.find(run.attacker_id);
          const std::string judge_id = spec.judge_id.empty() ? run.attacker_id : spec.judge_id;
          const ModelProfile& judge_profile = registry.find(judge_id);

          std::string attacker_template;
          switch (run.config.kind) {
            case AttackKind::pair: attacker_template = prompts.attacker_pair; break;
            case AttackKind::tap: attacker_template = prompts.attacker_tap; break;
            case AttackKind::crescendo: attacker_template = prompts.attacker_crescendo; break;
            case AttackKind::pap: attacker_template = prompts.attacker_pap; break;
            default: break;
          }
          const RoleHandle attacker =
              bind_role(attacker_profile, Role::attacker, attacker_template, gateway);

          switch (run.config.kind) {
            case AttackKind::pap:
              ledger = run_pap(attacker, target, run.behavior, run.config, strategy_pool, prompts);
              break;
            case AttackKind::pair: {
              const RoleHandle judge =
                  bind_role(judge_profile, Role::judge, prompts.judge_score, gateway);
              ledger = run_pair(attacker, target, judge, run.behavior, run.config, prompts);
              break;
            }
            case AttackKind::crescendo: {
              const RoleHandle judge =
                  bind_role(judge_profile, Role::judge, prompts.judge_score, gateway);
              ledger = run_crescendo(attacker, target, judge, run.behavior, run.config, prompts);
              break;
            }
            case AttackKind::tap: {
              const RoleHandle judge =
                  bind_role(judge_profile, Role::judge, prompts.judge_score, gateway);
              ledger = run_tap(attacker, target, judge, run.behavior, run.config, prompts);
              break;
            }
            default:
              throw ConfigError("unreachable attack kind");
          }
        }

        write_ledger(ledger, spec.output_dir);
        std::lock_guard lock(stats_mutex);
        ++stats.executed;
        if (ledger.header.degraded) ++stats.degraded;
      } catch (...) {
        std::lock_guard lock(stats_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int threads = std::min<int>(spec.parallel, std::max<int>(1, static_cast<int>(plan.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return stats;
}

// --- glob -------------------------------------------------------------------------

namespace {

bool wildcard_match(std::string_view name, std::string_view pattern) {
  if (pattern.empty()) return name.empty();
  if (pattern[0] == '*') {
    for (std::size_t i = 0; i <= name.size(); ++i) {
      if (wildcard_match(name.substr(i), pattern.substr(1))) return true;
    }
    return false;
  }
  if (name.empty() || name[0] != pattern[0]) return false;
  return wildcard_match(name.substr(1), pattern.substr(1));
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::vector<fs::path> glob_ledgers(const std::string& pattern) {
  const fs::path p(pattern);
  std::vector<fs::path> out;
  if (pattern.find('*') == std::string::npos) {
    if (fs::exists(p)) out.push_back(p);
  } else {
    const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    const std::string name_pattern = p.filename().string();
    if (!fs::exists(dir)) throw ConfigError("glob: directory does not exist: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (!wildcard_match(name, name_pattern)) continue;
      if (!ends_with(name, ".jsonl") || ends_with(name, ".verdicts.jsonl")) continue;
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("glob: no ledgers match '" + pattern + "'");
  return out;
}

// --- judge --------------------------------------------------------------------------

namespace {

fs::path verdicts_path_for(const fs::path& ledger_path) {
  fs::path p = ledger_path;
  p.replace_extension(".verdicts.jsonl");
  return p;
}

std::map<std::string, std::string> behavior_texts(const fs::path& behaviors_path) {
  std::map<std::string, std::string> out;
  if (behaviors_path.empty()) return out;
  for (const auto& b : load_behaviors(behaviors_path)) out[b.behavior_id] = b.text;
  return out;
}

}  // namespace

JudgeOutcome cmd_judge(const std::string& ledger_glob, const std::string& judge_spec,
                       const fs::path& registry_path, const fs::path& behaviors_path,
                       const fs::path& prompts_dir) {
  const auto ledger_paths = glob_ledgers(ledger_glob);
  const auto behavior_by_id = behavior_texts(behaviors_path);

  std::unique_ptr<FinalJudge> judge;
  if (judge_spec.rfind("lexical:", 0) == 0) {
    judge = std::make_unique<LexicalFinalJudge>(
        LexicalFinalJudge::from_file(judge_spec.substr(std::string("lexical:").size())));
  } else {
    if (registry_path.empty()) throw ConfigError("judge: a model judge needs --registry");
    if (prompts_dir.empty()) throw ConfigError("judge: a model judge needs --prompts");
    const Registry registry = load_registry(registry_path);
    Gateway gateway = Gateway::from_registry_file(registry_path);
    const PromptPack prompts = PromptPack::load(prompts_dir);
    const RoleHandle handle =
        bind_role(registry.find(judge_spec), Role::judge, prompts.judge_final, gateway);
    judge = std::make_unique<BackendFinalJudge>(handle, prompts.judge_final);
  }

  // behavior outcomes grouped per (attack, attacker, target)
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<BehaviorOutcome>> groups;
  std::map<std::tuple<std::string, std::string, std::string>, int> budgets;

  JudgeOutcome outcome;
  for (const auto& path : ledger_paths) {
    const TrialLedger ledger = read_ledger(path);
    std::string behavior_text;
    if (const auto it = behavior_by_id.find(ledger.header.behavior_id); it != behavior_by_id.end()) {
      behavior_text = it->second;
    }
    const auto verdicts = final_judge(ledger, behavior_text, *judge);
    write_text_atomic(verdicts_path_for(path), verdicts_to_jsonl(verdicts));
    ++outcome.ledgers;

    const auto key = std::make_tuple(to_string(ledger.header.attack), ledger.header.attacker_id,
                                     ledger.header.target_id);
    groups[key].push_back(make_outcome(ledger, verdicts));
    budgets[key] = ledger.header.budget;
  }

  for (const auto& [key, outcomes] : groups) {
    JudgeSummaryRow row;
    row.attack = attack_kind_from_string(std::get<0>(key));
    row.attacker_id = std::get<1>(key);
    row.target_id = std::get<2>(key);
    row.budget = budgets[key];
    const ASRRecord top = asr_record(row.attacker_id, row.target_id, row.attack, 1, outcomes);
    const ASRRecord best =
        asr_record(row.attacker_id, row.target_id, row.attack, row.budget, outcomes);
    row.n_behaviors = best.n_behaviors;
    row.asr_at_1 = top.value;
    row.asr_at_budget = best.value;
    outcome.rows.push_back(std::move(row));
  }
  return outcome;
}

// --- report --------------------------------------------------------------------------

namespace {

struct JudgedLedgers {
  // attack -> (attacker, target) -> outcomes per behavior
  std::map<AttackKind, std::map<std::pair<std::string, std::string>, std::vector<BehaviorOutcome>>>
      by_attack;
  std::map<AttackKind, int> budget;
};

JudgedLedgers collect_judged(const std::vector<fs::path>& ledger_paths) {
  JudgedLedgers out;
  for (const auto& path : ledger_paths) {
    const TrialLedger ledger = read_ledger(path);
    const fs::path vp = verdicts_path_for(path);
    if (!fs::exists(vp)) {
      throw ConfigError("no verdicts for '" + path.string() + "'; run the judge step first");
    }
    const auto verdicts = read_verdicts(vp);
    out.by_attack[ledger.header.attack][{ledger.header.attacker_id, ledger.header.target_id}]
        .push_back(make_outcome(ledger, verdicts));
    out.budget[ledger.header.attack] = ledger.header.budget;
  }
  return out;
}

// Attackers and targets that appear in the data, ordered by mmlu_pro.
std::vector<std::string> ordered_by_mmlu(const std::set<std::string>& ids, const Registry& registry) {
  std::vector<std::string> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
    const double sa = registry.capability_of(a, "mmlu_pro");
    const double sb = registry.capability_of(b, "mmlu_pro");
    if (sa != sb) return sa < sb;
    return a < b;
  });
  return out;
}

ASRMatrix matrix_for_attack(
    AttackKind attack,
    const std::map<std::pair<std::string, std::string>, std::vector<BehaviorOutcome>>& pairs,
    int budget, std::optional<int> k_override, const Registry& registry,
    const std::vector<std::string>& attackers, const std::vector<std::string>& targets) {
  ASRMatrix m;
  m.attackers = attackers;
  m.targets = targets;
  m.aggregation = "per-attack";
  m.attack = attack;
  m.k = k_override ? std::min(*k_override, budget) : budget;
  m.cells.assign(attackers.size(), std::vector<std::optional<double>>(targets.size()));
  for (const auto& [pair, outcomes] : pairs) {
    const auto ai = std::find(attackers.begin(), attackers.end(), pair.first) - attackers.begin();
    const auto ti = std::find(targets.begin(), targets.end(), pair.second) - targets.begin();
    const ASRRecord rec = asr_record(pair.first, pair.second, attack, m.k, outcomes);
    m.cells[ai][ti] = rec.value;
    m.n_behaviors = std::max(m.n_behaviors, rec.n_behaviors);
  }
  (void)registry;
  return m;
}

}  // namespace

ReportPaths cmd_report(const std::string& ledger_glob, const fs::path& registry_path,
                       const fs::path& out_dir, std::optional<int> k) {
  const Registry registry = load_registry(registry_path);
  const auto judged = collect_judged(glob_ledgers(ledger_glob));
  fs::create_directories(out_dir);

  std::set<std::string> attacker_ids, target_ids;
  for (const auto& [attack, pairs] : judged.by_attack) {
    for (const auto& [pair, outcomes] : pairs) {
      attacker_ids.insert(pair.first);
      target_ids.insert(pair.second);
    }
  }
  const auto attackers = ordered_by_mmlu(attacker_ids, registry);
  const auto targets = ordered_by_mmlu(target_ids, registry);

  ReportPaths paths;
  std::vector<ASRMatrix> matrices;
  for (const auto& [attack, pairs] : judged.by_attack) {
    ASRMatrix m = matrix_for_attack(attack, pairs, judged.budget.at(attack), k, registry,
                                    attackers, targets);
    const fs::path csv = out_dir / (to_string(attack) + "_asr.csv");
    write_text_atomic(csv, matrix_to_csv(m));
    fs::path meta = csv;
    meta.replace_extension(".meta.json");
    write_text_atomic(meta, matrix_meta_json(m));
    paths.matrices.push_back(csv);
    matrices.push_back(std::move(m));
  }

  const ASRMatrix combined = max_over_attacks(matrices);
  const fs::path combined_csv = out_dir / "max_over_attacks_asr.csv";
  write_text_atomic(combined_csv, matrix_to_csv(combined));
  fs::path combined_meta = combined_csv;
  combined_meta.replace_extension(".meta.json");
  write_text_atomic(combined_meta, matrix_meta_json(combined));
  paths.matrices.push_back(combined_csv);

  // Row means (average attacker ASR), column maxima (target vulnerability),
  // and Pearson correlation of attacker ASR against every benchmark with
  // enough coverage.
  ordered_json summary;
  ordered_json attacker_rows = ordered_json::array();
  std::vector<double> avg_asr;
  std::vector<std::string> avg_ids;
  for (std::size_t a = 0; a < combined.attackers.size(); ++a) {
    double sum = 0.0;
    int n = 0;
    for (const auto& cell : combined.cells[a]) {
      if (cell) {
        sum += *cell;
        ++n;
      }
    }
    if (n == 0) continue;
    const double avg = sum / n;
    attacker_rows.push_back({{"attacker", combined.attackers[a]},
                             {"mmlu_pro", registry.capability_of(combined.attackers[a], "mmlu_pro")},
                             {"avg_asr", avg},
                             {"n_targets", n}});
    avg_asr.push_back(avg);
    avg_ids.push_back(combined.attackers[a]);
  }
  summary["attackers"] = std::move(attacker_rows);

  ordered_json target_rows = ordered_json::array();
  for (std::size_t t = 0; t < combined.targets.size(); ++t) {
    std::optional<double> max_cell;
    for (std::size_t a = 0; a < combined.attackers.size(); ++a) {
      const auto& cell = combined.cells[a][t];
      if (cell) max_cell = max_cell ? std::max(*max_cell, *cell) : *cell;
    }
    if (!max_cell) continue;
    target_rows.push_back({{"target", combined.targets[t]},
                           {"mmlu_pro", registry.capability_of(combined.targets[t], "mmlu_pro")},
                           {"max_asr", *max_cell}});
  }
  summary["targets"] = std::move(target_rows);

  ordered_json correlations = ordered_json::object();
  std::set<std::string> benchmarks;
  for (const auto& id : avg_ids) {
    for (const auto& [benchmark, value] : registry.find(id).scores) benchmarks.insert(benchmark);
  }
  for (const auto& benchmark : benchmarks) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < avg_ids.size(); ++i) {
      const auto& profile = registry.find(avg_ids[i]);
      const auto it = profile.scores.find(benchmark);
      if (it == profile.scores.end()) continue;
      xs.push_back(it->second);
      ys.push_back(avg_asr[i]);
    }
    if (xs.size() < 3) continue;
    try {
      correlations[benchmark] = pearson_r(xs, ys);
    } catch (const DomainError&) {
      // degenerate variance: skip the benchmark
    }
  }
  summary["attacker_asr_correlations"] = std::move(correlations);
  summary["k"] = combined.k;
  summary["n_behaviors"] = combined.n_behaviors;

  paths.summary = out_dir / "report.json";
  write_text_atomic(paths.summary, summary.dump(2) + "\n");
  return paths;
}

// --- fit -----------------------------------------------------------------------------

std::map<std::string, std::vector<GapObservation>> observations_from_matrix(
    const ASRMatrix& matrix, const Registry& registry, GapDefinition def,
    bool include_direct_query_row) {
  if (matrix.k < 1) {
    throw ValidationError("matrix has no attempt budget recorded; cannot anchor clipping");
  }
  std::map<std::string, std::vector<GapObservation>> by_target;
  for (std::size_t a = 0; a < matrix.attackers.size(); ++a) {
    const ModelProfile& attacker = registry.find(matrix.attackers[a]);
    if (attacker.kind == ProfileKind::direct_dummy && !include_direct_query_row) continue;
    const double a_score = capability_of(attacker, "mmlu_pro");
    for (std::size_t t = 0; t < matrix.targets.size(); ++t) {
      const auto& cell = matrix.cells[a][t];
      if (!cell) continue;
      const double t_score = registry.capability_of(matrix.targets[t], "mmlu_pro");
      by_target[matrix.targets[t]].push_back(
          make_observation_from_asr(attacker.model_id, matrix.targets[t],
                                    gap(def, a_score, t_score), *cell, matrix.k));
    }
  }
  return by_target;
}

FitCommandResult cmd_fit(const FitCommandInput& input, const FitConfig& cfg,
                         const fs::path& out_dir, const std::optional<std::string>& family,
                         bool emit_replicates, double curve_step) {
  std::map<std::string, std::vector<GapObservation>> by_target;

  for (const auto& path : input.obs_csv) {
    for (auto& o : observations_from_csv(read_text_file(path), path.string())) {
      by_target[o.target_id].push_back(std::move(o));
    }
  }

  std::optional<Registry> registry;
  if (!input.registry_path.empty()) registry = load_registry(input.registry_path);

  auto add_matrix = [&](const ASRMatrix& m) {
    if (!registry) throw ConfigError("fit: matrices need --registry for capability scores");
    for (auto& [target, obs] : observations_from_matrix(m, *registry, cfg.gap_def,
                                                        cfg.include_direct_query_row)) {
      auto& dst = by_target[target];
      dst.insert(dst.end(), obs.begin(), obs.end());
    }
  };

  for (const auto& path : input.matrices) add_matrix(read_matrix(path));

  if (!input.ledger_glob.empty()) {
    if (!registry) throw ConfigError("fit: judged ledgers need --registry");
    const auto judged = collect_judged(glob_ledgers(input.ledger_glob));
    std::set<std::string> attacker_ids, target_ids;
    for (const auto& [attack, pairs] : judged.by_attack) {
      for (const auto& [pair, outcomes] : pairs) {
        attacker_ids.insert(pair.first);
        target_ids.insert(pair.second);
      }
    }
    const auto attackers = ordered_by_mmlu(attacker_ids, *registry);
    const auto targets = ordered_by_mmlu(target_ids, *registry);
    std::vector<ASRMatrix> matrices;
    for (const auto& [attack, pairs] : judged.by_attack) {
      if (input.attack_filter && attack != *input.attack_filter) continue;
      matrices.push_back(matrix_for_attack(attack, pairs, judged.budget.at(attack), std::nullopt,
                                           *registry, attackers, targets));
    }
    if (matrices.empty()) throw ConfigError("fit: no matching attacks in the judged ledgers");
    add_matrix(input.attack_filter ? matrices.front() : max_over_attacks(matrices));
  }

  if (by_target.empty()) throw ConfigError("fit: no observations resolved");

  FitCommandResult result;
  fs::create_directories(out_dir);
  for (const auto& [target, obs] : by_target) {
    try {
      FitResult fit = fit_bootstrap(obs, cfg);
      fit_metrics(fit);  // degenerate metrics (zero-variance data) skip the target
      double lo = obs.front().delta, hi = obs.front().delta;
      for (const auto& o : obs) {
        lo = std::min(lo, o.delta);
        hi = std::max(hi, o.delta);
      }
      const auto curve = predictive_curve(fit, lo - 1.0, hi + 1.0, curve_step, cfg.alpha);
      const std::string stem = "curve_" + sanitize_file_component(target);
      write_text_atomic(out_dir / (stem + ".csv"), curve_to_csv(curve));

      SvgSeries series;
      for (const auto& p : curve) {
        series.x.push_back(p.delta);
        series.y.push_back(p.interval.median);
        series.band_lo.push_back(p.interval.lower);
        series.band_hi.push_back(p.interval.upper);
      }
      series.label = target;
      write_text_atomic(out_dir / (stem + ".svg"),
                        render_svg("Predicted ASR vs capability gap: " + target, "capability gap",
                                   "ASR", {series}));
      result.fits.push_back(std::move(fit));
    } catch (const Error& e) {
      result.skipped.push_back(target + ": " + e.what());
    }
  }

  if (result.fits.empty()) {
    throw ConfigError("fit: every target was skipped (" + std::to_string(result.skipped.size()) +
                      " skipped)");
  }

  if (family) {
    std::vector<FitResult> member_fits;
    for (const auto& fit : result.fits) {
      if (*family == "all") {
        member_fits.push_back(fit);
      } else if (registry && registry->contains(fit.target_id) &&
                 registry->find(fit.target_id).family == *family) {
        member_fits.push_back(fit);
      }
    }
    if (member_fits.empty()) throw ConfigError("fit: no fitted targets in family '" + *family + "'");
    double lo = 1e9, hi = -1e9;
    for (const auto& fit : member_fits) {
      for (const auto& o : fit.observations) {
        lo = std::min(lo, o.delta);
        hi = std::max(hi, o.delta);
      }
    }
    const auto curve = family_curve(member_fits, lo - 1.0, hi + 1.0, curve_step, cfg.alpha);
    const std::string stem = "family_" + sanitize_file_component(*family);
    write_text_atomic(out_dir / (stem + ".csv"), curve_to_csv(curve));
    SvgSeries series;
    for (const auto& p : curve) {
      series.x.push_back(p.delta);
      series.y.push_back(p.interval.median);
      series.band_lo.push_back(p.interval.lower);
      series.band_hi.push_back(p.interval.upper);
    }
    series.label = *family;
    write_text_atomic(out_dir / (stem + ".svg"),
                      render_svg("Family scaling: " + *family, "capability gap", "ASR", {series}));
  }

  result.report_path = out_dir / "fit_report.json";
  write_text_atomic(result.report_path, fit_report_json(result.fits, emit_replicates));
  return result;
}

fs::path cmd_forecast(double k, double b, double attacker_score, double grid_lo, double grid_hi,
                      double grid_step, const fs::path& out_dir) {
  if (grid_step <= 0.0) throw ConfigError("forecast: grid step must be positive");
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double t = grid_lo + i * grid_step;
    if (t > grid_hi + 1e-12) break;
    grid.push_back(t);
  }
  if (grid.empty()) throw ConfigError("forecast: empty grid");
  const auto curve = forecast_fixed_attacker(k, b, attacker_score, grid);

  fs::create_directories(out_dir);
  const fs::path csv = out_dir / "forecast.csv";
  write_text_atomic(csv, forecast_to_csv(curve));

  SvgSeries series;
  for (const auto& p : curve) {
    series.x.push_back(p.target_score);
    series.y.push_back(p.asr);
  }
  series.label = "fixed attacker";
  write_text_atomic(out_dir / "forecast.svg",
                    render_svg("Forecast ASR for a fixed attacker", "target score", "ASR",
                               {series}));
  return csv;
}

fs::path cmd_synth(const SynthSpec& spec, const FitConfig& fit_cfg, int repetitions, double alpha,
                   const fs::path& out_dir, bool per_rep_csv) {
  const RecoveryReport report = recovery_experiment(spec, fit_cfg, repetitions, alpha);
  fs::create_directories(out_dir);
  const fs::path json_path = out_dir / "recovery.json";
  write_text_atomic(json_path, recovery_report_json(report));
  if (per_rep_csv) {
    write_text_atomic(out_dir / "recovery_reps.csv", recovery_report_csv(report));
  }
  return json_path;
}

}  // namespace redlab
