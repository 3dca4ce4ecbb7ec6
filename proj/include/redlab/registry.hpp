#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace redlab {

// One benchmark score in the open interval (0,1). Split scores use dotted
// identifiers, e.g. "mmlu_pro.psychology".
struct CapabilityScore {
  std::string benchmark;
  double value = 0.0;
};

enum class Role { attacker, target, judge };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

// "human" and "direct_dummy" are pseudo-profiles: they take part in fitting
// and forecasting but have no backend and never execute.
enum class ProfileKind { model, human, direct_dummy };

struct ModelProfile {
  std::string model_id;
  std::string display_name;
  std::string family;
  std::string backend_ref;  // empty for pseudo-profiles
  std::set<Role> roles;
  std::map<std::string, double> scores;  // benchmark -> value
  bool unlocked = false;
  ProfileKind kind = ProfileKind::model;
  std::string score_source;  // free text, recorded but not interpreted

  bool has_score(const std::string& benchmark) const { return scores.count(benchmark) > 0; }
};

struct Behavior {
  std::string behavior_id;
  std::string text;
  std::string source_tag;
};

// Direct-query rows enter fits as an attacker with this random-guess score.
inline constexpr double kDirectDummyMmluPro = 0.11;

class Registry {
 public:
  explicit Registry(std::vector<ModelProfile> profiles);

  const std::vector<ModelProfile>& profiles() const { return profiles_; }
  const ModelProfile& find(const std::string& model_id) const;
  bool contains(const std::string& model_id) const;

  // Score lookup with a missing-score error naming model and benchmark.
  double capability_of(const std::string& model_id, const std::string& benchmark) const;

  std::string serialize() const;

 private:
  std::vector<ModelProfile> profiles_;
  std::map<std::string, std::size_t> index_;
};

double capability_of(const ModelProfile& profile, const std::string& benchmark);

Registry load_registry(const std::filesystem::path& path);
Registry parse_registry(const std::string& json_text, const std::string& origin);

std::vector<Behavior> load_behaviors(const std::filesystem::path& path,
                                     std::optional<std::size_t> limit = std::nullopt);
std::vector<Behavior> parse_behaviors(const std::string& csv_text, const std::string& origin,
                                      std::optional<std::size_t> limit = std::nullopt);

}  // namespace redlab
