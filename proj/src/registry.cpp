#include "redlab/registry.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "redlab/csv.hpp"
#include "redlab/errors.hpp"
#include "redlab/util.hpp"

namespace redlab {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Role role) {
  switch (role) {
    case Role::attacker: return "attacker";
    case Role::target: return "target";
    case Role::judge: return "judge";
  }
  return "?";
}

Role role_from_string(const std::string& s) {
  if (s == "attacker") return Role::attacker;
  if (s == "target") return Role::target;
  if (s == "judge") return Role::judge;
  throw ValidationError("unknown role: '" + s + "'");
}

namespace {

ProfileKind kind_from_string(const std::string& s, const std::string& model_id) {
  if (s == "model") return ProfileKind::model;
  if (s == "human") return ProfileKind::human;
  if (s == "direct_dummy") return ProfileKind::direct_dummy;
  throw ValidationError("profile '" + model_id + "': unknown kind '" + s + "'");
}

std::string kind_to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::model: return "model";
    case ProfileKind::human: return "human";
    case ProfileKind::direct_dummy: return "direct_dummy";
  }
  return "?";
}

void validate_score(const std::string& model_id, const std::string& benchmark, double value) {
  if (benchmark.empty()) {
    throw ValidationError("profile '" + model_id + "': empty benchmark identifier");
  }
  // Scores at exactly 0 or 1 have no finite logit and are rejected here;
  // clipping applies to observed ASR only, never to benchmark scores.
  if (!(value > 0.0 && value < 1.0) || !std::isfinite(value)) {
    throw ValidationError("profile '" + model_id + "': score '" + benchmark + "' = " +
                          std::to_string(value) + " is outside the open interval (0,1)");
  }
}

}  // namespace

Registry::Registry(std::vector<ModelProfile> profiles) : profiles_(std::move(profiles)) {
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    const auto& p = profiles_[i];
    if (p.model_id.empty()) throw ValidationError("profile with empty model_id");
    if (!index_.emplace(p.model_id, i).second) {
      throw ValidationError("duplicate model_id '" + p.model_id + "'");
    }
    for (const auto& [benchmark, value] : p.scores) validate_score(p.model_id, benchmark, value);
    if (p.kind == ProfileKind::direct_dummy) {
      const auto it = p.scores.find("mmlu_pro");
      if (it == p.scores.end() || std::abs(it->second - kDirectDummyMmluPro) > 1e-12) {
        throw ValidationError("profile '" + p.model_id +
                              "': direct_dummy profiles carry the fixed mmlu_pro value 0.11");
      }
    }
  }
}

const ModelProfile& Registry::find(const std::string& model_id) const {
  const auto it = index_.find(model_id);
  if (it == index_.end()) throw ValidationError("unknown model_id '" + model_id + "'");
  return profiles_[it->second];
}

bool Registry::contains(const std::string& model_id) const { return index_.count(model_id) > 0; }

double capability_of(const ModelProfile& profile, const std::string& benchmark) {
  const auto it = profile.scores.find(benchmark);
  if (it == profile.scores.end()) {
    throw ValidationError("model '" + profile.model_id + "' has no '" + benchmark + "' score");
  }
  return it->second;
}

double Registry::capability_of(const std::string& model_id, const std::string& benchmark) const {
  return redlab::capability_of(find(model_id), benchmark);
}

Registry parse_registry(const std::string& json_text, const std::string& origin) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("models") || !doc["models"].is_array()) {
    throw ParseError(origin + ": expected top-level object with a \"models\" array");
  }

  std::vector<ModelProfile> profiles;
  for (const auto& m : doc["models"]) {
    ModelProfile p;
    try {
      p.model_id = m.at("model_id").get<std::string>();
      p.display_name = m.value("display_name", p.model_id);
      p.family = m.value("family", std::string{});
      p.backend_ref = m.value("backend_ref", std::string{});
      p.unlocked = m.value("unlocked", false);
      p.kind = kind_from_string(m.value("kind", std::string("model")), p.model_id);
      p.score_source = m.value("score_source", std::string{});
      for (const auto& r : m.value("roles", ordered_json::array())) {
        p.roles.insert(role_from_string(r.get<std::string>()));
      }
      if (m.contains("scores")) {
        for (const auto& [benchmark, value] : m["scores"].items()) {
          p.scores[benchmark] = value.get<double>();
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(origin + ": malformed profile entry: " + e.what());
    }
    profiles.push_back(std::move(p));
  }
  return Registry(std::move(profiles));
}

Registry load_registry(const std::filesystem::path& path) {
  return parse_registry(read_text_file(path), path.string());
}

std::string Registry::serialize() const {
  ordered_json models = ordered_json::array();
  for (const auto& p : profiles_) {
    ordered_json m;
    m["model_id"] = p.model_id;
    m["display_name"] = p.display_name;
    m["family"] = p.family;
    if (!p.backend_ref.empty()) m["backend_ref"] = p.backend_ref;
    ordered_json roles = ordered_json::array();
    for (Role r : p.roles) roles.push_back(to_string(r));
    m["roles"] = roles;
    m["unlocked"] = p.unlocked;
    m["kind"] = kind_to_string(p.kind);
    if (!p.score_source.empty()) m["score_source"] = p.score_source;
    ordered_json scores = ordered_json::object();
    for (const auto& [benchmark, value] : p.scores) scores[benchmark] = value;
    m["scores"] = scores;
    models.push_back(std::move(m));
  }
  ordered_json doc;
  doc["models"] = std::move(models);
  return doc.dump(2) + "\n";
}

std::vector<Behavior> parse_behaviors(const std::string& csv_text, const std::string& origin,
                                      std::optional<std::size_t> limit) {
  if (limit && *limit < 1) throw ValidationError(origin + ": behavior limit must be >= 1");
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) throw ParseError(origin + ": empty behavior dataset");
  const auto& header = rows.front();
  if (header.size() < 3 || header[0] != "behavior_id" || header[1] != "text" ||
      header[2] != "source_tag") {
    throw ParseError(origin + ": expected header 'behavior_id,text,source_tag'");
  }
  std::vector<Behavior> behaviors;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    if (row.size() < 2) throw ParseError(origin + ": row " + std::to_string(i + 1) + " truncated");
    Behavior b;
    b.behavior_id = row[0];
    b.text = row[1];
    b.source_tag = row.size() > 2 ? row[2] : "";
    if (b.behavior_id.empty()) {
      throw ValidationError(origin + ": row " + std::to_string(i + 1) + " has empty behavior_id");
    }
    if (b.text.empty()) {
      throw ValidationError(origin + ": behavior '" + b.behavior_id + "' has empty text");
    }
    if (!seen.insert(b.behavior_id).second) {
      throw ValidationError(origin + ": duplicate behavior_id '" + b.behavior_id + "'");
    }
    behaviors.push_back(std::move(b));
    if (limit && behaviors.size() == *limit) break;
  }
  if (behaviors.empty()) throw ParseError(origin + ": empty behavior dataset");
  return behaviors;
}

std::vector<Behavior> load_behaviors(const std::filesystem::path& path,
                                     std::optional<std::size_t> limit) {
  return parse_behaviors(read_text_file(path), path.string(), limit);
}

}  // namespace redlab
