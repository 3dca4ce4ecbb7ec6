#include "redlab/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <thread>

#include "redlab/csv.hpp"
#include "redlab/errors.hpp"
#include "redlab/util.hpp"

namespace redlab {

using ordered_json = nlohmann::ordered_json;

GenParams GenParams::preset(Role role) {
  switch (role) {
    case Role::attacker: return {0.6, 0.9, 1024, std::nullopt};
    case Role::target: return {0.0, 1.0, 512, std::nullopt};
    case Role::judge: return {0.0, 1.0, 128, std::nullopt};
  }
  return {};
}

// --- Script ------------------------------------------------------------------

Script Script::parse(const std::string& csv_text, const std::string& origin) {
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) return Script{};
  std::size_t start = 0;
  if (!rows[0].empty() && rows[0][0] == "slot") start = 1;  // optional header

  auto parse_index = [&](const std::string& cell, std::size_t line) -> std::optional<int> {
    if (cell == "*" || cell.empty()) return std::nullopt;
    try {
      return std::stoi(cell);
    } catch (...) {
      throw ParseError(origin + ": line " + std::to_string(line + 1) + ": bad index '" + cell + "'");
    }
  };

  std::vector<Entry> entries;
  for (std::size_t i = start; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() < 4) throw ParseError(origin + ": line " + std::to_string(i + 1) + " truncated");
    Entry e;
    e.slot = role_from_string(row[0]);
    e.stream = parse_index(row[1], i);
    e.turn = parse_index(row[2], i);
    if (row.size() >= 5) {
      e.match = row[3];
      e.text = row[4];
    } else {
      e.text = row[3];
    }
    if (e.text == kRefuseSentinel) e.text = kRefusalText;
    entries.push_back(std::move(e));
  }
  return Script(std::move(entries));
}

Script Script::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

std::string Script::lookup(Role slot, int stream, int turn, const std::string& conversation) const {
  for (const auto& e : entries_) {
    if (e.slot != slot) continue;
    if (e.stream && *e.stream != stream) continue;
    if (e.turn && *e.turn != turn) continue;
    if (!e.match.empty() && conversation.find(e.match) == std::string::npos) continue;
    return e.text;
  }
  return kScriptFallback;
}

// --- ScriptedBackend -----------------------------------------------------------

ScriptedBackend::ScriptedBackend(BackendConfig config, std::shared_ptr<const Script> script)
    : config_(std::move(config)), script_(std::move(script)) {}

ChatResult ScriptedBackend::complete(const ChatCall& call) {
  // Match rules see the whole conversation, system prompt included.
  std::string conversation;
  for (const auto& m : call.messages) {
    conversation += m.content;
    conversation += '\n';
  }
  std::lock_guard lock(mutex_);
  int turn = call.turn;
  if (turn < 0) {
    turn = auto_turns_[{static_cast<int>(call.slot), call.stream}]++;
  }
  ++clock_;
  return {script_->lookup(call.slot, call.stream, turn, conversation), 1};
}

std::int64_t ScriptedBackend::now_ms() {
  std::lock_guard lock(mutex_);
  return clock_;
}

// --- RateLimiter ----------------------------------------------------------------

void RateLimiter::acquire() {
  if (rps_ <= 0.0) return;
  const auto interval =
      std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(1.0 / rps_));
  std::chrono::steady_clock::time_point wait_until;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    if (next_slot_ < now) next_slot_ = now;  // burst allowance of 1
    wait_until = next_slot_;
    next_slot_ += interval;
  }
  std::this_thread::sleep_until(wait_until);
}

// --- HttpBackend ----------------------------------------------------------------

namespace {

std::string msg_role_name(MsgRole role) {
  switch (role) {
    case MsgRole::system: return "system";
    case MsgRole::user: return "user";
    case MsgRole::assistant: return "assistant";
  }
  return "user";
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

bool is_timeout(httplib::Error err) {
  return err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
         err == httplib::Error::Write;
}

// httplib clients bind to an origin; any path prefix in base_url has to be
// carried over to the request path ("https://host/v1" -> "/v1/chat/completions").
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = base_url.find('/', host_start);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config)
    : config_(std::move(config)), limiter_(config_.rate_limit_rps) {
  if (config_.base_url.empty()) {
    throw ConfigError("backend '" + config_.name + "': base_url required for http kind");
  }
}

std::int64_t HttpBackend::now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ChatResult HttpBackend::complete(const ChatCall& call) {
  if (call.messages.empty()) throw ConfigError("chat: empty message list");

  ordered_json body;
  body["model"] = config_.model_name;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : call.messages) {
    msgs.push_back({{"role", msg_role_name(m.role)}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);
  body["temperature"] = call.params.temperature;
  body["top_p"] = call.params.top_p;
  body["max_tokens"] = call.params.max_tokens;
  if (call.params.seed) body["seed"] = *call.params.seed;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const int max_attempts = std::max(1, config_.retry.max_attempts);
  int last_status = 0;
  bool last_was_timeout = false;
  std::string last_detail;

  const auto [origin, path_prefix] = split_base_url(config_.base_url);
  const std::string path = path_prefix + "/chat/completions";

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    limiter_.acquire();

    httplib::Client client(origin);
    const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto timeout_us =
        std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - timeout_s);
    client.set_connection_timeout(timeout_s.count(), timeout_us.count());
    client.set_read_timeout(timeout_s.count(), timeout_us.count());
    client.set_write_timeout(timeout_s.count(), timeout_us.count());

    auto res = client.Post(path, headers, payload, "application/json");
    if (res) {
      if (res->status >= 200 && res->status < 300) {
        try {
          auto doc = ordered_json::parse(res->body);
          return {doc.at("choices").at(0).at("message").at("content").get<std::string>(), attempt};
        } catch (const nlohmann::json::exception& e) {
          throw GatewayError(GatewayFailure::non_retryable_status, res->status, attempt,
                             "backend '" + config_.name + "': malformed completion body: " + e.what());
        }
      }
      if (!retryable_status(res->status)) {
        throw GatewayError(GatewayFailure::non_retryable_status, res->status, attempt,
                           "backend '" + config_.name + "': non-retryable HTTP " +
                               std::to_string(res->status));
      }
      last_status = res->status;
      last_was_timeout = false;
      last_detail = "HTTP " + std::to_string(res->status);
    } else {
      last_status = 0;
      last_was_timeout = is_timeout(res.error());
      last_detail = httplib::to_string(res.error());
    }

    if (attempt < max_attempts) {
      const auto delay = config_.retry.base_backoff * (1u << std::min(attempt - 1, 16));
      std::this_thread::sleep_for(delay);
    }
  }

  const auto kind = last_was_timeout ? GatewayFailure::timeout : GatewayFailure::exhausted_retries;
  throw GatewayError(kind, last_status, max_attempts,
                     "backend '" + config_.name + "': retries exhausted after " +
                         std::to_string(max_attempts) + " attempts (last: " + last_detail + ")");
}

// --- sessions --------------------------------------------------------------------

ChatResult RoleSession::ask(const std::vector<ChatMessage>& messages) {
  return ask_with_system(handle_->system_prompt, messages);
}

ChatResult RoleSession::ask_with_system(const std::string& system_override,
                                        const std::vector<ChatMessage>& messages) {
  ChatCall call;
  if (!system_override.empty()) call.messages.push_back(system_msg(system_override));
  call.messages.insert(call.messages.end(), messages.begin(), messages.end());
  call.params = handle_->params;
  if (seed_) call.params.seed = *seed_;
  call.slot = handle_->role;
  call.stream = stream_;
  call.turn = turn_++;
  return handle_->backend->complete(call);
}

ChatResult chat(Backend& backend, const std::vector<ChatMessage>& messages, const GenParams& params) {
  if (messages.empty()) throw ConfigError("chat: empty message list");
  ChatCall call;
  call.messages = messages;
  call.params = params;
  return backend.complete(call);
}

RoleHandle bind_role(const ModelProfile& profile, Role role, std::string system_prompt,
                     std::shared_ptr<Backend> backend) {
  RoleHandle h;
  h.model_id = profile.model_id;
  h.role = role;
  h.backend = std::move(backend);
  h.params = GenParams::preset(role);
  h.system_prompt = std::move(system_prompt);
  return h;
}

RoleHandle bind_role(const ModelProfile& profile, Role role, std::string system_prompt,
                     Gateway& gateway) {
  if (profile.backend_ref.empty()) {
    throw ConfigError("profile '" + profile.model_id + "' has no backend_ref; cannot bind role " +
                      to_string(role));
  }
  return bind_role(profile, role, std::move(system_prompt), gateway.instance(profile.backend_ref));
}

// --- Gateway ---------------------------------------------------------------------

namespace {

std::chrono::milliseconds ms_field(const ordered_json& obj, const char* key, std::int64_t fallback) {
  return std::chrono::milliseconds(obj.value(key, fallback));
}

}  // namespace

std::map<std::string, BackendConfig> parse_backends(const std::string& json_text,
                                                    const std::string& origin) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  std::map<std::string, BackendConfig> out;
  if (!doc.contains("backends")) return out;
  for (const auto& [name, spec] : doc["backends"].items()) {
    BackendConfig cfg;
    cfg.name = name;
    const std::string kind = spec.value("kind", std::string("http_openai_compatible"));
    if (kind == "http_openai_compatible") {
      cfg.kind = BackendKind::http_openai_compatible;
    } else if (kind == "scripted") {
      cfg.kind = BackendKind::scripted;
    } else {
      throw ValidationError(origin + ": backend '" + name + "': unknown kind '" + kind + "'");
    }
    cfg.base_url = spec.value("base_url", std::string{});
    cfg.api_key_env = spec.value("api_key_env", std::string{});
    cfg.model_name = spec.value("model_name", std::string{});
    if (spec.contains("retry")) {
      cfg.retry.max_attempts = spec["retry"].value("max_attempts", 3);
      cfg.retry.base_backoff = ms_field(spec["retry"], "base_backoff_ms", 250);
    }
    cfg.timeout = ms_field(spec, "timeout_ms", 30000);
    cfg.rate_limit_rps = spec.value("rate_limit_rps", 0.0);
    if (spec.contains("script_path")) {
      cfg.script_path = spec["script_path"].get<std::string>();
    }
    if (cfg.retry.max_attempts < 1) {
      throw ValidationError(origin + ": backend '" + name + "': max_attempts must be >= 1");
    }
    if (cfg.timeout.count() <= 0) {
      throw ValidationError(origin + ": backend '" + name + "': timeout must be positive");
    }
    out.emplace(name, std::move(cfg));
  }
  return out;
}

Gateway::Gateway(std::map<std::string, BackendConfig> configs) : configs_(std::move(configs)) {}

Gateway Gateway::from_registry_file(const std::filesystem::path& path) {
  auto configs = parse_backends(read_text_file(path), path.string());
  // Relative script paths resolve against the registry file's directory.
  for (auto& [name, cfg] : configs) {
    if (cfg.kind == BackendKind::scripted && cfg.script_path.is_relative()) {
      cfg.script_path = path.parent_path() / cfg.script_path;
    }
  }
  return Gateway(std::move(configs));
}

const BackendConfig& Gateway::config_of(const std::string& ref) const {
  const auto it = configs_.find(ref);
  if (it == configs_.end()) throw ConfigError("unresolved backend_ref '" + ref + "'");
  return it->second;
}

std::shared_ptr<Backend> Gateway::instance(const std::string& ref) {
  const BackendConfig& cfg = config_of(ref);
  std::lock_guard lock(mutex_);
  if (cfg.kind == BackendKind::http_openai_compatible) {
    auto& slot = shared_http_[ref];
    if (!slot) slot = std::make_shared<HttpBackend>(cfg);
    return slot;
  }
  auto& script = scripts_[ref];
  if (!script) {
    if (cfg.script_path.empty()) {
      throw ConfigError("backend '" + ref + "': scripted kind requires script_path");
    }
    script = std::make_shared<const Script>(Script::load(cfg.script_path));
  }
  // Fresh instance per call site: turn counters and the logical clock start
  // at zero for every run.
  return std::make_shared<ScriptedBackend>(cfg, script);
}

}  // namespace redlab
