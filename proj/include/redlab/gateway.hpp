#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "redlab/registry.hpp"

namespace redlab {

enum class MsgRole { system, user, assistant };

struct ChatMessage {
  MsgRole role;
  std::string content;
};

inline ChatMessage system_msg(std::string text) { return {MsgRole::system, std::move(text)}; }
inline ChatMessage user_msg(std::string text) { return {MsgRole::user, std::move(text)}; }
inline ChatMessage assistant_msg(std::string text) { return {MsgRole::assistant, std::move(text)}; }

struct GenParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;

  // Attacker sampling is stochastic (0.6 / 0.9); target and judge run greedy.
  static GenParams preset(Role role);
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{250};
};

enum class BackendKind { http_openai_compatible, scripted };

struct BackendConfig {
  std::string name;
  BackendKind kind = BackendKind::http_openai_compatible;
  std::string base_url;
  std::string api_key_env;
  std::string model_name;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{30000};
  double rate_limit_rps = 0.0;  // 0 = unlimited
  std::filesystem::path script_path;  // scripted kind
};

// Sentinel a script may use instead of literal text; expands to the canonical
// refusal below.
inline constexpr const char* kRefuseSentinel = "<REFUSE>";
inline constexpr const char* kRefusalText = "I cannot help with that.";
// Returned for lookups past the end of a script.
inline constexpr const char* kScriptFallback = "[unscripted response]";

// Deterministic canned responses keyed by (slot, stream, turn), with optional
// substring matching against the conversation text. CSV columns:
//   slot,stream,turn,match,text
// 'stream' and 'turn' accept '*'. Rows are tried in file order; first match
// wins. Lookups with no matching row return kScriptFallback, never an error.
class Script {
 public:
  struct Entry {
    Role slot;
    std::optional<int> stream;  // nullopt = any
    std::optional<int> turn;    // nullopt = any
    std::string match;          // substring of last user message; empty = any
    std::string text;
  };

  Script() = default;
  explicit Script(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  static Script load(const std::filesystem::path& path);
  static Script parse(const std::string& csv_text, const std::string& origin);

  std::string lookup(Role slot, int stream, int turn, const std::string& conversation) const;

 private:
  std::vector<Entry> entries_;
};

struct ChatCall {
  std::vector<ChatMessage> messages;
  GenParams params;
  Role slot = Role::target;
  int stream = 0;
  int turn = -1;  // -1 = let a scripted backend count turns itself
};

struct ChatResult {
  std::string content;
  int attempts = 1;
};

class Backend {
 public:
  virtual ~Backend() = default;

  // Returns assistant text; throws GatewayError on failure.
  virtual ChatResult complete(const ChatCall& call) = 0;

  // Trial timestamps come from here: wall clock for HTTP, a logical counter
  // for scripted backends so replays are byte-identical.
  virtual std::int64_t now_ms() = 0;

  virtual const BackendConfig& config() const = 0;
};

class ScriptedBackend : public Backend {
 public:
  ScriptedBackend(BackendConfig config, std::shared_ptr<const Script> script);

  ChatResult complete(const ChatCall& call) override;
  std::int64_t now_ms() override;
  const BackendConfig& config() const override { return config_; }

 private:
  BackendConfig config_;
  std::shared_ptr<const Script> script_;
  std::mutex mutex_;
  std::int64_t clock_ = 0;
  std::map<std::pair<int, int>, int> auto_turns_;  // (slot, stream) -> next turn
};

class RateLimiter {
 public:
  explicit RateLimiter(double rps) : rps_(rps) {}

  // Blocks until a request slot is available. Burst allowance is 1.
  void acquire();

 private:
  double rps_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);

  ChatResult complete(const ChatCall& call) override;
  std::int64_t now_ms() override;
  const BackendConfig& config() const override { return config_; }

 private:
  BackendConfig config_;
  RateLimiter limiter_;
};

// A model bound to one of the three roles: backend + role preset + system
// prompt prepended to every conversation.
struct RoleHandle {
  std::string model_id;
  Role role = Role::target;
  std::shared_ptr<Backend> backend;
  GenParams params;
  std::string system_prompt;
};

// Per-stream view of a handle. Carries the stream index and its own turn
// counter so scripted replays do not depend on scheduling. A per-stream
// sampling seed may be injected for backends that honor one.
class RoleSession {
 public:
  RoleSession(const RoleHandle& handle, int stream,
              std::optional<std::uint64_t> seed = std::nullopt)
      : handle_(&handle), stream_(stream), seed_(seed) {}

  ChatResult ask(const std::vector<ChatMessage>& messages);
  ChatResult ask_with_system(const std::string& system_override,
                             const std::vector<ChatMessage>& messages);

  int stream() const { return stream_; }
  const RoleHandle& handle() const { return *handle_; }

 private:
  const RoleHandle* handle_;
  int stream_ = 0;
  std::optional<std::uint64_t> seed_;
  int turn_ = 0;
};

// Owns backend configs; HTTP backends are shared process-wide, scripted
// backends are created fresh per call site so every run replays from turn 0.
class Gateway {
 public:
  explicit Gateway(std::map<std::string, BackendConfig> configs);

  static Gateway from_registry_file(const std::filesystem::path& path);

  const BackendConfig& config_of(const std::string& ref) const;
  std::shared_ptr<Backend> instance(const std::string& ref);

 private:
  std::map<std::string, BackendConfig> configs_;
  std::map<std::string, std::shared_ptr<Backend>> shared_http_;
  std::map<std::string, std::shared_ptr<const Script>> scripts_;
  std::mutex mutex_;
};

std::map<std::string, BackendConfig> parse_backends(const std::string& json_text,
                                                    const std::string& origin);

// Single-shot convenience used by tests and one-off calls.
ChatResult chat(Backend& backend, const std::vector<ChatMessage>& messages,
                const GenParams& params);

RoleHandle bind_role(const ModelProfile& profile, Role role, std::string system_prompt,
                     std::shared_ptr<Backend> backend);
RoleHandle bind_role(const ModelProfile& profile, Role role, std::string system_prompt,
                     Gateway& gateway);

}  // namespace redlab
