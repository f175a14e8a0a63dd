#pragma once

// Chat-completion backends: OpenAI-compatible HTTP, transcript replay and
// scripted (in-process) responders, plus a recorder that writes replay
// transcripts from any backend.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogform/errors.hpp"
#include "cogform/rng.hpp"

namespace cogform::llm {

enum class Role { System, User, Assistant };

std::string_view role_name(Role r);
Role role_from_name(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using Conversation = std::vector<ChatMessage>;

nlohmann::json to_json(const Conversation& messages);
Conversation conversation_from_json(const nlohmann::json& j);

class GatewayError : public Error {
 public:
  using Error::Error;
};
/// Network failure or timeout after all retries.
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
/// No recorded response matches the request.
class ReplayMiss : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
/// The server answered with something that is not a chat completion.
class ProtocolError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

enum class BackendKind { Http, Replay, Scripted };

using ScriptFn = std::function<std::string(const Conversation&)>;

/// First rule whose `contains` substring occurs in the last user message wins.
struct ScriptRule {
  std::string contains;
  std::string reply;
};

struct BackendSpec {
  BackendKind kind = BackendKind::Scripted;
  std::string name;  // label used in traces
  std::string endpoint;
  std::string model;
  double temperature = 0.0;
  int timeout_ms = 60000;
  int retries = 2;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string transcript_path;  // replay input
  std::string record_path;      // when set, responses are appended here

  // Scripted backends: either a function or a rule table.
  ScriptFn script;
  std::vector<ScriptRule> rules;
  std::string default_reply;

  /// Throws SchemaError when required fields for the kind are missing.
  void validate() const;
};

/// JSON form: {"kind": "http"|"replay"|"scripted", "name", "endpoint",
/// "model", "temperature", "timeout_ms", "retries", "api_key_env",
/// "transcript", "record", "rules": [{"contains","reply"}], "default"}.
/// Relative paths are resolved against base_dir.
BackendSpec backend_from_json(const nlohmann::json& j, const std::string& base_dir = {});
nlohmann::json to_json(const BackendSpec& spec);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatMessage complete(const Conversation& messages) = 0;
  virtual const std::string& name() const = 0;
};

/// Validates the request and dispatches to the backend.
/// Throws std::invalid_argument on an empty conversation or an empty
/// user/assistant message.
ChatMessage complete(ChatBackend& backend, const Conversation& messages);

std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec);

/// Stable hash of a request (model + messages), hex encoded.
std::string request_hash(const std::string& model, const Conversation& messages);

/// Number of HTTP requests issued by this process; replay and scripted
/// backends must never move it.
std::uint64_t http_requests_issued();

class ScriptedBackend final : public ChatBackend {
 public:
  ScriptedBackend(std::string name, ScriptFn fn);
  ChatMessage complete(const Conversation& messages) override;
  const std::string& name() const override { return name_; }

 private:
  std::string name_;
  ScriptFn fn_;
};

/// Replays JSON Lines transcripts of {request_hash, request, response}.
/// Identical requests are answered in recorded order.
class ReplayBackend final : public ChatBackend {
 public:
  ReplayBackend(std::string name, std::string model, const std::string& transcript_path);
  ChatMessage complete(const Conversation& messages) override;
  const std::string& name() const override { return name_; }

 private:
  std::string name_;
  std::string model_;
  std::string path_;
  std::mutex mutex_;
  std::map<std::string, std::vector<std::string>> responses_;
  std::map<std::string, std::size_t> cursor_;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Posts a JSON body; returns nullopt-equivalent status 0 on transport failure.
using HttpPost = std::function<HttpResponse(const std::string& url_base, const std::string& path,
                                            const std::string& body, const std::string& bearer, int timeout_ms)>;

/// OpenAI-compatible /v1/chat/completions client with retries.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(BackendSpec spec, HttpPost post = {});
  ChatMessage complete(const Conversation& messages) override;
  const std::string& name() const override { return spec_.name; }

 private:
  BackendSpec spec_;
  HttpPost post_;
};

/// Wraps another backend and appends each exchange to a transcript file.
class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(std::unique_ptr<ChatBackend> inner, std::string model, std::string path);
  ChatMessage complete(const Conversation& messages) override;
  const std::string& name() const override { return inner_->name(); }

 private:
  std::unique_ptr<ChatBackend> inner_;
  std::string model_;
  std::string path_;
  std::mutex mutex_;
};

/// Default transport (cpp-httplib).
HttpResponse http_post(const std::string& url_base, const std::string& path, const std::string& body,
                       const std::string& bearer, int timeout_ms);

// ---------------------------------------------------------------------------
// Critic ensembles

struct WeightedBackend {
  BackendSpec backend;
  double probability = 0.0;
};

struct CriticEnsembleSpec {
  std::vector<WeightedBackend> members;
  std::uint64_t seed = 0;

  /// Throws SchemaError unless nonempty with probabilities summing to 1 +- 1e-9.
  void validate() const;
};

/// Index of the member drawn with the ensemble probabilities.
std::size_t sample_critic_index(const CriticEnsembleSpec& ensemble, Rng& rng);
/// The member's backend spec drawn with the ensemble probabilities.
const BackendSpec& sample_critic_backend(const CriticEnsembleSpec& ensemble, Rng& rng);

}  // namespace cogform::llm
