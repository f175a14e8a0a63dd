#include "cogform/llm_gateway.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace cogform::llm {

namespace {

std::atomic<std::uint64_t> g_http_requests{0};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

const std::string& last_user_message(const Conversation& messages) {
  static const std::string empty;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  return empty;
}

}  // namespace

std::string_view role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw SchemaError("unknown chat role '" + std::string(s) + "'");
}

nlohmann::json to_json(const Conversation& messages) {
  auto arr = nlohmann::json::array();
  for (const auto& m : messages) arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  return arr;
}

Conversation conversation_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError("messages must be an array");
  Conversation out;
  for (const auto& m : j) {
    if (!m.is_object() || !m.contains("role") || !m.contains("content")) throw SchemaError("malformed chat message");
    out.push_back({role_from_name(m["role"].get<std::string>()), m["content"].get<std::string>()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Specs

void BackendSpec::validate() const {
  switch (kind) {
    case BackendKind::Http:
      if (endpoint.empty() || model.empty()) throw SchemaError("http backend '" + name + "' needs endpoint and model");
      break;
    case BackendKind::Replay:
      if (transcript_path.empty()) throw SchemaError("replay backend '" + name + "' needs a transcript path");
      break;
    case BackendKind::Scripted:
      if (!script && rules.empty() && default_reply.empty()) {
        throw SchemaError("scripted backend '" + name + "' has neither a script nor reply rules");
      }
      break;
  }
  if (temperature < 0) throw SchemaError("backend '" + name + "': temperature must be >= 0");
  if (retries < 0) throw SchemaError("backend '" + name + "': retries must be >= 0");
}

BackendSpec backend_from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw SchemaError("backend spec must be an object");
  BackendSpec s;
  const std::string kind = j.value("kind", "");
  if (kind == "http") s.kind = BackendKind::Http;
  else if (kind == "replay") s.kind = BackendKind::Replay;
  else if (kind == "scripted") s.kind = BackendKind::Scripted;
  else throw SchemaError("backend kind must be http, replay or scripted (got '" + kind + "')");
  try {
    s.name = j.value("name", kind);
    s.endpoint = j.value("endpoint", "");
    s.model = j.value("model", "");
    s.temperature = j.value("temperature", 0.0);
    s.timeout_ms = j.value("timeout_ms", 60000);
    s.retries = j.value("retries", 2);
    s.api_key_env = j.value("api_key_env", "OPENAI_API_KEY");
    s.transcript_path = resolve(j.value("transcript", ""), base_dir);
    s.record_path = resolve(j.value("record", ""), base_dir);
    if (j.contains("rules")) {
      for (const auto& r : j["rules"]) s.rules.push_back({r.at("contains").get<std::string>(), r.at("reply").get<std::string>()});
    }
    s.default_reply = j.value("default", "");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("backend spec: " + std::string(e.what()));
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const BackendSpec& s) {
  nlohmann::json j;
  switch (s.kind) {
    case BackendKind::Http: j["kind"] = "http"; break;
    case BackendKind::Replay: j["kind"] = "replay"; break;
    case BackendKind::Scripted: j["kind"] = "scripted"; break;
  }
  j["name"] = s.name;
  j["model"] = s.model;
  if (!s.endpoint.empty()) j["endpoint"] = s.endpoint;
  j["temperature"] = s.temperature;
  if (!s.transcript_path.empty()) j["transcript"] = s.transcript_path;
  if (!s.rules.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& r : s.rules) arr.push_back({{"contains", r.contains}, {"reply", r.reply}});
    j["rules"] = std::move(arr);
  }
  if (!s.default_reply.empty()) j["default"] = s.default_reply;
  return j;
}

std::string request_hash(const std::string& model, const Conversation& messages) {
  const nlohmann::json req = {{"model", model}, {"messages", to_json(messages)}};
  return hex64(fnv1a64(req.dump()));
}

std::uint64_t http_requests_issued() { return g_http_requests.load(); }

ChatMessage complete(ChatBackend& backend, const Conversation& messages) {
  if (messages.empty()) throw std::invalid_argument("chat request needs at least one message");
  for (const auto& m : messages) {
    if (m.role != Role::System && m.content.empty()) {
      throw std::invalid_argument("user and assistant messages must be nonempty");
    }
  }
  return backend.complete(messages);
}

// ---------------------------------------------------------------------------
// Scripted

ScriptedBackend::ScriptedBackend(std::string name, ScriptFn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

ChatMessage ScriptedBackend::complete(const Conversation& messages) {
  return {Role::Assistant, fn_(messages)};
}

// ---------------------------------------------------------------------------
// Replay

ReplayBackend::ReplayBackend(std::string name, std::string model, const std::string& transcript_path)
    : name_(std::move(name)), model_(std::move(model)), path_(transcript_path) {
  std::ifstream in(transcript_path);
  if (!in) throw IoError("cannot open replay transcript '" + transcript_path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      responses_[j.at("request_hash").get<std::string>()].push_back(j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(transcript_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

ChatMessage ReplayBackend::complete(const Conversation& messages) {
  const std::string hash = request_hash(model_, messages);
  std::lock_guard lock(mutex_);
  auto it = responses_.find(hash);
  if (it == responses_.end()) {
    std::string snippet = last_user_message(messages).substr(0, 80);
    throw ReplayMiss("replay backend '" + name_ + "': no recorded response for request " + hash + " (" + snippet + ")");
  }
  auto& cursor = cursor_[hash];
  if (cursor >= it->second.size()) {
    throw ReplayMiss("replay backend '" + name_ + "': recorded responses for request " + hash + " exhausted");
  }
  return {Role::Assistant, it->second[cursor++]};
}

// ---------------------------------------------------------------------------
// HTTP

HttpResponse http_post(const std::string& url_base, const std::string& path, const std::string& body,
                       const std::string& bearer, int timeout_ms) {
  httplib::Client client(url_base);
  const auto secs = timeout_ms / 1000;
  const auto usecs = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

namespace {

// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, path_start), prefix};
}

}  // namespace

HttpBackend::HttpBackend(BackendSpec spec, HttpPost post) : spec_(std::move(spec)), post_(std::move(post)) {
  spec_.validate();
  if (!post_) post_ = http_post;
}

ChatMessage HttpBackend::complete(const Conversation& messages) {
  auto [base, prefix] = split_endpoint(spec_.endpoint);
  const bool has_version = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
  const std::string path = prefix + (has_version ? "/chat/completions" : "/v1/chat/completions");
  const nlohmann::json body = {
      {"model", spec_.model}, {"messages", to_json(messages)}, {"temperature", spec_.temperature}, {"stream", false}};
  const std::string payload = body.dump();
  std::string key;
  if (const char* k = std::getenv(spec_.api_key_env.c_str())) key = k;

  std::string last_error;
  for (int attempt = 0; attempt <= spec_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(std::min(2000, 100 << (attempt - 1))));
    }
    g_http_requests.fetch_add(1);
    const HttpResponse res = post_(base, path, payload, key, spec_.timeout_ms);
    if (res.status == 0) {
      last_error = "transport failure: " + res.body;
      continue;
    }
    if (res.status == 429 || res.status >= 500) {
      last_error = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status != 200) {
      throw TransportError("backend '" + spec_.name + "': HTTP " + std::to_string(res.status) + ": " +
                           res.body.substr(0, 200));
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res.body);
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw ProtocolError("content is not a string");
      return {Role::Assistant, content.get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError("backend '" + spec_.name + "': malformed chat completion: " + e.what());
    }
  }
  throw TransportError("backend '" + spec_.name + "': giving up after " + std::to_string(spec_.retries + 1) +
                       " attempt(s): " + last_error);
}

// ---------------------------------------------------------------------------
// Recording

RecordingBackend::RecordingBackend(std::unique_ptr<ChatBackend> inner, std::string model, std::string path)
    : inner_(std::move(inner)), model_(std::move(model)), path_(std::move(path)) {}

ChatMessage RecordingBackend::complete(const Conversation& messages) {
  ChatMessage reply = inner_->complete(messages);
  const nlohmann::json line = {{"request_hash", request_hash(model_, messages)},
                               {"request", {{"model", model_}, {"messages", to_json(messages)}}},
                               {"response", reply.content}};
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to transcript '" + path_ + "'");
  out << line.dump() << '\n';
  return reply;
}

// ---------------------------------------------------------------------------
// Factory

std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec) {
  spec.validate();
  std::unique_ptr<ChatBackend> backend;
  switch (spec.kind) {
    case BackendKind::Http: backend = std::make_unique<HttpBackend>(spec); break;
    case BackendKind::Replay: backend = std::make_unique<ReplayBackend>(spec.name, spec.model, spec.transcript_path); break;
    case BackendKind::Scripted: {
      ScriptFn fn = spec.script;
      if (!fn) {
        fn = [rules = spec.rules, fallback = spec.default_reply](const Conversation& messages) {
          const std::string& prompt = last_user_message(messages);
          for (const auto& r : rules) {
            if (prompt.find(r.contains) != std::string::npos) return r.reply;
          }
          return fallback;
        };
      }
      backend = std::make_unique<ScriptedBackend>(spec.name, std::move(fn));
      break;
    }
  }
  if (!spec.record_path.empty()) {
    backend = std::make_unique<RecordingBackend>(std::move(backend), spec.model, spec.record_path);
  }
  return backend;
}

// ---------------------------------------------------------------------------
// Ensembles

void CriticEnsembleSpec::validate() const {
  if (members.empty()) throw SchemaError("critic ensemble is empty");
  double total = 0;
  for (const auto& m : members) {
    if (!(m.probability >= 0)) throw SchemaError("critic probabilities must be nonnegative");
    m.backend.validate();
    total += m.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw SchemaError("critic probabilities must sum to 1");
}

std::size_t sample_critic_index(const CriticEnsembleSpec& ensemble, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    acc += ensemble.members[i].probability;
    if (u < acc) return i;
  }
  // Rounding slack: fall back to the last member with nonzero weight.
  for (std::size_t i = ensemble.members.size(); i-- > 0;) {
    if (ensemble.members[i].probability > 0) return i;
  }
  return ensemble.members.size() - 1;
}

const BackendSpec& sample_critic_backend(const CriticEnsembleSpec& ensemble, Rng& rng) {
  return ensemble.members[sample_critic_index(ensemble, rng)].backend;
}

}  // namespace cogform::llm
