// SPDX-License-Identifier: Apache-2.0
#include "r4/backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <tuple>

#include <httplib.h>

namespace r4 {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Router: return "router";
    case Role::Retriever: return "retriever";
    case Role::BBox: return "bbox";
    case Role::Reflector: return "reflector";
    case Role::Repairer: return "repairer";
    case Role::Judge: return "judge";
  }
  return "retriever";
}

std::optional<Role> parse_role(std::string_view text) {
  for (auto r : {Role::Router, Role::Retriever, Role::BBox, Role::Reflector, Role::Repairer, Role::Judge})
    if (to_string(r) == text) return r;
  return std::nullopt;
}

std::string to_string(const CallKey& key) {
  return "(" + std::string(to_string(key.role)) + ", " + key.case_id + ", " +
         std::to_string(key.pass_index) + ", " + std::to_string(key.repair_iteration) + ")";
}

Backend::Backend(Backend&& other) noexcept {
  std::lock_guard lock(other.log_mutex_);
  log_ = std::move(other.log_);
}

Backend& Backend::operator=(Backend&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(log_mutex_, other.log_mutex_);
    log_ = std::move(other.log_);
  }
  return *this;
}

std::string Backend::complete(const ModelRequest& request) {
  TranscriptEntry entry{request.key, request.prompt, {}, {}};
  try {
    auto text = do_complete(request);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
      throw Error(ErrorKind::EmptyResponse, "empty response for " + to_string(request.key));
    entry.response = text;
    std::lock_guard lock(log_mutex_);
    log_.push_back(std::move(entry));
    return text;
  } catch (const Error& e) {
    entry.error = e.what();
    std::lock_guard lock(log_mutex_);
    log_.push_back(std::move(entry));
    throw;
  }
}

std::vector<TranscriptEntry> Backend::transcript() const {
  std::vector<TranscriptEntry> out;
  {
    std::lock_guard lock(log_mutex_);
    out = log_;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TranscriptEntry& a, const TranscriptEntry& b) { return a.key < b.key; });
  return out;
}

void Backend::clear_transcript() {
  std::lock_guard lock(log_mutex_);
  log_.clear();
}

std::string complete_with_retry(Backend& backend, const ModelRequest& request) {
  try {
    return backend.complete(request);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::TransportError) throw;
  }
  return backend.complete(request);
}

// ---------------------------------------------------------------------------
// MockBackend

namespace {

int specificity(const ScriptedBehavior& b) {
  return (b.case_id ? 4 : 0) + (b.pass_index ? 2 : 0) + (b.repair_iteration ? 1 : 0);
}

bool matches(const ScriptedBehavior& b, const CallKey& key) {
  return b.role == key.role && (!b.case_id || *b.case_id == key.case_id) &&
         (!b.pass_index || *b.pass_index == key.pass_index) &&
         (!b.repair_iteration || *b.repair_iteration == key.repair_iteration);
}

auto pattern(const ScriptedBehavior& b) {
  return std::tuple(b.role, b.case_id, b.pass_index, b.repair_iteration);
}

}  // namespace

MockBackend::MockBackend(std::vector<ScriptedBehavior> script) {
  for (auto& b : script) add(std::move(b));
}

void MockBackend::add(ScriptedBehavior behavior) {
  for (const auto& existing : script_)
    if (pattern(existing) == pattern(behavior))
      throw Error(ErrorKind::InvalidConfig, "duplicate scripted key for role " +
                                                std::string(to_string(behavior.role)));
  script_.push_back(std::move(behavior));
}

MockBackend MockBackend::from_json(const Json& script) {
  if (!script.is_array()) throw Error(ErrorKind::InvalidConfig, "mock script must be a JSON array");
  MockBackend mock;
  for (const auto& rec : script) {
    if (!rec.is_object()) throw Error(ErrorKind::InvalidConfig, "mock script record must be an object");
    ScriptedBehavior b;
    auto role = parse_role(rec.value("role", std::string{}));
    if (!role) throw Error(ErrorKind::InvalidConfig, "mock script record has unknown role");
    b.role = *role;
    if (rec.contains("case_id") && !rec["case_id"].is_null()) b.case_id = rec["case_id"].get<std::string>();
    if (rec.contains("pass_index") && !rec["pass_index"].is_null()) b.pass_index = rec["pass_index"].get<int>();
    if (rec.contains("repair_iteration") && !rec["repair_iteration"].is_null())
      b.repair_iteration = rec["repair_iteration"].get<int>();
    if (auto it = rec.find("response"); it != rec.end())
      b.response = it->is_string() ? it->get<std::string>() : it->dump();
    if (auto it = rec.find("latency_ms"); it != rec.end() && it->is_number())
      b.latency = std::chrono::milliseconds(it->get<int>());
    if (auto it = rec.find("failure"); it != rec.end() && it->is_string()) {
      const auto f = it->get<std::string>();
      if (f == "malformed_json") b.failure = ScriptedFailure::MalformedJson;
      else if (f == "empty") b.failure = ScriptedFailure::Empty;
      else if (f == "transport_error") b.failure = ScriptedFailure::TransportError;
      else throw Error(ErrorKind::InvalidConfig, "unknown scripted failure " + f);
    }
    mock.add(std::move(b));
  }
  return mock;
}

MockBackend MockBackend::from_file(const std::filesystem::path& path) {
  try {
    return from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

const ScriptedBehavior* MockBackend::lookup(const CallKey& key) const {
  const ScriptedBehavior* best = nullptr;
  for (const auto& b : script_)
    if (matches(b, key) && (!best || specificity(b) > specificity(*best))) best = &b;
  return best;
}

std::string MockBackend::do_complete(const ModelRequest& request) {
  const auto* b = lookup(request.key);
  if (!b) throw Error(ErrorKind::EmptyResponse, "no scripted behavior for " + to_string(request.key));
  if (b->latency) std::this_thread::sleep_for(*b->latency);
  if (b->failure) {
    switch (*b->failure) {
      case ScriptedFailure::TransportError:
        throw Error(ErrorKind::TransportError, "scripted transport failure for " + to_string(request.key));
      case ScriptedFailure::Empty:
        return {};
      case ScriptedFailure::MalformedJson:
        return "{\"unterminated\": [1, 2";
    }
  }
  return b->response;
}

// ---------------------------------------------------------------------------
// HttpBackend

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                   (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorKind::InvalidConfig, "backend url must include a scheme: " + config_.url);
  const auto path_start = config_.url.find('/', scheme_end + 3);
  scheme_host_port_ = config_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (config_.url.rfind("https", 0) == 0)
    throw Error(ErrorKind::InvalidConfig, "https endpoints need a build with OpenSSL");
#endif
}

std::string HttpBackend::do_complete(const ModelRequest& request) {
  Json body{{"model", config_.model},
            {"prompt", request.prompt},
            {"temperature", request.temperature},
            {"seed", request.seed},
            {"max_output", request.max_output}};
  if (request.image) body["image_base64"] = base64_encode(request.image->bytes);

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw Error(ErrorKind::TransportError, "request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(ErrorKind::TransportError, "HTTP status " + std::to_string(res->status));

  Json parsed;
  try {
    parsed = Json::parse(res->body);
  } catch (const Json::exception&) {
    throw Error(ErrorKind::TransportError, "response body is not JSON");
  }
  const Json::json_pointer ptr(config_.response_path);
  if (!parsed.contains(ptr))
    throw Error(ErrorKind::EmptyResponse, "response has no field at " + config_.response_path);
  const auto& field = parsed.at(ptr);
  return field.is_string() ? field.get<std::string>() : field.dump();
}

// ---------------------------------------------------------------------------
// extract_json

namespace {

// End index (inclusive) of the balanced span opening at `start`, honoring JSON
// string literals. nullopt when unbalanced or mismatched.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
  std::vector<char> stack;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '{': stack.push_back('}'); break;
      case '[': stack.push_back(']'); break;
      case '}':
      case ']':
        if (stack.empty() || stack.back() != c) return std::nullopt;
        stack.pop_back();
        if (stack.empty()) return i;
        break;
      default: break;
    }
  }
  return std::nullopt;
}

Json scan(std::string_view text) {
  bool saw_open = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    saw_open = true;
    auto end = balanced_end(text, i);
    if (!end) continue;
    auto parsed = Json::parse(text.substr(i, *end - i + 1), nullptr, false);
    if (!parsed.is_discarded()) return parsed;
  }
  if (saw_open) throw Error(ErrorKind::MalformedJson, "no parseable JSON span");
  throw Error(ErrorKind::NoJsonFound, "text contains no JSON object or array");
}

}  // namespace

Json extract_json(std::string_view text) {
  if (const auto fence = text.find("```"); fence != std::string_view::npos) {
    const auto close = text.find("```", fence + 3);
    auto body_start = text.find('\n', fence);
    body_start = (body_start == std::string_view::npos || body_start > close) ? fence + 3 : body_start + 1;
    auto inner = text.substr(body_start, close == std::string_view::npos ? text.npos : close - body_start);
    if (inner.find_first_of("{[") != std::string_view::npos) return scan(inner);
  }
  return scan(text);
}

}  // namespace r4
