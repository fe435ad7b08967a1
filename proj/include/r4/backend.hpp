// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "r4/domain.hpp"

namespace r4 {

enum class Role { Router, Retriever, BBox, Reflector, Repairer, Judge };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

/// Identifies a call within a run: which case, which pass@k candidate and
/// which repair iteration. The mock backend dispatches on it.
struct CallKey {
  Role role = Role::Retriever;
  std::string case_id;
  int pass_index = 0;
  int repair_iteration = 0;

  auto operator<=>(const CallKey&) const = default;
};

std::string to_string(const CallKey& key);

struct ModelRequest {
  CallKey key;
  std::string prompt;
  std::optional<ImageBlob> image;
  double temperature = 0.2;
  std::int64_t seed = 0;
  int max_output = 1024;
};

struct TranscriptEntry {
  CallKey key;
  std::string prompt;
  std::string response;
  std::string error;
};

/// Contract for every model call. Implementations must tolerate concurrent
/// complete() calls.
class Backend {
 public:
  Backend() = default;
  Backend(Backend&& other) noexcept;
  Backend& operator=(Backend&& other) noexcept;
  virtual ~Backend() = default;

  /// Returns raw model text. Throws Error(TransportError | EmptyResponse).
  std::string complete(const ModelRequest& request);

  /// Request/response log ordered by call key, then by call order within a key.
  std::vector<TranscriptEntry> transcript() const;
  void clear_transcript();

 protected:
  virtual std::string do_complete(const ModelRequest& request) = 0;

 private:
  mutable std::mutex log_mutex_;
  std::vector<TranscriptEntry> log_;
};

/// complete() with one retry on TransportError. EmptyResponse is not retried.
std::string complete_with_retry(Backend& backend, const ModelRequest& request);

enum class ScriptedFailure { MalformedJson, Empty, TransportError };

struct ScriptedBehavior {
  Role role = Role::Retriever;
  // Unset fields match any value; the most specific match wins.
  std::optional<std::string> case_id;
  std::optional<int> pass_index;
  std::optional<int> repair_iteration;
  std::string response;
  std::optional<std::chrono::milliseconds> latency;
  std::optional<ScriptedFailure> failure;
};

/// Deterministic backend replaying a script keyed by CallKey.
class MockBackend : public Backend {
 public:
  MockBackend() = default;
  explicit MockBackend(std::vector<ScriptedBehavior> script);

  /// Parses a JSON array of behaviour records. Throws Error(InvalidConfig).
  static MockBackend from_json(const Json& script);
  static MockBackend from_file(const std::filesystem::path& path);

  void add(ScriptedBehavior behavior);
  const std::vector<ScriptedBehavior>& script() const { return script_; }

 protected:
  std::string do_complete(const ModelRequest& request) override;

 private:
  const ScriptedBehavior* lookup(const CallKey& key) const;

  std::vector<ScriptedBehavior> script_;
};

struct HttpBackendConfig {
  std::string url;
  std::string model;
  /// JSON pointer to the generated text inside the response body.
  std::string response_path = "/text";
  std::string api_key_env = "R4_API_KEY";
  int timeout_seconds = 120;
};

/// POSTs {model, prompt, image_base64?, temperature, seed, max_output} as JSON.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  const HttpBackendConfig& config() const { return config_; }

 protected:
  std::string do_complete(const ModelRequest& request) override;

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

std::string base64_encode(std::string_view bytes);

/// Recovers a JSON object or array from free model text. Fenced code blocks
/// are unwrapped first; otherwise the first balanced {...} or [...] span that
/// parses is returned. Throws Error(NoJsonFound | MalformedJson).
Json extract_json(std::string_view text);

}  // namespace r4
