#pragma once

#include "tomb/error.hpp"
#include "tomb/prompt.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

namespace tomb {

enum class FinishReason { Stop, Length, ContentFilter };

std::string_view to_string(FinishReason r);

struct CompletionResult {
  std::string text;
  std::string provider_name;
  std::string model_name;
  int latency_ms = 0;
  FinishReason finish_reason = FinishReason::Stop;
  int retries = 0;
};

// A completion backend. Implementations must be safe to call concurrently.
// Callers abandon a call by requesting stop on the token; the provider then
// stops retrying and throws Cancelled.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) = 0;
};

struct ProviderConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model_name = "default";
  // Name of the environment variable holding the key; the key itself is
  // never stored, logged or serialized.
  std::string api_key_env = "TOMB_API_KEY";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  int max_output_tokens = 1024;

  // Defaults overridden by TOMB_BASE_URL and TOMB_MODEL when set.
  static ProviderConfig from_env();
};

// Retry schedule: base 500 ms, factor 2, jitter +/-20%.
struct BackoffPolicy {
  std::chrono::milliseconds base{500};
  double factor = 2.0;
  double jitter = 0.2;

  // Delay before retry number `retry` (0-based); `unit` in [-1, 1] selects the
  // point inside the jitter band.
  std::chrono::milliseconds delay(int retry, double unit) const;
};

// Chat-completion client for the request/response shape in PROVIDER.md.
class HttpProvider final : public Provider {
 public:
  // Waits for the given delay unless stop is requested first.
  using Sleeper = std::function<void(std::chrono::milliseconds, std::stop_token)>;

  explicit HttpProvider(ProviderConfig config, Sleeper sleeper = {}, std::uint64_t jitter_seed = 0x70b5eedULL);

  CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) override;

  nlohmann::ordered_json request_body(const PromptBundle& bundle) const;

  const ProviderConfig& config() const { return config_; }

 private:
  ProviderConfig config_;
  Sleeper sleeper_;
  BackoffPolicy backoff_;
  std::mutex rng_mutex_;
  std::uint64_t rng_state_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // path prefix + /chat/completions
};

// Parses a chat-completion response body. Throws MalformedResponse or
// ContentFiltered.
CompletionResult parse_completion_response(std::string_view body);

// Per-kind FIFO queues of canned responses. An entry may instead carry an
// error code, which is thrown when the entry is consumed.
class ScriptedResponses {
 public:
  struct Entry {
    std::string text;
    std::optional<ErrorCode> failure;
  };

  void push(PromptKind kind, std::string text);
  void push_failure(PromptKind kind, ErrorCode code);

  std::size_t remaining(PromptKind kind) const;
  bool empty() const;

  // Discards the first n entries of a queue (used to resume a script across
  // CLI invocations).
  void skip(PromptKind kind, std::size_t n);

  // Line format, see PROVIDER.md:
  //   <kind>: <text>        text may use \n and \\ escapes
  //   <kind> ! <ERROR_CODE>
  // Blank lines and lines starting with '#' are ignored. Throws BadRequest.
  static ScriptedResponses parse(std::string_view text);
  static ScriptedResponses load(const std::filesystem::path& file);

  Entry pop(PromptKind kind);  // throws ScriptExhausted

  // Bundles consumed so far, in call order.
  std::vector<PromptBundle> consumed;

 private:
  std::map<PromptKind, std::deque<Entry>> queues_;
};

// Returns the next queued response for bundle.kind and records the bundle.
CompletionResult scripted_complete(const PromptBundle& bundle, ScriptedResponses& script);

// Thread-safe Provider over a ScriptedResponses.
class ScriptedProvider final : public Provider {
 public:
  explicit ScriptedProvider(ScriptedResponses script = {});

  CompletionResult complete(const PromptBundle& bundle, std::stop_token stop = {}) override;

  void push(PromptKind kind, std::string text);
  void push_failure(PromptKind kind, ErrorCode code);

  std::vector<PromptBundle> consumed() const;
  std::map<PromptKind, std::size_t> consumed_counts() const;
  std::size_t remaining(PromptKind kind) const;

 private:
  mutable std::mutex mutex_;
  ScriptedResponses script_;
  std::map<PromptKind, std::size_t> counts_;
};

}  // namespace tomb
