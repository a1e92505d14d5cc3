#include "tomb/provider.hpp"

#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <random>
#include <thread>

namespace tomb {
namespace {

constexpr std::size_t kExcerptBytes = 512;

std::string excerpt(std::string_view body) {
  return std::string(body.substr(0, kExcerptBytes));
}

void interruptible_sleep(std::chrono::milliseconds delay, std::stop_token stop) {
  std::mutex m;
  std::condition_variable_any cv;
  std::unique_lock lock(m);
  cv.wait_for(lock, stop, delay, [] { return false; });
}

// Outcome of one HTTP attempt that did not produce a result.
struct AttemptFailure {
  ErrorCode code;
  bool transient;
  std::string message;
  nlohmann::json details;
};

}  // namespace

CompletionResult parse_completion_response(std::string_view body) {
  auto bad = [&](const std::string& why) -> Error {
    return Error(ErrorCode::MalformedResponse, "malformed provider response: " + why, {{"body_excerpt", excerpt(body)}});
  };
  nlohmann::json doc = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw bad("not a JSON object");
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty() || !(*choices)[0].is_object()) {
    throw bad("missing choices[0]");
  }
  const nlohmann::json& choice = (*choices)[0];
  FinishReason finish = FinishReason::Stop;
  if (auto fr = choice.find("finish_reason"); fr != choice.end() && !fr->is_null()) {
    if (!fr->is_string()) throw bad("finish_reason is not a string");
    const auto name = fr->get<std::string>();
    if (name == "length") {
      finish = FinishReason::Length;
    } else if (name == "content_filter") {
      finish = FinishReason::ContentFilter;
    } else if (name != "stop") {
      throw bad("unknown finish_reason '" + name + "'");
    }
  }
  if (finish == FinishReason::ContentFilter) {
    throw Error(ErrorCode::ContentFiltered, "the provider filtered the completion");
  }
  auto message = choice.find("message");
  if (message == choice.end() || !message->is_object()) throw bad("missing choices[0].message");
  auto content = message->find("content");
  if (content == message->end() || !content->is_string()) throw bad("missing choices[0].message.content");

  CompletionResult result;
  result.text = trim(content->get<std::string>());
  result.finish_reason = finish;
  if (auto model = doc.find("model"); model != doc.end() && model->is_string()) {
    result.model_name = model->get<std::string>();
  }
  return result;
}

HttpProvider::HttpProvider(ProviderConfig config, Sleeper sleeper, std::uint64_t jitter_seed)
    : config_(std::move(config)), sleeper_(std::move(sleeper)), rng_state_(jitter_seed) {
  if (config_.timeout.count() <= 0) throw Error(ErrorCode::InvalidParams, "provider timeout must be positive");
  if (config_.max_retries < 0) throw Error(ErrorCode::InvalidParams, "max_retries must be >= 0");
  if (!sleeper_) sleeper_ = interruptible_sleep;

  const std::string& url = config_.base_url;
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidParams, "base_url needs a scheme: " + url, {{"base_url", url}});
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
}

nlohmann::ordered_json HttpProvider::request_body(const PromptBundle& bundle) const {
  nlohmann::ordered_json body;
  body["model"] = config_.model_name;
  body["messages"] = nlohmann::ordered_json::array({
      nlohmann::ordered_json{{"role", "system"}, {"content", bundle.system_text}},
      nlohmann::ordered_json{{"role", "user"}, {"content", bundle.user_text}},
  });
  body["temperature"] = bundle.params.temperature;
  body["max_tokens"] = config_.max_output_tokens;
  body["stream"] = false;
  return body;
}

CompletionResult HttpProvider::complete(const PromptBundle& bundle, std::stop_token stop) {
  check_params(bundle.params);

  const std::string payload = request_body(bundle).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  httplib::Headers headers{{"Accept", "application/json"}};
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto started = std::chrono::steady_clock::now();
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);

  std::optional<AttemptFailure> last;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      double unit = 0.0;
      {
        std::lock_guard lock(rng_mutex_);
        std::mt19937_64 rng(rng_state_);
        rng_state_ = rng();
        unit = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
      }
      sleeper_(backoff_.delay(attempt - 1, unit), stop);
    }
    if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "completion abandoned", {{"retries", attempt}});

    httplib::Client client(origin_);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    auto res = client.Post(path_, headers, payload, "application/json");

    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                             err == httplib::Error::ConnectionTimeout;
      last = AttemptFailure{timed_out ? ErrorCode::Timeout : ErrorCode::ProviderUnavailable, true,
                            "request to provider failed: " + httplib::to_string(err), nullptr};
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw Error(ErrorCode::AuthFailed,
                  "provider rejected the credentials from $" + config_.api_key_env + " (HTTP " +
                      std::to_string(status) + ")",
                  {{"status", status}, {"api_key_env", config_.api_key_env}});
    }
    if (status == 429) {
      last = AttemptFailure{ErrorCode::RateLimited, true, "provider rate limit (HTTP 429)", {{"status", status}}};
      continue;
    }
    if (status == 408) {
      last = AttemptFailure{ErrorCode::Timeout, true, "provider timed out (HTTP 408)", {{"status", status}}};
      continue;
    }
    if (status >= 500) {
      last = AttemptFailure{ErrorCode::ProviderError, true, "provider error (HTTP " + std::to_string(status) + ")",
                            {{"status", status}, {"body_excerpt", excerpt(res->body)}}};
      continue;
    }
    if (status < 200 || status >= 300) {
      throw Error(ErrorCode::ProviderError, "provider refused the request (HTTP " + std::to_string(status) + ")",
                  {{"status", status}, {"body_excerpt", excerpt(res->body)}});
    }
    CompletionResult result = parse_completion_response(res->body);
    result.provider_name = "http";
    if (result.model_name.empty()) result.model_name = config_.model_name;
    result.retries = attempt;
    result.latency_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count());
    return result;
  }
  nlohmann::json details = last->details.is_null() ? nlohmann::json::object() : last->details;
  details["retries"] = config_.max_retries;
  throw Error(last->code, last->message + " after " + std::to_string(config_.max_retries) + " retries", details);
}

}  // namespace tomb
