#include "tomb/provider.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tomb {
namespace {

std::string unescape(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      const char next = text[i + 1];
      if (next == 'n') {
        out.push_back('\n');
        ++i;
        continue;
      }
      if (next == '\\') {
        out.push_back('\\');
        ++i;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

}  // namespace

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Length:
      return "length";
    case FinishReason::ContentFilter:
      return "content_filter";
    case FinishReason::Stop:
      break;
  }
  return "stop";
}

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig config;
  if (const char* url = std::getenv("TOMB_BASE_URL"); url != nullptr && *url != '\0') config.base_url = url;
  if (const char* model = std::getenv("TOMB_MODEL"); model != nullptr && *model != '\0') config.model_name = model;
  return config;
}

std::chrono::milliseconds BackoffPolicy::delay(int retry, double unit) const {
  const double nominal = static_cast<double>(base.count()) * std::pow(factor, retry);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(nominal * (1.0 + jitter * unit))));
}

void ScriptedResponses::push(PromptKind kind, std::string text) {
  queues_[kind].push_back(Entry{std::move(text), std::nullopt});
}

void ScriptedResponses::push_failure(PromptKind kind, ErrorCode code) {
  queues_[kind].push_back(Entry{{}, code});
}

std::size_t ScriptedResponses::remaining(PromptKind kind) const {
  auto it = queues_.find(kind);
  return it == queues_.end() ? 0 : it->second.size();
}

bool ScriptedResponses::empty() const {
  for (const auto& [kind, queue] : queues_) {
    if (!queue.empty()) return false;
  }
  return true;
}

void ScriptedResponses::skip(PromptKind kind, std::size_t n) {
  auto& queue = queues_[kind];
  while (n-- > 0 && !queue.empty()) queue.pop_front();
}

ScriptedResponses::Entry ScriptedResponses::pop(PromptKind kind) {
  auto it = queues_.find(kind);
  if (it == queues_.end() || it->second.empty()) {
    throw Error(ErrorCode::ScriptExhausted, "no scripted response left for '" + std::string(to_string(kind)) + "'",
                {{"kind", to_string(kind)}});
  }
  Entry entry = std::move(it->second.front());
  it->second.pop_front();
  return entry;
}

ScriptedResponses ScriptedResponses::parse(std::string_view text) {
  ScriptedResponses script;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::BadRequest, "script line " + std::to_string(line_no) + ": " + why, {{"line", line_no}});
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const std::size_t colon = line.find(':');
    const std::size_t bang = line.find('!');
    if (bang != std::string::npos && (colon == std::string::npos || bang < colon)) {
      const auto kind = parse_prompt_kind(trim(std::string_view(line).substr(0, bang)));
      if (!kind) fail("unknown prompt kind");
      try {
        script.push_failure(*kind, code_from_name(trim(std::string_view(line).substr(bang + 1))));
      } catch (const std::invalid_argument&) {
        fail("unknown error code");
      }
      continue;
    }
    if (colon == std::string::npos) fail("expected '<kind>: <text>' or '<kind> ! <CODE>'");
    const auto kind = parse_prompt_kind(trim(std::string_view(line).substr(0, colon)));
    if (!kind) fail("unknown prompt kind");
    std::string_view body = std::string_view(line).substr(colon + 1);
    if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
    script.push(*kind, unescape(body));
  }
  return script;
}

ScriptedResponses ScriptedResponses::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read script " + file.string(), {{"path", file.string()}});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

CompletionResult scripted_complete(const PromptBundle& bundle, ScriptedResponses& script) {
  check_params(bundle.params);
  ScriptedResponses::Entry entry = script.pop(bundle.kind);
  script.consumed.push_back(bundle);
  if (entry.failure) {
    throw Error(*entry.failure, "scripted failure for '" + std::string(to_string(bundle.kind)) + "'",
                {{"kind", to_string(bundle.kind)}, {"scripted", true}});
  }
  CompletionResult result;
  result.text = trim(entry.text);
  result.provider_name = "scripted";
  result.model_name = "script";
  return result;
}

ScriptedProvider::ScriptedProvider(ScriptedResponses script) : script_(std::move(script)) {}

CompletionResult ScriptedProvider::complete(const PromptBundle& bundle, std::stop_token stop) {
  if (stop.stop_requested()) throw Error(ErrorCode::Cancelled, "completion abandoned");
  check_params(bundle.params);
  std::lock_guard lock(mutex_);
  const bool queued = script_.remaining(bundle.kind) > 0;
  try {
    CompletionResult result = scripted_complete(bundle, script_);
    ++counts_[bundle.kind];
    return result;
  } catch (const Error&) {
    if (queued) ++counts_[bundle.kind];
    throw;
  }
}

void ScriptedProvider::push(PromptKind kind, std::string text) {
  std::lock_guard lock(mutex_);
  script_.push(kind, std::move(text));
}

void ScriptedProvider::push_failure(PromptKind kind, ErrorCode code) {
  std::lock_guard lock(mutex_);
  script_.push_failure(kind, code);
}

std::vector<PromptBundle> ScriptedProvider::consumed() const {
  std::lock_guard lock(mutex_);
  return script_.consumed;
}

std::map<PromptKind, std::size_t> ScriptedProvider::consumed_counts() const {
  std::lock_guard lock(mutex_);
  return counts_;
}

std::size_t ScriptedProvider::remaining(PromptKind kind) const {
  std::lock_guard lock(mutex_);
  return script_.remaining(kind);
}

}  // namespace tomb
