#include "tomb/generation.hpp"

#include "tomb/error.hpp"

#include <random>

namespace tomb {

std::string_view to_string(GenerationPhase phase) {
  switch (phase) {
    case GenerationPhase::Queued:
      return "queued";
    case GenerationPhase::Prompting:
      return "prompting";
    case GenerationPhase::AwaitingProvider:
      return "awaiting_provider";
    case GenerationPhase::Parsing:
      return "parsing";
    case GenerationPhase::Done:
      return "done";
    case GenerationPhase::Failed:
      return "failed";
  }
  return "unknown";
}

bool is_terminal(GenerationPhase phase) { return phase == GenerationPhase::Done || phase == GenerationPhase::Failed; }

nlohmann::ordered_json GenerationEvent::to_json() const {
  nlohmann::ordered_json j;
  j["request_id"] = request_id;
  j["sequence"] = sequence;
  j["phase"] = to_string(phase);
  j["payload"] = payload;
  return j;
}

GenerationRegistry::GenerationRegistry(std::size_t retain) : retain_(retain) {}

std::string GenerationRegistry::start(nlohmann::json payload) {
  static thread_local std::mt19937 rng{std::random_device{}()};
  std::lock_guard lock(mutex_);
  const std::string id = "gen-" + std::to_string(++counter_) + "-" + std::to_string(rng() % 100000);
  Log& log = logs_[id];
  log.events.push_back(GenerationEvent{id, 0, GenerationPhase::Queued, std::move(payload)});
  changed_.notify_all();
  return id;
}

void GenerationRegistry::emit(const std::string& request_id, GenerationPhase phase, nlohmann::json payload) {
  std::lock_guard lock(mutex_);
  auto it = logs_.find(request_id);
  if (it == logs_.end() || it->second.finished) return;
  Log& log = it->second;
  log.events.push_back(
      GenerationEvent{request_id, static_cast<int>(log.events.size()), phase, std::move(payload)});
  if (is_terminal(phase)) {
    log.finished = true;
    finished_order_.push_back(request_id);
    while (finished_order_.size() > retain_) {
      logs_.erase(finished_order_.front());
      finished_order_.pop_front();
    }
  }
  changed_.notify_all();
}

const GenerationRegistry::Log& GenerationRegistry::log_locked(const std::string& request_id) const {
  auto it = logs_.find(request_id);
  if (it == logs_.end()) {
    throw Error(ErrorCode::UnknownRequest, "no generation '" + request_id + "'", {{"request_id", request_id}});
  }
  return it->second;
}

std::vector<GenerationEvent> GenerationRegistry::snapshot(const std::string& request_id) const {
  std::lock_guard lock(mutex_);
  return log_locked(request_id).events;
}

GenerationRegistry::Batch GenerationRegistry::wait(const std::string& request_id, std::size_t from,
                                                   std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  log_locked(request_id);
  changed_.wait_for(lock, timeout, [&] {
    auto it = logs_.find(request_id);
    return it == logs_.end() || it->second.finished || it->second.events.size() > from;
  });
  const Log& log = log_locked(request_id);
  Batch batch;
  batch.finished = log.finished;
  for (std::size_t i = from; i < log.events.size(); ++i) batch.events.push_back(log.events[i]);
  return batch;
}

std::vector<GenerationEvent> GenerationRegistry::wait_finished(const std::string& request_id) const {
  std::unique_lock lock(mutex_);
  log_locked(request_id);
  changed_.wait(lock, [&] {
    auto it = logs_.find(request_id);
    return it == logs_.end() || it->second.finished;
  });
  return log_locked(request_id).events;
}

}  // namespace tomb
