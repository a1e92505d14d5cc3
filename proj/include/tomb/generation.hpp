#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tomb {

enum class GenerationPhase { Queued, Prompting, AwaitingProvider, Parsing, Done, Failed };

std::string_view to_string(GenerationPhase phase);
bool is_terminal(GenerationPhase phase);

struct GenerationEvent {
  std::string request_id;
  int sequence = 0;
  GenerationPhase phase = GenerationPhase::Queued;
  nlohmann::json payload;  // null when absent

  nlohmann::ordered_json to_json() const;
};

// Event log per generation request. Late subscribers get the full history;
// finished requests are kept until `retain` newer ones have finished.
class GenerationRegistry {
 public:
  explicit GenerationRegistry(std::size_t retain = 256);

  // Registers a request and records its queued event.
  std::string start(nlohmann::json payload = nullptr);

  // Appends an event. Anything after the terminal event is ignored.
  void emit(const std::string& request_id, GenerationPhase phase, nlohmann::json payload = nullptr);

  // Throws UnknownRequest.
  std::vector<GenerationEvent> snapshot(const std::string& request_id) const;

  struct Batch {
    std::vector<GenerationEvent> events;
    bool finished = false;
  };

  // Events with sequence >= `from`; waits up to `timeout` when none are
  // available yet. Throws UnknownRequest.
  Batch wait(const std::string& request_id, std::size_t from, std::chrono::milliseconds timeout) const;

  // Blocks until the request has finished and returns its whole log.
  std::vector<GenerationEvent> wait_finished(const std::string& request_id) const;

 private:
  struct Log {
    std::vector<GenerationEvent> events;
    bool finished = false;
  };

  const Log& log_locked(const std::string& request_id) const;

  std::size_t retain_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, Log> logs_;
  std::deque<std::string> finished_order_;
  std::uint64_t counter_ = 0;
};

}  // namespace tomb
