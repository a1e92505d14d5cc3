#pragma once

#include "tomb/types.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace tomb {

struct ProjectSummary {
  std::string id;
  std::string title;
  Timestamp updated_at{};
};

// Points inside save() where a test hook may throw to imitate a crash.
enum class SaveStage { TempPartiallyWritten, TempWritten };

// One canonical document per project under root_dir, named <id>.tomb.json.
// Saves go through a temp file in the same directory followed by rename(2),
// so a reader sees either the old or the new version.
class ProjectStore {
 public:
  static constexpr std::string_view kExtension = ".tomb.json";

  // Creates root_dir if needed. Throws StorageFailure if it is unusable.
  explicit ProjectStore(std::filesystem::path root_dir);

  // Throws InvariantViolation for invalid instruments, StorageFailure on I/O.
  void save(const StoryInstrument& instr);

  // Throws NotFound, MalformedDocument, SchemaVersionTooNew, InvariantViolation.
  StoryInstrument load(const std::string& id) const;

  bool exists(const std::string& id) const;
  void remove(const std::string& id);  // throws NotFound
  std::vector<ProjectSummary> list() const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(const std::string& id) const;

  using FaultHook = std::function<void(SaveStage)>;
  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

  // Ids are restricted to [A-Za-z0-9_-], 1..64 characters.
  static bool valid_id(std::string_view id);

 private:
  struct IndexEntry {
    std::filesystem::path path;
    Timestamp updated_at{};
  };

  void rescan() const;

  std::filesystem::path root_;
  FaultHook fault_hook_;
  mutable std::mutex index_mutex_;
  mutable std::map<std::string, IndexEntry> index_;
};

}  // namespace tomb
