#include "tomb/store.hpp"

#include "tomb/error.hpp"
#include "tomb/serialize.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace tomb {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void storage_failure(const std::string& what, const fs::path& path) {
  throw Error(ErrorCode::StorageFailure, what + " " + path.string() + ": " + std::strerror(errno),
              {{"path", path.string()}});
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      storage_failure("cannot write", path);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

class FileDescriptor {
 public:
  explicit FileDescriptor(int fd) : fd_(fd) {}
  FileDescriptor(const FileDescriptor&) = delete;
  FileDescriptor& operator=(const FileDescriptor&) = delete;
  ~FileDescriptor() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const { return fd_; }

 private:
  int fd_;
};

std::string temp_suffix() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  return ".tmp-" + std::to_string(rng() % 1000000000ULL);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) storage_failure("cannot read", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Title shown in listings: the logline when set, else the premise clipped to
// 60 bytes on a UTF-8 boundary.
std::string title_of(const StoryInstrument& instr) {
  if (instr.premise.logline && !trim(*instr.premise.logline).empty()) return trim(*instr.premise.logline);
  const std::string& text = instr.premise.text;
  if (text.size() <= 60) return text;
  std::size_t cut = 60;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut) + "...";
}

bool is_project_file(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.size() > ProjectStore::kExtension.size() &&
         name.compare(name.size() - ProjectStore::kExtension.size(), std::string::npos, ProjectStore::kExtension) == 0;
}

}  // namespace

ProjectStore::ProjectStore(fs::path root_dir) : root_(std::move(root_dir)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec || !fs::is_directory(root_)) {
    throw Error(ErrorCode::StorageFailure, "cannot use data directory " + root_.string(), {{"path", root_.string()}});
  }
  if (::access(root_.c_str(), R_OK | W_OK | X_OK) != 0) storage_failure("data directory is not accessible", root_);
  rescan();
}

bool ProjectStore::valid_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char ch) { return std::isalnum(ch) || ch == '-' || ch == '_'; });
}

fs::path ProjectStore::path_for(const std::string& id) const {
  if (!valid_id(id)) throw Error(ErrorCode::NotFound, "no project '" + id + "'", {{"project", id}});
  return root_ / (id + std::string(kExtension));
}

void ProjectStore::save(const StoryInstrument& instr) {
  const fs::path target = path_for(instr.id);
  const std::string bytes = serialize(instr);
  const fs::path temp = target.string() + temp_suffix();
  {
    FileDescriptor fd(::open(temp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (fd.get() < 0) storage_failure("cannot create", temp);
    const std::size_t half = bytes.size() / 2;
    write_all(fd.get(), std::string_view(bytes).substr(0, half), temp);
    if (fault_hook_) fault_hook_(SaveStage::TempPartiallyWritten);
    write_all(fd.get(), std::string_view(bytes).substr(half), temp);
    if (::fsync(fd.get()) != 0) storage_failure("cannot sync", temp);
  }
  if (fault_hook_) fault_hook_(SaveStage::TempWritten);
  if (::rename(temp.c_str(), target.c_str()) != 0) {
    const int saved = errno;
    ::unlink(temp.c_str());
    errno = saved;
    storage_failure("cannot replace", target);
  }
  {
    FileDescriptor dir(::open(root_.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
    if (dir.get() >= 0) ::fsync(dir.get());
  }
  std::lock_guard lock(index_mutex_);
  index_[instr.id] = IndexEntry{target, instr.updated_at};
}

StoryInstrument ProjectStore::load(const std::string& id) const {
  const fs::path path = path_for(id);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorCode::NotFound, "no project '" + id + "'", {{"project", id}});
  StoryInstrument instr = deserialize(read_file(path));
  if (instr.id != id) {
    throw Error(ErrorCode::MalformedDocument, "file " + path.string() + " holds project '" + instr.id + "'",
                {{"path", "/id"}});
  }
  return instr;
}

bool ProjectStore::exists(const std::string& id) const {
  if (!valid_id(id)) return false;
  std::error_code ec;
  return fs::is_regular_file(path_for(id), ec);
}

void ProjectStore::remove(const std::string& id) {
  const fs::path path = path_for(id);
  std::error_code ec;
  if (!fs::remove(path, ec)) {
    if (ec) storage_failure("cannot delete", path);
    throw Error(ErrorCode::NotFound, "no project '" + id + "'", {{"project", id}});
  }
  std::lock_guard lock(index_mutex_);
  index_.erase(id);
}

void ProjectStore::rescan() const {
  std::map<std::string, IndexEntry> fresh;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root_, ec)) {
    if (!entry.is_regular_file() || !is_project_file(entry.path())) continue;
    const std::string name = entry.path().filename().string();
    const std::string id = name.substr(0, name.size() - kExtension.size());
    if (!valid_id(id)) continue;
    fresh[id] = IndexEntry{entry.path(), {}};
  }
  std::lock_guard lock(index_mutex_);
  index_ = std::move(fresh);
}

std::vector<ProjectSummary> ProjectStore::list() const {
  rescan();
  std::map<std::string, IndexEntry> snapshot;
  {
    std::lock_guard lock(index_mutex_);
    snapshot = index_;
  }
  std::vector<ProjectSummary> out;
  for (auto& [id, entry] : snapshot) {
    try {
      const StoryInstrument instr = load(id);
      out.push_back(ProjectSummary{id, title_of(instr), instr.updated_at});
      std::lock_guard lock(index_mutex_);
      if (auto it = index_.find(id); it != index_.end()) it->second.updated_at = instr.updated_at;
    } catch (const Error&) {
      // Unreadable documents are skipped; load() reports them individually.
    }
  }
  return out;
}

}  // namespace tomb
