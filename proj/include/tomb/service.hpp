#pragma once

#include "tomb/engine.hpp"
#include "tomb/error.hpp"
#include "tomb/generation.hpp"
#include "tomb/prose.hpp"
#include "tomb/provider.hpp"
#include "tomb/store.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tomb {

struct ServiceConfig {
  std::filesystem::path data_dir;
  int provider_concurrency = 4;
  ContinuityMode continuity = ContinuityMode::Loose;
  std::size_t memory_limit = kDefaultMemoryLimit;
  // Source of new project ids; random ids when empty.
  std::function<std::string()> project_id_factory;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// HTTP status for each error code; the table is in API.md.
int http_status(ErrorCode code);

// {"error":{"code":...,"message":...,"details":...}}
std::string error_body(const Error& error);

// Transport-independent implementation of every endpoint. Mutations of one
// project run one at a time (load, apply, validate, save under that
// project's lock); different projects proceed in parallel. Provider calls
// are capped at provider_concurrency across the whole service.
class ProjectService {
 public:
  // `provider` may be null; operations that need it then fail with
  // PROVIDER_UNAVAILABLE.
  ProjectService(ServiceConfig config, std::shared_ptr<Provider> provider);
  ~ProjectService();

  ProjectService(const ProjectService&) = delete;
  ProjectService& operator=(const ProjectService&) = delete;

  ApiResponse handle(const ApiRequest& request);

  GenerationRegistry& generations() { return generations_; }
  ProjectStore& store() { return store_; }

 private:
  class Impl;
  ServiceConfig config_;
  ProjectStore store_;
  GenerationRegistry generations_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tomb
