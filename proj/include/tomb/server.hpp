#pragma once

#include "tomb/service.hpp"

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace tomb {

// Serves a ProjectService over HTTP. Event streams are delivered live as
// server-sent events; every other endpoint maps 1:1 onto ProjectService::handle.
class HttpServer {
 public:
  explicit HttpServer(ProjectService& service);
  ~HttpServer();

  // Returns the bound port, or -1 if binding failed. port 0 picks a free port.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  ProjectService& service_;
  std::unique_ptr<httplib::Server> server_;
};

struct ServeOptions {
  ServiceConfig service;
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Runs until the process is interrupted. Returns a process exit code;
// startup failures are reported on stderr and yield 1.
int serve(const ServeOptions& options, std::shared_ptr<Provider> provider);

}  // namespace tomb
