#include "tomb/server.hpp"

#include <httplib.h>

#include <csignal>
#include <iostream>

namespace tomb {
namespace {

ApiRequest to_api_request(const httplib::Request& req) {
  ApiRequest out;
  out.method = req.method;
  out.path = req.path;
  for (const auto& [key, value] : req.params) out.query[key] = value;
  out.body = req.body;
  return out;
}

std::string sse_frame(const GenerationEvent& e) {
  return "id: " + std::to_string(e.sequence) + "\nevent: " + std::string(to_string(e.phase)) +
         "\ndata: " + e.to_json().dump() + "\n\n";
}

HttpServer* g_current = nullptr;

void on_signal(int) {
  if (g_current != nullptr) g_current->stop();
}

}  // namespace

HttpServer::HttpServer(ProjectService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse api = service_.handle(to_api_request(req));
    res.status = api.status;
    res.set_content(api.body, api.content_type);
  };

  server_->Get(R"(/generations/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string rid = req.matches[1];
    try {
      service_.generations().snapshot(rid);
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_body(e), "application/json");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, rid, next = std::size_t{0}](
                                                              std::size_t, httplib::DataSink& sink) mutable {
      GenerationRegistry::Batch batch;
      try {
        batch = service_.generations().wait(rid, next, std::chrono::milliseconds(500));
      } catch (const Error&) {
        sink.done();  // evicted
        return true;
      }
      for (const auto& e : batch.events) {
        const std::string frame = sse_frame(e);
        if (!sink.write(frame.data(), frame.size())) return false;
      }
      next += batch.events.size();
      if (batch.finished) sink.done();
      return true;
    });
  });
  server_->Get(".*", forward);
  server_->Post(".*", forward);
  server_->Patch(".*", forward);
  server_->Delete(".*", forward);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

int serve(const ServeOptions& options, std::shared_ptr<Provider> provider) {
  std::unique_ptr<ProjectService> service;
  try {
    service = std::make_unique<ProjectService>(options.service, std::move(provider));
  } catch (const Error& e) {
    std::cerr << "tomb: " << e.name() << ": " << e.what() << "\n";
    return 1;
  }
  HttpServer server(*service);
  const int port = server.bind(options.host, options.port);
  if (port < 0) {
    std::cerr << "tomb: cannot listen on " << options.host << ":" << options.port << "\n";
    return 1;
  }
  std::cerr << "tomb: serving " << options.service.data_dir.string() << " on http://" << options.host << ":" << port
            << "\n";
  g_current = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const bool ok = server.listen();
  g_current = nullptr;
  return ok ? 0 : 1;
}

}  // namespace tomb
