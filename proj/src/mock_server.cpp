#include "damagepipe/mock_server.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include "damagepipe/errors.hpp"

namespace damagepipe::inference {

namespace {

constexpr const char* kRoutes[] = {"/api/chat", "/api/tokenize", "/api/embed", "/api/upscale",
                                   "/api/detect"};

}  // namespace

MockServer::MockServer(std::shared_ptr<MockBackend> backend)
    : backend_(std::move(backend)), server_(std::make_unique<httplib::Server>()) {
  for (const char* route : kRoutes) {
    server_->Post(route, [this, route](const httplib::Request& req, httplib::Response& res) {
      const HttpResponse r = backend_->handle(route, req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
  }
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(fmt::format(R"({{"error":"http status {}"}})", res.status), "application/json");
    }
  });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw ConfigError(fmt::format("cannot bind {}:{}", host, port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace damagepipe::inference
