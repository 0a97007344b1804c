#pragma once

#include <memory>
#include <string>
#include <thread>

#include "damagepipe/mock_backend.hpp"

namespace httplib {
class Server;
}

namespace damagepipe::inference {

/// Serves a MockBackend over HTTP on the wire protocol routes so external
/// clients (and the conformance suite) can talk to it.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<MockBackend> backend);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks until the server stops.
  void wait();
  void stop();

  int port() const noexcept { return port_; }
  MockBackend& backend() noexcept { return *backend_; }

 private:
  std::shared_ptr<MockBackend> backend_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace damagepipe::inference
