#pragma once

// Client side of the inference wire protocol.
//
// One POST route per capability, JSON bodies, images as base64 PNG:
//
//   /api/chat      {"model","prompt","images":[b64...],"options":{"temperature","seed"}}
//                  -> {"response": text}
//   /api/tokenize  {"model","text"} -> {"tokens":[int...]}  (+ optional "sentinels": int)
//                  {"model","tokens":[int...],"decode":true} -> {"text": text}
//   /api/embed     {"model","text"} | {"model","image"} -> {"embedding":[float...]}
//   /api/upscale   {"image":b64,"factor":int} -> {"image":b64}
//   /api/detect    {"image":b64}
//                  -> {"detections":[{"box":[x0,y0,x1,y1],"confidence":f,"class":s}...]}
//
// Errors are non-2xx responses carrying {"error": text}.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "damagepipe/geometry.hpp"
#include "damagepipe/raster.hpp"

namespace damagepipe::inference {

inline constexpr int kClipContextTokens = 77;

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Thrown by transports for connection-level failures; the client retries
/// these and converts exhaustion into BackendUnavailable.
class TransportFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(std::string_view route, const std::string& body,
                            std::chrono::duration<double> timeout) = 0;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url);
  HttpResponse post(std::string_view route, const std::string& body,
                    std::chrono::duration<double> timeout) override;

 private:
  std::string base_url_;
};

struct BackendEndpoint {
  std::string base_url;
  std::string model_name;
  double timeout_s = 120.0;
  int max_retries = 2;
  double backoff_s = 1.0;  // doubled after every failed attempt
};

void validate(const BackendEndpoint& ep);

struct Embedding {
  std::vector<double> vector;
  std::string model_name;

  std::size_t dim() const noexcept { return vector.size(); }
};

struct Detection {
  geometry::BBox bbox;
  double confidence = 0.0;
  std::string class_name;
};

struct ChatRequest {
  std::string model_name;
  std::string prompt;
  std::vector<std::string> images;  // PNG bytes; pre then post
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 0;
};

struct TokenList {
  std::vector<std::int64_t> ids;  // begin/end sentinels excluded
  int sentinels = 0;              // sentinel tokens the embedder adds around text
};

/// Uniform client for one endpoint. Immutable after construction; safe to
/// share across threads if the transport is.
class Client {
 public:
  Client(BackendEndpoint endpoint, std::shared_ptr<Transport> transport);

  const BackendEndpoint& endpoint() const noexcept { return endpoint_; }

  std::string chat(const ChatRequest& request) const;
  TokenList tokenize(std::string_view text) const;
  std::string decode(const std::vector<std::int64_t>& ids) const;
  /// Text must fit the CLIP context (ids + sentinels <= 77); callers chunk.
  Embedding embed_text(std::string_view text) const;
  Embedding embed_image(std::string_view png_bytes) const;
  /// Only factor 4 is supported.
  Raster upscale(const Raster& image, int factor) const;
  /// "building" detections only, clamped to the image, by descending confidence.
  std::vector<Detection> detect(const Raster& image) const;

 private:
  std::string call(std::string_view route, const std::string& body) const;
  Embedding finish_embedding(const std::string& response) const;

  BackendEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  // Embedding width observed first; every later embedding must match it.
  std::shared_ptr<std::atomic<std::size_t>> embed_dim_;
};

/// Connects a base URL to a transport. "mock://name?seed=N&garbage_first=1"
/// resolves to a process-wide MockBackend registered under name; anything
/// else is treated as an HTTP base URL.
std::shared_ptr<Transport> connect(const std::string& base_url);

}  // namespace damagepipe::inference
