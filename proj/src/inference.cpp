#include "damagepipe/inference.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "damagepipe/errors.hpp"
#include "damagepipe/mock_backend.hpp"

namespace damagepipe::inference {

using json = nlohmann::json;

HttpTransport::HttpTransport(std::string base_url) : base_url_(std::move(base_url)) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

HttpResponse HttpTransport::post(std::string_view route, const std::string& body,
                                 std::chrono::duration<double> timeout) {
  httplib::Client client(base_url_);
  const auto t = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(t);
  client.set_read_timeout(t);
  client.set_write_timeout(t);
  auto res = client.Post(std::string(route), body, "application/json");
  if (!res) {
    throw TransportFailure(
        fmt::format("{}{}: {}", base_url_, route, httplib::to_string(res.error())));
  }
  return {res->status, res->body};
}

void validate(const BackendEndpoint& ep) {
  if (!(ep.timeout_s > 0.0)) {
    throw ConfigError(fmt::format("endpoint {}: timeout_s must be > 0", ep.base_url));
  }
  if (ep.max_retries < 0 || ep.max_retries > 10) {
    throw ConfigError(fmt::format("endpoint {}: max_retries must be in 0..10", ep.base_url));
  }
  if (ep.backoff_s < 0.0) {
    throw ConfigError(fmt::format("endpoint {}: backoff_s must be >= 0", ep.base_url));
  }
  if (ep.base_url.empty()) throw ConfigError("endpoint base_url is empty");
}

Client::Client(BackendEndpoint endpoint, std::shared_ptr<Transport> transport)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      embed_dim_(std::make_shared<std::atomic<std::size_t>>(0)) {
  validate(endpoint_);
  if (!transport_) throw ConfigError("client needs a transport");
}

std::string Client::call(std::string_view route, const std::string& body) const {
  const auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
  double delay = endpoint_.backoff_s;
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0 && delay > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      delay *= 2.0;
    }
    HttpResponse res;
    try {
      res = transport_->post(route, body, timeout);
    } catch (const TransportFailure& e) {
      last_error = e.what();
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      std::string detail = res.body.substr(0, 200);
      try {
        detail = json::parse(res.body).at("error").get<std::string>();
      } catch (const json::exception&) {
      }
      throw ProtocolError(res.status, fmt::format("{} returned HTTP {}: {}", route,
                                                  res.status, detail));
    }
    return std::move(res.body);
  }
  throw BackendUnavailable(fmt::format("{}{} unavailable after {} attempt(s): {}",
                                       endpoint_.base_url, route, endpoint_.max_retries + 1,
                                       last_error));
}

namespace {

json parse_body(std::string_view route, const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(200, fmt::format("{}: response is not JSON: {}", route, e.what()));
  }
}

template <typename T>
T field(std::string_view route, const json& doc, const char* key) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(200, fmt::format("{}: response lacks a valid \"{}\" field", route, key));
  }
}

}  // namespace

std::string Client::chat(const ChatRequest& request) const {
  if (request.images.size() > 2) {
    throw ContractViolation(fmt::format("chat accepts at most 2 images, got {}",
                                        request.images.size()));
  }
  if (!(request.temperature >= 0.0)) throw ContractViolation("chat temperature must be >= 0");
  json images = json::array();
  for (const auto& img : request.images) images.push_back(base64_encode(img));
  json options = {{"temperature", request.temperature}};
  if (request.seed) options["seed"] = *request.seed;
  const json body = {{"model", request.model_name.empty() ? endpoint_.model_name
                                                           : request.model_name},
                     {"prompt", request.prompt},
                     {"images", std::move(images)},
                     {"options", std::move(options)}};
  return field<std::string>("/api/chat", parse_body("/api/chat", call("/api/chat", body.dump())),
                            "response");
}

TokenList Client::tokenize(std::string_view text) const {
  if (text.empty()) throw ContractViolation("tokenize: empty input");
  const json body = {{"model", endpoint_.model_name}, {"text", text}};
  const json doc = parse_body("/api/tokenize", call("/api/tokenize", body.dump()));
  TokenList out;
  out.ids = field<std::vector<std::int64_t>>("/api/tokenize", doc, "tokens");
  out.sentinels = doc.value("sentinels", 0);
  return out;
}

std::string Client::decode(const std::vector<std::int64_t>& ids) const {
  if (ids.empty()) throw ContractViolation("decode: empty token list");
  const json body = {{"model", endpoint_.model_name}, {"tokens", ids}, {"decode", true}};
  return field<std::string>("/api/tokenize",
                            parse_body("/api/tokenize", call("/api/tokenize", body.dump())),
                            "text");
}

Embedding Client::finish_embedding(const std::string& response) const {
  Embedding e;
  e.model_name = endpoint_.model_name;
  e.vector = field<std::vector<double>>("/api/embed", parse_body("/api/embed", response),
                                        "embedding");
  double norm2 = 0.0;
  for (double v : e.vector) {
    if (!std::isfinite(v)) throw ProtocolError(200, "/api/embed: non-finite embedding value");
    norm2 += v * v;
  }
  if (e.vector.empty() || norm2 == 0.0) {
    throw ProtocolError(200, "/api/embed: empty or zero embedding");
  }
  const double norm = std::sqrt(norm2);
  for (double& v : e.vector) v /= norm;

  std::size_t expected = 0;
  if (!embed_dim_->compare_exchange_strong(expected, e.dim()) && expected != e.dim()) {
    throw ContractViolation(fmt::format("embedding dim {} differs from earlier dim {}",
                                        e.dim(), expected));
  }
  return e;
}

Embedding Client::embed_text(std::string_view text) const {
  if (text.empty()) throw ContractViolation("embed: empty text");
  const TokenList tokens = tokenize(text);
  const std::size_t length = tokens.ids.size() + static_cast<std::size_t>(tokens.sentinels);
  if (length > kClipContextTokens) {
    throw ContractViolation(fmt::format(
        "embed: text is {} tokens with sentinels, limit {}; chunk it first", length,
        kClipContextTokens));
  }
  const json body = {{"model", endpoint_.model_name}, {"text", text}};
  return finish_embedding(call("/api/embed", body.dump()));
}

Embedding Client::embed_image(std::string_view png_bytes) const {
  if (png_bytes.empty()) throw ContractViolation("embed: empty image");
  const json body = {{"model", endpoint_.model_name}, {"image", base64_encode(png_bytes)}};
  return finish_embedding(call("/api/embed", body.dump()));
}

Raster Client::upscale(const Raster& image, int factor) const {
  if (factor != 4) {
    throw ContractViolation(fmt::format("upscale: unsupported factor {} (only 4)", factor));
  }
  const json body = {{"image", base64_encode(png::encode(image))}, {"factor", factor}};
  const json doc = parse_body("/api/upscale", call("/api/upscale", body.dump()));
  Raster out = png::decode(base64_decode(field<std::string>("/api/upscale", doc, "image")));
  if (out.width() != image.width() * factor || out.height() != image.height() * factor) {
    throw ContractViolation(fmt::format("upscale: expected {}x{}, backend returned {}x{}",
                                        image.width() * factor, image.height() * factor,
                                        out.width(), out.height()));
  }
  return out;
}

std::vector<Detection> Client::detect(const Raster& image) const {
  const json body = {{"image", base64_encode(png::encode(image))}};
  const json doc = parse_body("/api/detect", call("/api/detect", body.dump()));
  const auto items = field<std::vector<json>>("/api/detect", doc, "detections");
  std::vector<Detection> out;
  for (const auto& item : items) {
    const auto cls = field<std::string>("/api/detect", item, "class");
    const auto box = field<std::vector<double>>("/api/detect", item, "box");
    const auto conf = field<double>("/api/detect", item, "confidence");
    if (box.size() != 4) throw ProtocolError(200, "/api/detect: box must have 4 values");
    if (!(conf >= 0.0 && conf <= 1.0)) {
      throw ProtocolError(200, fmt::format("/api/detect: confidence {} outside [0, 1]", conf));
    }
    if (cls != "building") continue;
    const double x0 = std::clamp(box[0], 0.0, static_cast<double>(image.width()));
    const double y0 = std::clamp(box[1], 0.0, static_cast<double>(image.height()));
    const double x1 = std::clamp(box[2], 0.0, static_cast<double>(image.width()));
    const double y1 = std::clamp(box[3], 0.0, static_cast<double>(image.height()));
    if (!(x0 < x1) || !(y0 < y1)) continue;  // nothing left inside the image
    out.push_back({geometry::BBox(x0, y0, x1, y1), conf, cls});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
  return out;
}

std::shared_ptr<Transport> connect(const std::string& base_url) {
  if (base_url.rfind("mock://", 0) == 0) return shared_mock(base_url);
  return std::make_shared<HttpTransport>(base_url);
}

}  // namespace damagepipe::inference
