#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "damagepipe/assess.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/inference.hpp"
#include "damagepipe/mock_backend.hpp"
#include "damagepipe/mock_server.hpp"
#include "damagepipe/prompts.hpp"
#include "damagepipe/synthetic.hpp"
#include "support.hpp"

using namespace damagepipe;
using namespace damagepipe::inference;
using damagepipe::testing::Gen;
using json = nlohmann::json;

namespace {

BackendEndpoint endpoint(std::string url = "mock://t", int retries = 2) {
  return {.base_url = std::move(url), .model_name = "m", .timeout_s = 5, .max_retries = retries,
          .backoff_s = 0.0};
}

Client mock_client(MockOptions opt = {}, int retries = 2) {
  return Client(endpoint("mock://t", retries), std::make_shared<MockBackend>(opt));
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Fails the first `failures` posts at the transport level, then answers with
// `status` and `body`.
class ScriptedTransport final : public Transport {
 public:
  ScriptedTransport(int failures, int status, std::string body)
      : failures_(failures), status_(status), body_(std::move(body)) {}
  HttpResponse post(std::string_view, const std::string&, std::chrono::duration<double>) override {
    if (calls++ < failures_) throw TransportFailure("scripted failure");
    return {status_, body_};
  }
  std::atomic<int> calls{0};

 private:
  int failures_;
  int status_;
  std::string body_;
};

Raster scene_with_buildings(int k) {
  Raster r(geometry::ImageDims(64, 64), synthetic::kBackground);
  for (int i = 0; i < k; ++i) synthetic::paint(r, i + 1, true, 1 + i % 4, 2 + 12 * i, 5, 10 + 12 * i, 15);
  synthetic::paint(r, 40, false, 0, 50, 50, 60, 60);
  return r;
}

// Gateway behaviour every backend must satisfy. `exact_mock` enables checks
// that depend on the mock's synthetic tokenizer and markers.
void conformance_suite(const Client& c, bool exact_mock) {
  SUBCASE("tokenize") {
    const auto t = c.tokenize("a photo of a cat");
    CHECK(t.ids.size() == 5);
    CHECK_THROWS_AS(c.tokenize(""), ContractViolation);
    const std::string text = c.decode(t.ids);
    CHECK(c.tokenize(text).ids == t.ids);
  }
  SUBCASE("embed") {
    const auto a = c.embed_text("a photo of a cat");
    const auto b = c.embed_text("a photo of a cat");
    CHECK(std::abs(norm(a.vector) - 1.0) <= 1e-5);
    CHECK(std::abs(dot(a.vector, b.vector) - 1.0) <= 1e-6);
    const auto img = c.embed_image(png::encode(scene_with_buildings(2)));
    CHECK(img.dim() == a.dim());
    CHECK(std::abs(norm(img.vector) - 1.0) <= 1e-5);
  }
  SUBCASE("over-length text is refused before embedding") {
    std::string long_text;
    for (int i = 0; i < 80; ++i) long_text += "word" + std::to_string(i) + " ";
    CHECK_THROWS_AS(c.embed_text(long_text), ContractViolation);
  }
  if (!exact_mock) return;
  SUBCASE("upscale") {
    const Raster in = scene_with_buildings(3);
    const Raster out = c.upscale(in, 4);
    CHECK(out.dims() == geometry::ImageDims(256, 256));
    CHECK_THROWS_AS(c.upscale(in, 2), ContractViolation);
  }
  SUBCASE("detect") {
    const auto dets = c.detect(scene_with_buildings(4));
    CHECK(dets.size() == 4);
    CHECK(c.detect(Raster(geometry::ImageDims(32, 32), synthetic::kBackground)).empty());
  }
  SUBCASE("chat") {
    ChatRequest req{.model_name = "qwen3-vl:8b", .prompt = prompts::assessment_prompt()};
    Raster post = scene_with_buildings(0);
    synthetic::paint(post, 1, true, 3, 0, 0, 20, 20);
    req.images = {png::encode(scene_with_buildings(0)), png::encode(post)};
    CHECK(assess::parse_assessment(c.chat(req), "qwen3-vl:8b").category.level() == 3);
  }
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("endpoint validation") {
  auto ep = endpoint();
  ep.timeout_s = 0;
  CHECK_THROWS_AS(validate(ep), ConfigError);
  ep = endpoint();
  ep.max_retries = -1;
  CHECK_THROWS_AS(validate(ep), ConfigError);
}

TEST_CASE("chat with a marker in the post image returns that category") {
  const Client c = mock_client();
  Raster post(geometry::ImageDims(32, 32), synthetic::kBackground);
  synthetic::paint(post, 1, true, 3, 4, 4, 20, 20);
  ChatRequest req{.model_name = "gemma3:12b", .prompt = assess::build_assessment_prompt(),
                  .images = {png::encode(Raster(geometry::ImageDims(32, 32), 96)), png::encode(post)}};
  const std::string first = c.chat(req);
  CHECK(assess::parse_assessment(first, "gemma3:12b").category.level() == 3);
  CHECK(c.chat(req) == first);

  req.prompt += "\n" + synthetic::category_marker(2);
  CHECK(assess::parse_assessment(c.chat(req), "gemma3:12b").category.level() == 2);

  req.images.push_back("third");
  CHECK_THROWS_AS(c.chat(req), ContractViolation);
}

TEST_CASE("unreachable endpoint with max_retries 0 is unavailable after one attempt") {
  auto mock = std::make_shared<MockBackend>(MockOptions{.unreachable = true});
  const Client c(endpoint("mock://u", 0), mock);
  CHECK_THROWS_AS(c.tokenize("x"), BackendUnavailable);
  CHECK(mock->calls() == 1);
}

TEST_CASE("retries never exceed max_retries + 1 attempts") {
  for (int max_retries = 0; max_retries <= 4; ++max_retries) {
    for (int failures = 0; failures <= 6; ++failures) {
      auto t = std::make_shared<ScriptedTransport>(failures, 200, R"({"tokens":[1,2]})");
      const Client c(endpoint("http://scripted", max_retries), t);
      if (failures <= max_retries) {
        CHECK(c.tokenize("a b").ids.size() == 2);
        CHECK(t->calls == failures + 1);
      } else {
        CHECK_THROWS_AS(c.tokenize("a b"), BackendUnavailable);
        CHECK(t->calls == max_retries + 1);
      }
    }
  }
}

TEST_CASE("backoff doubles between attempts") {
  auto t = std::make_shared<ScriptedTransport>(2, 200, R"({"tokens":[1]})");
  auto ep = endpoint("http://scripted", 2);
  ep.backoff_s = 0.02;
  const Client c(ep, t);
  const auto start = std::chrono::steady_clock::now();
  c.tokenize("a");
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed >= 0.06 * 0.9);
}

TEST_CASE("non-2xx is a protocol error and is not retried") {
  auto t = std::make_shared<ScriptedTransport>(0, 503, R"({"error":"model loading"})");
  const Client c(endpoint("http://scripted", 3), t);
  try {
    c.tokenize("x");
    FAIL("expected a protocol error");
  } catch (const ProtocolError& e) {
    CHECK(e.status() == 503);
    CHECK(std::string(e.what()).find("model loading") != std::string::npos);
  }
  CHECK(t->calls == 1);
}

TEST_CASE("malformed responses are protocol errors") {
  const Client bad_json(endpoint("http://s"), std::make_shared<ScriptedTransport>(0, 200, "nope"));
  CHECK_THROWS_AS(bad_json.tokenize("x"), ProtocolError);
  const Client missing(endpoint("http://s"), std::make_shared<ScriptedTransport>(0, 200, "{}"));
  CHECK_THROWS_AS(missing.chat({.prompt = "p"}), ProtocolError);
  const Client zero(endpoint("http://s"),
                    std::make_shared<ScriptedTransport>(0, 200, R"({"embedding":[0,0]})"));
  CHECK_THROWS_AS(zero.embed_image("png"), ProtocolError);
}

TEST_CASE("tokenize: mock yields one id per whitespace word") {
  const Client c = mock_client();
  CHECK(c.tokenize("one two  three\tfour").ids.size() == 4);
  CHECK_THROWS_AS(c.tokenize(""), ContractViolation);
}

TEST_CASE("embed_text counts sentinels against the context") {
  // 76 ids + 2 sentinels = 78 > 77.
  json tokens = json::array();
  for (int i = 0; i < 76; ++i) tokens.push_back(i);
  auto t = std::make_shared<ScriptedTransport>(0, 200, json{{"tokens", tokens}, {"sentinels", 2}}.dump());
  const Client c(endpoint("http://s"), t);
  CHECK(c.tokenize("x").sentinels == 2);
  CHECK_THROWS_AS(c.embed_text("x"), ContractViolation);

  std::string exactly77;
  for (int i = 0; i < 77; ++i) exactly77 += "w" + std::to_string(i) + " ";
  CHECK_NOTHROW(mock_client().embed_text(exactly77));
  CHECK_THROWS_AS(mock_client().embed_text(exactly77 + "extra"), ContractViolation);
}

TEST_CASE("embeddings are unit length, deterministic and payload-sensitive") {
  const Client c = mock_client({.seed = 5});
  Gen g(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::string payload = g.bytes(g.integer(1, 64));
    std::string other = payload;
    other[g.integer(0, static_cast<int>(other.size()) - 1)] ^= static_cast<char>(g.integer(1, 255));
    const auto a = c.embed_image(payload);
    const auto a2 = c.embed_image(payload);
    const auto b = c.embed_image(other);
    CHECK(std::abs(norm(a.vector) - 1.0) <= 1e-6);
    CHECK(std::abs(norm(b.vector) - 1.0) <= 1e-6);
    CHECK(a.vector == a2.vector);
    CHECK(dot(a.vector, b.vector) < 1.0);
  }
}

TEST_CASE("dimension drift within one client is a contract violation") {
  class Drift final : public Transport {
   public:
    HttpResponse post(std::string_view, const std::string&, std::chrono::duration<double>) override {
      return {200, n++ == 0 ? R"({"embedding":[1,2,3]})" : R"({"embedding":[1,2]})"};
    }
    int n = 0;
  };
  const Client c(endpoint("http://s"), std::make_shared<Drift>());
  c.embed_image("a");
  CHECK_THROWS_AS(c.embed_image("b"), ContractViolation);
}

TEST_CASE("upscale contract") {
  const Client c = mock_client();
  Gen g(32);
  Raster in(geometry::ImageDims(16, 12));
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x)
      for (auto& v : in.at(x, y)) v = static_cast<std::uint8_t>(g.integer(0, 255));
  const Raster out = c.upscale(in, 4);
  REQUIRE(out.dims() == geometry::ImageDims(64, 48));
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      const auto a = in.at(x, y);
      const auto b = out.at(4 * x, 4 * y);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  CHECK_THROWS_AS(c.upscale(in, 2), ContractViolation);
  CHECK_THROWS_AS(mock_client({.wrong_upscale_dims = true}).upscale(in, 4), ContractViolation);
}

TEST_CASE("upscale 1024x1024 to 4096x4096") {
  const Raster in(geometry::ImageDims(1024, 1024), synthetic::kBackground);
  CHECK(mock_client().upscale(in, 4).dims() == geometry::ImageDims(4096, 4096));
}

TEST_CASE("detect filters non-buildings and sorts by confidence") {
  const Client c = mock_client();
  const Raster img = scene_with_buildings(5);
  const auto dets = c.detect(img);
  REQUIRE(dets.size() == 5);
  for (std::size_t i = 1; i < dets.size(); ++i) CHECK(dets[i - 1].confidence >= dets[i].confidence);
  for (const auto& d : dets) {
    CHECK(d.class_name == "building");
    CHECK(d.bbox.within(img.dims()));
  }
  // The mock reports in id order, which is not confidence order.
  CHECK(synthetic::confidence_for_id(1) > synthetic::confidence_for_id(2));
  CHECK(c.detect(Raster(geometry::ImageDims(16, 16), synthetic::kBackground)).empty());

  auto t = std::make_shared<ScriptedTransport>(
      0, 200, R"({"detections":[{"box":[0,0,1,1],"confidence":1.5,"class":"building"}]})");
  CHECK_THROWS_AS(Client(endpoint("http://s"), t).detect(img), ProtocolError);
}

TEST_CASE("mock URLs") {
  const auto opt = parse_mock_url("mock://x?seed=9&garbage_first=1&dim=16&misread=1");
  CHECK(opt.seed == 9);
  CHECK(opt.garbage_first);
  CHECK(opt.misread);
  CHECK(opt.embedding_dim == 16);
  CHECK_THROWS_AS(parse_mock_url("mock://x?bogus=1"), ConfigError);
  CHECK(shared_mock("mock://same?seed=1") == shared_mock("mock://same?seed=1"));
  CHECK(shared_mock("mock://same?seed=1") != shared_mock("mock://same?seed=2"));
}

TEST_CASE("conformance: in-process mock") {
  conformance_suite(mock_client(), true);
}

TEST_CASE("conformance: mock-serve over HTTP") {
  MockServer server(std::make_shared<MockBackend>());
  const int port = server.start("127.0.0.1", 0);
  const std::string url = "http://127.0.0.1:" + std::to_string(port);
  const Client c(endpoint(url), connect(url));
  conformance_suite(c, true);

  SUBCASE("errors are non-2xx JSON with an error field") {
    httplib::Client raw("127.0.0.1", port);
    auto res = raw.Post("/api/tokenize", R"({"model":"m","text":""})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body).contains("error"));
    res = raw.Post("/api/nothing", "{}", "application/json");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body).contains("error"));
    res = raw.Post("/api/embed", "not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
  }
  server.stop();
}

TEST_CASE("conformance: external backend from DAMAGEPIPE_CONFORMANCE_URL") {
  const char* url = std::getenv("DAMAGEPIPE_CONFORMANCE_URL");
  if (url == nullptr || *url == '\0') {
    MESSAGE("DAMAGEPIPE_CONFORMANCE_URL not set; skipped");
    return;
  }
  const Client c(endpoint(url), connect(url));
  conformance_suite(c, false);
}

}  // TEST_SUITE
