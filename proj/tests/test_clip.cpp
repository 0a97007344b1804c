#include <doctest.h>

#include <cmath>
#include <numeric>

#include "damagepipe/clip_eval.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/mock_backend.hpp"
#include "damagepipe/report.hpp"
#include "support.hpp"

using namespace damagepipe;
using namespace damagepipe::clip;
using damagepipe::testing::Gen;

namespace {

std::vector<std::int64_t> iota_ids(int n) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 1000);
  return ids;
}

inference::Embedding emb(std::vector<double> v) { return {std::move(v), "clip"}; }

std::string words(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += "w" + std::to_string(i) + " ";
  return s;
}

inference::Client mock_embedder() {
  return inference::Client({.base_url = "mock://clip", .model_name = "clip", .backoff_s = 0},
                           std::make_shared<inference::MockBackend>());
}

}  // namespace

TEST_SUITE("clip") {

TEST_CASE("chunk_tokens examples") {
  auto c = chunk_tokens(iota_ids(70), 77);
  CHECK(c.size() == 1);
  c = chunk_tokens(iota_ids(154), 77);
  REQUIRE(c.size() == 2);
  CHECK(c[0].size() == 77);
  CHECK(c[1].size() == 77);
  c = chunk_tokens(iota_ids(80), 77);
  REQUIRE(c.size() == 2);
  CHECK(c[1].size() == 3);
  CHECK_THROWS_AS(chunk_tokens({}, 77), Error);
  CHECK_THROWS_AS(chunk_tokens(iota_ids(3), 0), Error);
}

TEST_CASE("chunking law: ceil(n/L) slices, all full but the last, concatenation restores input") {
  Gen g(41);
  for (int trial = 0; trial < 400; ++trial) {
    const int n = g.integer(1, 10000);
    const int limit = g.integer(1, 100);
    const auto ids = iota_ids(n);
    const auto chunks = chunk_tokens(ids, limit);
    REQUIRE(chunks.size() == static_cast<std::size_t>((n + limit - 1) / limit));
    std::vector<std::int64_t> joined;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      CHECK_FALSE(chunks[i].empty());
      CHECK(chunks[i].size() <= static_cast<std::size_t>(limit));
      if (i + 1 < chunks.size()) CHECK(chunks[i].size() == static_cast<std::size_t>(limit));
      joined.insert(joined.end(), chunks[i].begin(), chunks[i].end());
    }
    CHECK(joined == ids);
  }
}

TEST_CASE("clip_score examples") {
  const ScoreConfig cfg;
  CHECK(clip_score(emb({1, 0}), emb({1, 0}), cfg) == 250.0);
  CHECK(clip_score(emb({1, 0}), emb({0, 1}), cfg) == 0.0);
  CHECK(clip_score(emb({1, 0}), emb({-1, 0}), cfg) == 0.0);
  CHECK(clip_score(emb({1, 0}), emb({0.25, std::sqrt(1 - 0.0625)}), cfg) ==
        doctest::Approx(62.5).epsilon(1e-12));
  CHECK(clip_score(emb({3, 0}), emb({7, 0}), cfg) == 250.0);
  CHECK_THROWS_AS(clip_score(emb({1, 0}), emb({1, 0, 0}), cfg), ContractViolation);
}

TEST_CASE("clip_score matches a long-double oracle") {
  Gen g(42);
  for (const double w : {1.0, 2.5, 4.0}) {
    const ScoreConfig cfg{.w = w};
    for (int trial = 0; trial < 1000; ++trial) {
      const int dim = g.integer(2, 64);
      std::vector<double> a(dim), b(dim);
      for (auto& x : a) x = g.real(-1, 1);
      for (auto& x : b) x = g.real(-1, 1);
      long double dot = 0, na = 0, nb = 0;
      for (int i = 0; i < dim; ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
      }
      const double cos = static_cast<double>(dot / std::sqrt(na * nb));
      const double expected = w * std::max(100.0 * cos, 0.0);
      const double got = clip_score(emb(a), emb(b), cfg);
      CHECK(std::abs(got - expected) <= 1e-9 * w * 100);
      CHECK(got >= 0.0);
      CHECK(got <= w * 100.0);
    }
  }
}

TEST_CASE("ChunkScores and dataset aggregation") {
  const auto s = ChunkScores::from({60, 70});
  CHECK(s.avg == 65.0);
  CHECK(s.min == 60.0);
  CHECK(s.max == 70.0);
  CHECK_THROWS_AS(ChunkScores::from({}), Error);

  const std::vector<ChunkScores> captions{ChunkScores::from({1}), ChunkScores::from({2}),
                                          ChunkScores::from({3})};
  const auto r = aggregate_dataset(captions, "qwen3-vl:8b", "moore-tornado");
  CHECK(r.avg == 2.0);
  CHECK(r.min == 1.0);
  CHECK(r.max == 3.0);
  CHECK(r.n_captions == 3);

  const std::vector<ChunkScores> one{ChunkScores::from({40, 50})};
  const auto single = aggregate_dataset(one, "m");
  CHECK(single.avg == single.min);
  CHECK(single.min == single.max);
  CHECK_THROWS_AS(aggregate_dataset(std::span<const ChunkScores>{}, "m"), Error);
}

TEST_CASE("aggregation keeps min <= avg <= max") {
  Gen g(43);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ChunkScores> caps;
    const double v = g.real(0, 250);
    const bool equal = g.coin();
    for (int i = g.integer(1, 30); i > 0; --i) caps.push_back(ChunkScores::from({equal ? v : g.real(0, 250)}));
    const auto r = aggregate_dataset(caps, "m");
    CHECK(r.min <= r.avg);
    CHECK(r.avg <= r.max);
  }
}

TEST_CASE("score_caption splits long captions into 77-token segments") {
  const auto embedder = mock_embedder();
  const auto image = embedder.embed_image("image bytes");
  CHECK(score_caption(words(154), image, embedder, {}).per_chunk.size() == 2);
  CHECK(score_caption(words(155), image, embedder, {}).per_chunk.size() == 3);
  CHECK(score_caption(words(10), image, embedder, {}).per_chunk.size() == 1);
  const auto s = score_caption(words(200), image, embedder, {});
  for (double x : s.per_chunk) {
    CHECK(x >= 0.0);
    CHECK(x <= 250.0);
  }
  CHECK_THROWS_AS(score_caption("", image, embedder, {}), Error);
  CHECK_THROWS_AS(score_caption("a", image, embedder, {.w = 0}), ConfigError);
}

TEST_CASE("sentinels shrink the segment length") {
  // A backend that reports 2 sentinel tokens leaves 75 ids per segment.
  class Sentinel final : public inference::Transport {
   public:
    inference::HttpResponse post(std::string_view route, const std::string& body,
                                 std::chrono::duration<double> t) override {
      auto res = mock.post(route, body, t);
      if (route == "/api/tokenize" && body.find("\"decode\"") == std::string::npos) {
        auto doc = nlohmann::json::parse(res.body);
        doc["sentinels"] = 2;
        res.body = doc.dump();
      }
      return res;
    }
    inference::MockBackend mock;
  };
  const inference::Client c({.base_url = "mock://s", .model_name = "clip", .backoff_s = 0},
                            std::make_shared<Sentinel>());
  const auto image = c.embed_image("img");
  CHECK(score_caption(words(150), image, c, {}).per_chunk.size() == 2);
  CHECK(score_caption(words(151), image, c, {}).per_chunk.size() == 3);
  CHECK_THROWS_AS(score_caption("a", image, c, {.chunk_limit = 2}), ConfigError);
}

TEST_CASE("report row format") {
  const DatasetClipReport r{.dataset = "moore-tornado", .candidate_model = "qwen3-vl:32b",
                            .n_captions = 5, .avg = 63.3449, .max = 72.6, .min = 54.83};
  CHECK(report::clip_row(r) == "Qwen3-vl:32b 63.34 72.60 54.83");
  CHECK(report::event_title("moore-tornado") == "Moore Tornado");
  CHECK(clip_report_from_json(to_json(r)).avg == r.avg);
}

}  // TEST_SUITE
