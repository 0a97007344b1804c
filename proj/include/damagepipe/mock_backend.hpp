#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "damagepipe/inference.hpp"

namespace damagepipe::inference {

struct MockOptions {
  std::uint64_t seed = 0;
  int embedding_dim = 64;
  /// Assessment and verdict prompts without the repair instruction get an
  /// unparseable reply; the repair re-prompt then succeeds.
  bool garbage_first = false;
  /// Upscale returns an image one pixel too narrow.
  bool wrong_upscale_dims = false;
  /// Every request fails at the transport level.
  bool unreachable = false;
  /// Image-derived assessment categories are off by one level for a fixed,
  /// model-dependent share (5-30%) of requests.
  bool misread = false;
};

/// Deterministic in-process implementation of the wire protocol.
///
/// Responses are functions of (route, request bytes, seed):
///   chat     assessment prompts get a canned JSON assessment whose category
///            is the "[[CAT:n]]" marker in the prompt, else the dominant
///            marker level in the post image, else a seeded hash (see
///            MockOptions::misread); jury
///            prompts get a verdict scored by comparing the candidate's
///            category with the marker level.
///   tokenize whitespace-split words, id = 31-bit hash of the word.
///   embed    seeded hash of the payload expanded to embedding_dim values
///            (deliberately not normalized).
///   upscale  nearest neighbour.
///   detect   boxes of marker-painted objects, in id order (not sorted).
class MockBackend final : public Transport {
 public:
  explicit MockBackend(MockOptions options = {});

  HttpResponse post(std::string_view route, const std::string& body,
                    std::chrono::duration<double> timeout) override;

  /// Routes a request without the transport layer (used by mock-serve).
  HttpResponse handle(std::string_view route, const std::string& body);

  const MockOptions& options() const noexcept { return options_; }
  long calls() const noexcept { return calls_.load(); }
  long calls(std::string_view route) const;
  void reset_counters();

 private:
  std::string chat(const std::string& body);
  std::string tokenize(const std::string& body);
  std::string embed(const std::string& body);
  std::string upscale(const std::string& body);
  std::string detect(const std::string& body);

  MockOptions options_;
  std::atomic<long> calls_{0};
  mutable std::mutex mutex_;
  std::map<std::string, long, std::less<>> route_calls_;
  std::map<std::int64_t, std::string> vocabulary_;
};

/// Parses "mock://name?seed=N&dim=D&garbage_first=1&misread=1&..." into options.
MockOptions parse_mock_url(std::string_view url);

/// Process-wide registry used by connect(); one backend per distinct URL.
std::shared_ptr<MockBackend> shared_mock(const std::string& url);

}  // namespace damagepipe::inference
