#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damagepipe/assess.hpp"
#include "damagepipe/clip_eval.hpp"
#include "damagepipe/inference.hpp"
#include "damagepipe/metrics.hpp"

namespace damagepipe {

// Capabilities an endpoint can serve. "default" fills any that are missing.
inline constexpr std::string_view kCapabilities[] = {"chat", "embed", "upscale", "detect"};

struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path run_dir = ".";
  std::string run_id = "default";
  std::map<std::string, inference::BackendEndpoint> endpoints;
  std::vector<std::string> candidate_models = {"qwen3-vl:32b", "qwen3-vl:8b", "gemma3:27b",
                                               "gemma3:12b"};
  std::vector<std::string> jury_models = {"Gemma3:12b", "Gemma3:27b", "qwen3-vl:8b",
                                          "Ministral-3:14b"};
  assess::PipelineConfig pipeline;
  clip::ScoreConfig score;
  metrics::Bucket positive_class = metrics::Bucket::kSevere;
  double iou_threshold = 0.5;
  int top_k = 25;
  std::optional<std::filesystem::path> stopwords;

  const inference::BackendEndpoint& endpoint(std::string_view capability) const;
};

/// Parses a config document. Unknown keys are rejected by dotted path;
/// invariant violations throw ConfigError.
RunConfig parse_config(const nlohmann::json& doc);

/// "a.b=v" sets doc["a"]["b"]; v is parsed as JSON when it is valid JSON and
/// taken as a plain string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Reads the file, applies DAMAGEPIPE_RUN_DIR and then the overrides.
/// Relative dataset_root/run_dir/stopwords resolve against the file's directory.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});

/// Normalized config recorded in the manifest. Excludes run_dir so runs in
/// different directories stay comparable.
nlohmann::json snapshot(const RunConfig& cfg);

}  // namespace damagepipe
