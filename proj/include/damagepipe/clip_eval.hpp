#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damagepipe/inference.hpp"
#include "damagepipe/run_layout.hpp"

namespace damagepipe::clip {

enum class Target { kPost, kPre };

struct ScoreConfig {
  double w = 2.5;
  int chunk_limit = 77;  // tokens per segment, sentinels included
  Target target = Target::kPost;
};

void validate(const ScoreConfig& cfg);

struct ChunkScores {
  std::vector<double> per_chunk;
  double avg = 0.0;
  double min = 0.0;
  double max = 0.0;

  static ChunkScores from(std::vector<double> per_chunk);
};

struct DatasetClipReport {
  std::string dataset;  // event name, e.g. "moore-tornado"
  std::string candidate_model;
  long n_captions = 0;
  double avg = 0.0;
  double max = 0.0;
  double min = 0.0;
};

/// Consecutive slices of at most `limit` ids; concatenation restores the input.
std::vector<std::vector<std::int64_t>> chunk_tokens(std::span<const std::int64_t> token_ids,
                                                    int limit);

/// w * max(100 * cos(image, text), 0).
double clip_score(const inference::Embedding& image_emb, const inference::Embedding& text_emb,
                  const ScoreConfig& cfg);

/// Tokenize, split into segments that fit the CLIP context, decode each
/// segment back to text, embed and score it against the image.
ChunkScores score_caption(std::string_view caption, const inference::Embedding& image_emb,
                          const inference::Client& text_backend, const ScoreConfig& cfg);

/// avg = mean of per-caption averages; min/max = extremes of the same.
DatasetClipReport aggregate_dataset(std::span<const ChunkScores> per_caption,
                                    std::string candidate_model, std::string dataset = {});

nlohmann::json to_json(const ChunkScores& s);
nlohmann::json to_json(const DatasetClipReport& r);
DatasetClipReport clip_report_from_json(const nlohmann::json& doc);

struct ClipRunConfig {
  std::vector<std::string> candidate_models;
  ScoreConfig score;
  int max_inflight = 4;
};

struct ClipRunStats {
  long scored = 0;
  long reused = 0;
  long failures = 0;
};

/// Scores every persisted assessment caption against its crop, one file per
/// caption, then writes one report row per (event, candidate).
ClipRunStats run_clip(const ClipRunConfig& cfg, const inference::Client& embedder,
                      const RunLayout& layout);

}  // namespace damagepipe::clip
