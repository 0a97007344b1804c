#include "damagepipe/clip_eval.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "damagepipe/assess.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/parallel.hpp"
#include "damagepipe/raster.hpp"
#include "damagepipe/xbd.hpp"

namespace damagepipe::clip {

using json = nlohmann::json;

void validate(const ScoreConfig& cfg) {
  if (!(cfg.w > 0.0) || !std::isfinite(cfg.w)) {
    throw ConfigError(fmt::format("score.w must be > 0, got {}", cfg.w));
  }
  if (cfg.chunk_limit < 1) {
    throw ConfigError(fmt::format("score.chunk_limit must be >= 1, got {}", cfg.chunk_limit));
  }
}

ChunkScores ChunkScores::from(std::vector<double> per_chunk) {
  if (per_chunk.empty()) throw Error("chunk score list is empty");
  ChunkScores s;
  s.avg = std::accumulate(per_chunk.begin(), per_chunk.end(), 0.0) /
          static_cast<double>(per_chunk.size());
  auto [lo, hi] = std::minmax_element(per_chunk.begin(), per_chunk.end());
  s.min = *lo;
  s.max = *hi;
  s.avg = std::clamp(s.avg, s.min, s.max);
  s.per_chunk = std::move(per_chunk);
  return s;
}

std::vector<std::vector<std::int64_t>> chunk_tokens(std::span<const std::int64_t> ids,
                                                    int limit) {
  if (limit < 1) throw Error(fmt::format("chunk limit must be >= 1, got {}", limit));
  if (ids.empty()) throw Error("empty caption: no tokens to chunk");
  std::vector<std::vector<std::int64_t>> chunks;
  const auto step = static_cast<std::size_t>(limit);
  for (std::size_t pos = 0; pos < ids.size(); pos += step) {
    const auto n = std::min(step, ids.size() - pos);
    chunks.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                        ids.begin() + static_cast<std::ptrdiff_t>(pos + n));
  }
  return chunks;
}

double clip_score(const inference::Embedding& image_emb, const inference::Embedding& text_emb,
                  const ScoreConfig& cfg) {
  if (image_emb.dim() != text_emb.dim() || image_emb.dim() == 0) {
    throw ContractViolation(fmt::format("embedding dims differ: image {} vs text {}",
                                        image_emb.dim(), text_emb.dim()));
  }
  double dot = 0.0, nn_image = 0.0, nn_text = 0.0;
  for (std::size_t i = 0; i < image_emb.dim(); ++i) {
    dot += image_emb.vector[i] * text_emb.vector[i];
    nn_image += image_emb.vector[i] * image_emb.vector[i];
    nn_text += text_emb.vector[i] * text_emb.vector[i];
  }
  // sqrt(a * a) == a exactly, so identical inputs give cos == 1 exactly.
  const double cos = std::clamp(dot / std::sqrt(nn_image * nn_text), -1.0, 1.0);
  return cfg.w * std::max(100.0 * cos, 0.0);
}

ChunkScores score_caption(std::string_view caption, const inference::Embedding& image_emb,
                          const inference::Client& text_backend, const ScoreConfig& cfg) {
  validate(cfg);
  if (caption.empty()) throw Error("empty caption");
  const inference::TokenList tokens = text_backend.tokenize(caption);
  const int segment = cfg.chunk_limit - tokens.sentinels;
  if (segment < 1) {
    throw ConfigError(fmt::format("chunk_limit {} leaves no room beside {} sentinel tokens",
                                  cfg.chunk_limit, tokens.sentinels));
  }
  std::vector<double> scores;
  for (const auto& chunk : chunk_tokens(tokens.ids, segment)) {
    const std::string text = text_backend.decode(chunk);
    scores.push_back(clip_score(image_emb, text_backend.embed_text(text), cfg));
  }
  return ChunkScores::from(std::move(scores));
}

DatasetClipReport aggregate_dataset(std::span<const ChunkScores> per_caption,
                                    std::string candidate_model, std::string dataset) {
  if (per_caption.empty()) throw Error("no captions to aggregate");
  DatasetClipReport r{.dataset = std::move(dataset),
                      .candidate_model = std::move(candidate_model),
                      .n_captions = static_cast<long>(per_caption.size())};
  double sum = 0.0;
  r.min = r.max = per_caption.front().avg;
  for (const auto& s : per_caption) {
    sum += s.avg;
    r.min = std::min(r.min, s.avg);
    r.max = std::max(r.max, s.avg);
  }
  r.avg = sum / static_cast<double>(per_caption.size());
  // Rounding of the mean can step just outside [min, max] when all values agree.
  r.avg = std::clamp(r.avg, r.min, r.max);
  return r;
}

json to_json(const ChunkScores& s) {
  return {{"per_chunk", s.per_chunk}, {"avg", s.avg}, {"min", s.min}, {"max", s.max}};
}

json to_json(const DatasetClipReport& r) {
  return {{"dataset", r.dataset}, {"candidate_model", r.candidate_model},
          {"n_captions", r.n_captions}, {"avg", r.avg},
          {"max", r.max}, {"min", r.min}};
}

DatasetClipReport clip_report_from_json(const json& doc) {
  return {.dataset = doc.value("dataset", std::string()),
          .candidate_model = doc.at("candidate_model").get<std::string>(),
          .n_captions = doc.at("n_captions").get<long>(),
          .avg = doc.at("avg").get<double>(),
          .max = doc.at("max").get<double>(),
          .min = doc.at("min").get<double>()};
}

ClipRunStats run_clip(const ClipRunConfig& cfg, const inference::Client& embedder,
                      const RunLayout& layout) {
  validate(cfg.score);
  if (cfg.candidate_models.empty()) throw ConfigError("no candidate models configured");

  struct Task {
    std::string candidate;
    std::string pair_id;
    int index = 0;
    std::string caption;
  };
  std::vector<Task> tasks;
  for (const auto& cand : cfg.candidate_models) {
    for (const auto& [key, a] : assess::load_assessments(layout, cand)) {
      tasks.push_back({cand, key.first, key.second, assess::caption_of(a)});
    }
  }
  if (tasks.empty()) throw ConfigError("no assessments found; run assess first");

  const bool post = cfg.score.target == Target::kPost;
  std::vector<std::optional<ChunkScores>> scores(tasks.size());
  std::atomic<long> reused{0};
  parallel_for(tasks.size(), cfg.max_inflight, [&](std::size_t i) {
    const Task& t = tasks[i];
    const auto path = layout.clip_scores(t.candidate, t.pair_id, t.index);
    if (std::filesystem::exists(path)) {
      const json doc = read_json(path);
      if (doc.at("status") == "ok") scores[i] = ChunkScores::from(doc.at("per_chunk").get<std::vector<double>>());
      ++reused;
      return;
    }
    json doc = {{"candidate_model", t.candidate},
                {"pair_id", t.pair_id},
                {"building_index", t.index},
                {"target", post ? "post" : "pre"},
                {"caption", t.caption}};
    try {
      const auto image = embedder.embed_image(read_binary_file(layout.crop(t.pair_id, t.index, post)));
      scores[i] = score_caption(t.caption, image, embedder, cfg.score);
      doc.update(to_json(*scores[i]));
      doc["status"] = "ok";
    } catch (const ProtocolError& e) {
      doc["status"] = "failed";
      doc["error"] = e.what();
    } catch (const ContractViolation& e) {
      doc["status"] = "failed";
      doc["error"] = e.what();
    }
    write_json(path, doc);
  });

  std::map<std::pair<std::string, std::string>, std::vector<ChunkScores>> groups;
  ClipRunStats stats{.reused = reused.load()};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!scores[i]) {
      ++stats.failures;
      continue;
    }
    ++stats.scored;
    groups[{xbd::event_of(tasks[i].pair_id), tasks[i].candidate}].push_back(*scores[i]);
  }
  json reports = json::array();
  for (const auto& [key, list] : groups) {
    reports.push_back(to_json(aggregate_dataset(list, key.second, key.first)));
  }
  write_json(layout.clip_report(), {{"w", cfg.score.w},
                                    {"chunk_limit", cfg.score.chunk_limit},
                                    {"target", post ? "post" : "pre"},
                                    {"failures", stats.failures},
                                    {"reports", reports}});
  return stats;
}

}  // namespace damagepipe::clip
