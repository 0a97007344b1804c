#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damagepipe/inference.hpp"
#include "damagepipe/run_layout.hpp"

namespace damagepipe::jury {

struct JuryVerdict {
  double score = 0.0;  // 0..100
  std::string classification_accuracy;
  std::string reasoning;
  std::string jury_model;
  std::string candidate_model;
};

enum class Band { kExcellent, kGood, kWeak, kCriticalFailure };

struct RubricBand {
  Band band;
  std::string_view label;
  double lo;  // inclusive
  double hi;  // exclusive, except 100 for excellent
};

/// [90,100] excellent, [75,90) good, [50,75) weak, [0,50) critical-failure.
/// Integer rubric bands (0-49, 50-74, ...) leave [49,50) unassigned; it is folded into
/// critical-failure so the four bands partition [0,100].
const std::array<RubricBand, 4>& rubric();
inline constexpr std::string_view kBandGapNote =
    "scores in [49,50) are assigned critical-failure so the bands partition [0,100]";

Band band_of(double score);
std::string_view band_label(Band b);

std::string build_jury_prompt(std::string_view candidate_answer);

/// Throws ParseError when no JSON object is found or the score is missing or
/// outside [0, 100].
JuryVerdict parse_verdict(std::string_view jury_text, std::string jury_model,
                          std::string candidate_model);

/// Lowercased model name up to ':' and then up to the first '-':
/// "qwen3-vl:8b" -> "qwen3", "Gemma3:27b" -> "gemma3".
std::string model_family(std::string_view model);

/// One (jury, candidate, item) evaluation; verdict is empty when it failed.
struct VerdictOutcome {
  std::string jury_model;
  std::string candidate_model;
  std::string dataset;
  std::optional<JuryVerdict> verdict;
};

struct RankingEntry {
  std::string candidate_model;
  double mean = 0.0;
  long verdicts = 0;
  long failures = 0;
  long same_family_verdicts = 0;
  std::map<std::string, long> band_histogram;
  std::map<std::string, double> per_dataset_mean;
};

struct JuryRanking {
  std::vector<RankingEntry> entries;  // mean descending, ties by name
  std::vector<std::string> excluded;  // candidates without a successful verdict
};

JuryRanking aggregate_rankings(std::span<const VerdictOutcome> outcomes);
JuryRanking aggregate_rankings(std::span<const JuryVerdict> verdicts);

nlohmann::json to_json(const JuryVerdict& v);
nlohmann::json to_json(const JuryRanking& r);
JuryRanking ranking_from_json(const nlohmann::json& doc);

struct JuryConfig {
  std::vector<std::string> jury_models;
  std::vector<std::string> candidate_models;
  int max_inflight = 4;
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 0;
};

struct JuryRunStats {
  long chat_calls = 0;
  long verdicts = 0;
  long failures = 0;
  long reused = 0;
};

/// Grades every persisted assessment of every candidate with every juror,
/// persisting one file per (juror, candidate, item), then writes the ranking.
JuryRunStats run_jury(const JuryConfig& cfg, const inference::Client& chat,
                      const RunLayout& layout);

}  // namespace damagepipe::jury
