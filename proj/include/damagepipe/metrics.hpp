#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "damagepipe/run_layout.hpp"
#include "damagepipe/xbd.hpp"

namespace damagepipe::metrics {

/// minor = categories 1-2, severe = categories 3-4.
enum class Bucket { kMinor, kSevere };

Bucket to_bucket(xbd::DamageCategory c);
std::string_view bucket_name(Bucket b);
Bucket bucket_from_name(std::string_view name);

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Metrics with a zero denominator are nullopt ("undefined"), never 0.
struct ClassificationReport {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  ConfusionCounts counts;
  std::string candidate_model;
  Bucket positive_class = Bucket::kSevere;

  friend bool operator==(const ClassificationReport&, const ClassificationReport&) = default;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_from(double precision, double recall);

ClassificationReport classification_metrics(std::span<const Bucket> predicted,
                                            std::span<const Bucket> truth,
                                            Bucket positive_class = Bucket::kSevere,
                                            std::string candidate_model = {});

/// Throws when f1 is not the harmonic mean of the emitted precision/recall.
void check_consistency(const ClassificationReport& r);

/// Per category 1..4: (term, count), count descending, ties by term.
struct TermFrequencies {
  std::array<std::vector<std::pair<std::string, long>>, 4> by_category;
};

std::set<std::string, std::less<>> builtin_stopwords();
std::set<std::string, std::less<>> load_stopwords(const std::filesystem::path& path);

/// Lowercases, drops apostrophes, splits on every other non-alphanumeric
/// character, removes stopwords, then counts unigrams and bigrams of words
/// adjacent in the original text (bigrams never span punctuation or a
/// removed stopword). Keeps the top_k terms per category.
TermFrequencies word_frequencies(const std::map<int, std::vector<std::string>>& texts_by_category,
                                 const std::set<std::string, std::less<>>& stopwords, int top_k);

nlohmann::json to_json(const ClassificationReport& r);
nlohmann::json to_json(const TermFrequencies& t);

struct MetricsConfig {
  std::vector<std::string> candidate_models;
  Bucket positive_class = Bucket::kSevere;
  double iou_threshold = 0.5;
  int top_k = 25;
  std::optional<std::filesystem::path> stopwords_path;
};

struct CandidateMetrics {
  ClassificationReport report;
  long matched = 0;
  long unmatched_detections = 0;  // assessed, but no ground truth above the IoU threshold
  long missed_truths = 0;         // ground-truth buildings no assessed detection matched
  long failed_assessments = 0;
};

/// Aligns every candidate's assessments with post-disaster labels and writes
/// metrics_report.json and term_frequencies.json.
std::vector<CandidateMetrics> run_metrics(const MetricsConfig& cfg,
                                          const std::vector<xbd::ImagePairRecord>& pairs,
                                          const RunLayout& layout);

}  // namespace damagepipe::metrics
