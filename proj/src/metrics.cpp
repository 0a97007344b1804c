#include "damagepipe/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "damagepipe/assess.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/geometry.hpp"
#include "damagepipe/raster.hpp"

namespace damagepipe::metrics {

namespace detail {
extern const std::string_view kBuiltinStopwords;
}

namespace fs = std::filesystem;
using json = nlohmann::json;

Bucket to_bucket(xbd::DamageCategory c) { return c.level() <= 2 ? Bucket::kMinor : Bucket::kSevere; }

std::string_view bucket_name(Bucket b) { return b == Bucket::kMinor ? "minor" : "severe"; }

Bucket bucket_from_name(std::string_view name) {
  if (name == "minor") return Bucket::kMinor;
  if (name == "severe") return Bucket::kSevere;
  throw ConfigError(fmt::format("positive_class must be \"minor\" or \"severe\", got \"{}\"", name));
}

double f1_from(double precision, double recall) {
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassificationReport classification_metrics(std::span<const Bucket> predicted,
                                            std::span<const Bucket> truth, Bucket positive_class,
                                            std::string candidate_model) {
  if (predicted.size() != truth.size()) {
    throw Error(fmt::format("prediction/truth length mismatch: {} vs {}", predicted.size(),
                            truth.size()));
  }
  if (predicted.empty()) throw Error("classification_metrics needs at least one aligned pair");

  ClassificationReport r;
  r.candidate_model = std::move(candidate_model);
  r.positive_class = positive_class;
  auto& c = r.counts;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == positive_class;
    const bool t = truth[i] == positive_class;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  if (r.precision && r.recall) r.f1 = f1_from(*r.precision, *r.recall);
  check_consistency(r);
  return r;
}

void check_consistency(const ClassificationReport& r) {
  if (r.f1.has_value() != (r.precision.has_value() && r.recall.has_value())) {
    throw Error("f1 must be defined exactly when precision and recall are");
  }
  if (!r.f1) return;
  const double p = *r.precision, q = *r.recall;
  if (p > 0.0 && q > 0.0 && std::abs(*r.f1 - 2.0 * p * q / (p + q)) > 1e-12) {
    throw Error(fmt::format("inconsistent f1 {} for precision {} recall {}", *r.f1, p, q));
  }
}

namespace {

std::set<std::string, std::less<>> parse_stopwords(std::string_view text) {
  std::set<std::string, std::less<>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string word;
    for (char ch : line) {
      if (ch == '#') break;
      if (!std::isspace(static_cast<unsigned char>(ch))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
    }
    if (!word.empty()) out.insert(std::move(word));
  }
  return out;
}

// Runs of words separated only by whitespace; punctuation closes a run.
std::vector<std::vector<std::string>> segments(std::string_view text) {
  std::vector<std::vector<std::string>> out(1);
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.back().push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || u >= 0x80) {
      word += static_cast<char>(std::tolower(u));
    } else if (ch == '\'') {
      continue;
    } else if (std::isspace(u)) {
      flush();
    } else {
      flush();
      if (!out.back().empty()) out.emplace_back();
    }
  }
  flush();
  return out;
}

}  // namespace

std::set<std::string, std::less<>> builtin_stopwords() {
  return parse_stopwords(detail::kBuiltinStopwords);
}

std::set<std::string, std::less<>> load_stopwords(const fs::path& path) {
  return parse_stopwords(read_binary_file(path));
}

TermFrequencies word_frequencies(const std::map<int, std::vector<std::string>>& texts_by_category,
                                 const std::set<std::string, std::less<>>& stopwords, int top_k) {
  if (top_k < 1) throw Error(fmt::format("top_k must be >= 1, got {}", top_k));
  TermFrequencies out;
  for (const auto& [level, texts] : texts_by_category) {
    xbd::DamageCategory category(level);
    std::map<std::string, long> counts;
    for (const auto& text : texts) {
      for (const auto& seg : segments(text)) {
        const std::string* prev = nullptr;
        for (const auto& w : seg) {
          if (stopwords.contains(w)) {
            prev = nullptr;
            continue;
          }
          ++counts[w];
          if (prev != nullptr) ++counts[*prev + " " + w];
          prev = &w;
        }
      }
    }
    auto& list = out.by_category[category.level() - 1];
    list.assign(counts.begin(), counts.end());
    std::stable_sort(list.begin(), list.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (list.size() > static_cast<std::size_t>(top_k)) list.resize(top_k);
  }
  return out;
}

json to_json(const ClassificationReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"candidate_model", r.candidate_model},
          {"positive_class", bucket_name(r.positive_class)},
          {"accuracy", opt(r.accuracy)},
          {"precision", opt(r.precision)},
          {"recall", opt(r.recall)},
          {"f1", opt(r.f1)},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}}};
}

json to_json(const TermFrequencies& t) {
  json out = json::object();
  for (int level = 1; level <= 4; ++level) {
    json list = json::array();
    for (const auto& [term, count] : t.by_category[level - 1]) {
      list.push_back({{"term", term}, {"count", count}});
    }
    out[std::to_string(level)] = {{"category", xbd::category_name(xbd::DamageCategory(level))},
                                  {"terms", list}};
  }
  return out;
}

std::vector<CandidateMetrics> run_metrics(const MetricsConfig& cfg,
                                          const std::vector<xbd::ImagePairRecord>& pairs,
                                          const RunLayout& layout) {
  if (cfg.candidate_models.empty()) throw ConfigError("no candidate models configured");

  std::map<std::string, std::map<std::pair<std::string, int>, assess::DamageAssessment>> by_cand;
  bool any = false;
  for (const auto& cand : cfg.candidate_models) {
    auto loaded = assess::load_assessments(layout, cand);
    any = any || !loaded.empty();
    by_cand.emplace(cand, std::move(loaded));
  }
  if (!any) throw ConfigError("no assessments found; run assess first");

  struct Truth {
    geometry::BBox box;
    xbd::DamageCategory category;
  };
  std::map<std::string, std::vector<Truth>> truths;
  long unclassified = 0;
  for (const auto& p : pairs) {
    if (!p.post_labels_path) continue;
    const auto labels = xbd::load_label_file(*p.post_labels_path);
    unclassified += labels.excluded_unclassified;
    auto& list = truths[p.pair_id];
    for (const auto& b : labels.buildings) {
      if (b.category) list.push_back({geometry::polygon_to_bbox(b.polygon), *b.category});
    }
  }
  if (truths.empty()) {
    throw ConfigError("metrics requires post-disaster label files; none found in the dataset");
  }

  const auto stopwords = cfg.stopwords_path ? load_stopwords(*cfg.stopwords_path) : builtin_stopwords();

  std::vector<CandidateMetrics> results;
  json reports = json::array();
  json terms = json::object();
  for (const auto& cand : cfg.candidate_models) {
    const auto& assessments = by_cand.at(cand);
    CandidateMetrics m;
    std::vector<Bucket> pred, truth;
    std::map<int, std::vector<std::string>> texts;
    for (const auto& [key, a] : assessments) texts[a.category.level()].push_back(assess::description_of(a));

    for (const auto& [pair_id, gt] : truths) {
      const auto scene_path = layout.scene(pair_id);
      if (!fs::exists(scene_path)) {
        m.missed_truths += static_cast<long>(gt.size());
        continue;
      }
      const auto scene = assess::scene_from_json(read_json(scene_path));
      std::vector<geometry::ScoredBox> dets;
      std::vector<const assess::DamageAssessment*> det_assessment;
      for (const auto& b : scene.buildings) {
        auto it = assessments.find({pair_id, b.index});
        if (it == assessments.end()) {
          ++m.failed_assessments;
          continue;
        }
        dets.push_back({geometry::scale_bbox(b.box, 1.0 / scene.scale), b.confidence});
        det_assessment.push_back(&it->second);
      }
      std::vector<geometry::BBox> gt_boxes;
      for (const auto& t : gt) gt_boxes.push_back(t.box);
      const auto matches = geometry::match_detections(dets, gt_boxes, cfg.iou_threshold);
      for (const auto& match : matches) {
        pred.push_back(to_bucket(det_assessment[match.det_index]->category));
        truth.push_back(to_bucket(gt[match.truth_index].category));
      }
      m.matched += static_cast<long>(matches.size());
      m.unmatched_detections += static_cast<long>(dets.size() - matches.size());
      m.missed_truths += static_cast<long>(gt.size() - matches.size());
    }

    json entry;
    if (!pred.empty()) {
      m.report = classification_metrics(pred, truth, cfg.positive_class, cand);
      entry = to_json(m.report);
    } else {
      m.report.candidate_model = cand;
      m.report.positive_class = cfg.positive_class;
      entry = to_json(m.report);
    }
    entry["matched"] = m.matched;
    entry["unmatched_detections"] = m.unmatched_detections;
    entry["missed_truths"] = m.missed_truths;
    entry["failed_assessments"] = m.failed_assessments;
    reports.push_back(std::move(entry));
    terms[cand] = to_json(word_frequencies(texts, stopwords, cfg.top_k));
    results.push_back(std::move(m));
  }

  write_json(layout.metrics_report(), {{"positive_class", bucket_name(cfg.positive_class)},
                                       {"iou_threshold", cfg.iou_threshold},
                                       {"excluded_unclassified", unclassified},
                                       {"reports", reports}});
  write_json(layout.term_frequencies(), {{"top_k", cfg.top_k}, {"candidates", terms}});
  return results;
}

}  // namespace damagepipe::metrics
