#include "damagepipe/report.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include <fmt/format.h>

#include "damagepipe/errors.hpp"
#include "damagepipe/jury.hpp"

namespace damagepipe::report {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string event_title(std::string_view event) {
  std::string out;
  bool start = true;
  for (char c : event) {
    if (c == '-' || c == '_') {
      out += ' ';
      start = true;
      continue;
    }
    out += start ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c;
    start = false;
  }
  return out;
}

std::string model_title(std::string_view model) {
  std::string out(model);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string clip_row(const clip::DatasetClipReport& r) {
  return fmt::format("{} {:.2f} {:.2f} {:.2f}", model_title(r.candidate_model), r.avg, r.max, r.min);
}

namespace {

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += " | ";
    out += cells[i];
  }
  return out + "\n";
}

std::string scope_label(const json& manifest) {
  if (manifest.is_null()) return "";
  const json& cfg = manifest.value("config", json::object());
  const bool full = cfg.value("granularity", std::string("cropped")) == "full";
  const bool sr = cfg.value("super_resolution", json::object()).value("enabled", true);
  return fmt::format("{}, {}", full ? "full images" : "cropped buildings",
                     sr ? "super-resolution on" : "super-resolution off");
}

std::vector<std::string> candidate_order(const json& manifest) {
  if (manifest.is_null()) return {};
  return manifest.value("config", json::object())
      .value("candidate_models", std::vector<std::string>{});
}

std::string optional_fixed(const json& v, int digits) {
  return v.is_null() ? std::string("undefined") : fmt::format("{:.{}f}", v.get<double>(), digits);
}

std::string clip_table(const json& doc, const std::string& scope) {
  std::string out = fmt::format("CLIPScore ({}; w={}, target={})\n", scope, doc.at("w").get<double>(),
                                doc.at("target").get<std::string>());
  out += join_row({"Disaster type", "VLM model", "Avg. CLIPScore", "Max. CLIPScore", "Min. CLIPScore"});
  for (const auto& r : doc.at("reports")) {
    const auto rep = clip::clip_report_from_json(r);
    out += join_row({event_title(rep.dataset), model_title(rep.candidate_model),
                     fmt::format("{:.2f}", rep.avg), fmt::format("{:.2f}", rep.max),
                     fmt::format("{:.2f}", rep.min)});
  }
  if (doc.value("failures", 0L) > 0) {
    out += fmt::format("({} captions failed to score and are excluded)\n", doc.at("failures").get<long>());
  }
  return out;
}

std::string jury_table(const json& doc, const std::string& scope) {
  const auto ranking = jury::ranking_from_json(doc);
  std::set<std::string> events;
  for (const auto& e : ranking.entries) {
    for (const auto& [event, mean] : e.per_dataset_mean) events.insert(event);
  }
  std::string out = fmt::format("VLM-as-a-Jury ({})\n", scope);
  std::vector<std::string> header{"Candidate Model"};
  for (const auto& e : events) header.push_back(event_title(e));
  header.push_back("Mean");
  out += join_row(header);
  for (const auto& e : ranking.entries) {
    std::vector<std::string> row{model_title(e.candidate_model)};
    for (const auto& ev : events) {
      auto it = e.per_dataset_mean.find(ev);
      row.push_back(it == e.per_dataset_mean.end() ? "-" : fmt::format("{:.2f}", it->second));
    }
    row.push_back(fmt::format("{:.2f}", e.mean));
    out += join_row(row);
  }
  for (const auto& e : ranking.entries) {
    if (e.failures > 0 || e.same_family_verdicts > 0) {
      out += fmt::format("{}: {} verdicts, {} failed, {} from a same-family juror\n",
                         model_title(e.candidate_model), e.verdicts, e.failures,
                         e.same_family_verdicts);
    }
  }
  for (const auto& name : ranking.excluded) {
    out += fmt::format("{}: no successful verdicts, excluded from ranking\n", model_title(name));
  }
  out += fmt::format("Note: {}\n", doc.value("band_note", std::string(jury::kBandGapNote)));
  return out;
}

std::string metrics_table(const json& doc, const std::vector<std::string>& order) {
  std::string out = fmt::format("Classification against ground truth (positive class: {}, IoU >= {:.2f})\n",
                                doc.at("positive_class").get<std::string>(),
                                doc.at("iou_threshold").get<double>());
  out += join_row({"VLM model", "Accuracy(%)", "Precision", "Recall", "F1-Score"});
  std::map<std::string, json> by_name;
  for (const auto& r : doc.at("reports")) by_name[r.at("candidate_model").get<std::string>()] = r;
  std::vector<std::string> names;
  for (const auto& n : order) {
    if (by_name.contains(n)) names.push_back(n);
  }
  for (const auto& [n, r] : by_name) {
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
  }
  for (const auto& n : names) {
    const json& r = by_name.at(n);
    const json& acc = r.at("accuracy");
    out += join_row({model_title(n),
                     acc.is_null() ? std::string("undefined") : fmt::format("{:.1f}", acc.get<double>() * 100.0),
                     optional_fixed(r.at("precision"), 4), optional_fixed(r.at("recall"), 4),
                     optional_fixed(r.at("f1"), 4)});
  }
  for (const auto& n : names) {
    const json& r = by_name.at(n);
    out += fmt::format("{}: {} matched, {} unmatched detections, {} missed buildings\n",
                       model_title(n), r.value("matched", 0L), r.value("unmatched_detections", 0L),
                       r.value("missed_truths", 0L));
  }
  return out;
}

std::string terms_table(const json& doc) {
  std::string out = "Most frequent terms by predicted category\n";
  out += join_row({"VLM model", "Category", "Terms"});
  for (const auto& [cand, cats] : doc.at("candidates").items()) {
    for (const auto& [level, cat] : cats.items()) {
      std::string terms;
      int shown = 0;
      for (const auto& t : cat.at("terms")) {
        if (shown++ == 8) break;
        if (!terms.empty()) terms += ", ";
        terms += fmt::format("{} ({})", t.at("term").get<std::string>(), t.at("count").get<long>());
      }
      out += join_row({model_title(cand), fmt::format("{} {}", level, cat.at("category").get<std::string>()),
                       terms.empty() ? "-" : terms});
    }
  }
  return out;
}

json read_if_exists(const fs::path& p) { return fs::exists(p) ? read_json(p) : json(); }

}  // namespace

std::string render(const RunLayout& layout) {
  const json manifest = read_if_exists(layout.manifest());
  const json clip_doc = read_if_exists(layout.clip_report());
  const json jury_doc = read_if_exists(layout.jury_report());
  const json metrics_doc = read_if_exists(layout.metrics_report());
  const json terms_doc = read_if_exists(layout.term_frequencies());
  if (clip_doc.is_null() && jury_doc.is_null() && metrics_doc.is_null()) {
    throw ConfigError(fmt::format(
        "nothing to report in {}; run eval-clip, eval-jury or metrics first", layout.root().string()));
  }

  const std::string scope = manifest.is_null() ? std::string("unknown scope") : scope_label(manifest);
  std::string out = fmt::format("Run {}\n", layout.run_id());
  auto section = [&](const std::string& body) { out += "\n" + body; };
  if (!clip_doc.is_null()) section(clip_table(clip_doc, scope));
  if (!jury_doc.is_null()) section(jury_table(jury_doc, scope));
  if (!metrics_doc.is_null()) section(metrics_table(metrics_doc, candidate_order(manifest)));
  if (!terms_doc.is_null()) section(terms_table(terms_doc));
  return out;
}

}  // namespace damagepipe::report
