#include "damagepipe/jury.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>

#include "damagepipe/assess.hpp"
#include "damagepipe/errors.hpp"
#include "damagepipe/json_extract.hpp"
#include "damagepipe/parallel.hpp"
#include "damagepipe/prompts.hpp"
#include "damagepipe/xbd.hpp"

namespace damagepipe::jury {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::array<RubricBand, 4>& rubric() {
  static const std::array<RubricBand, 4> bands = {{
      {Band::kExcellent, "excellent", 90.0, 100.0},
      {Band::kGood, "good", 75.0, 90.0},
      {Band::kWeak, "weak", 50.0, 75.0},
      {Band::kCriticalFailure, "critical-failure", 0.0, 50.0},
  }};
  return bands;
}

Band band_of(double score) {
  if (!(score >= 0.0 && score <= 100.0)) {
    throw Error(fmt::format("score {} outside [0, 100]", score));
  }
  if (score >= 90.0) return Band::kExcellent;
  if (score >= 75.0) return Band::kGood;
  if (score >= 50.0) return Band::kWeak;
  return Band::kCriticalFailure;
}

std::string_view band_label(Band b) {
  for (const auto& r : rubric()) {
    if (r.band == b) return r.label;
  }
  return "unknown";
}

std::string build_jury_prompt(std::string_view candidate_answer) {
  return prompts::jury_prompt(candidate_answer);
}

JuryVerdict parse_verdict(std::string_view jury_text, std::string jury_model,
                          std::string candidate_model) {
  auto doc = extract_first_json_object(jury_text);
  if (!doc) throw ParseError("no JSON object in jury reply");
  auto it = doc->find("score");
  if (it == doc->end()) throw ParseError("jury reply has no \"score\"");
  double score = 0.0;
  if (it->is_number()) {
    score = it->get<double>();
  } else if (it->is_string()) {
    try {
      std::size_t used = 0;
      const auto s = it->get<std::string>();
      score = std::stod(s, &used);
      if (used != s.size()) throw ParseError("");
    } catch (const std::exception&) {
      throw ParseError(fmt::format("score {} is not a number", it->dump()));
    }
  } else {
    throw ParseError("score must be a number");
  }
  if (!(score >= 0.0 && score <= 100.0)) {
    throw ParseError(fmt::format("score {} outside [0, 100]", score));
  }
  auto text = [&](const char* key) {
    auto f = doc->find(key);
    if (f == doc->end() || f->is_null()) return std::string();
    return f->is_string() ? f->get<std::string>() : f->dump();
  };
  return {score, text("classification_accuracy"), text("reasoning"), std::move(jury_model),
          std::move(candidate_model)};
}

std::string model_family(std::string_view model) {
  model = model.substr(0, model.find(':'));
  model = model.substr(0, model.find('-'));
  std::string out;
  for (char c : model) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

JuryRanking aggregate_rankings(std::span<const VerdictOutcome> outcomes) {
  struct Acc {
    double sum = 0.0;
    RankingEntry entry;
    std::map<std::string, std::pair<double, long>> per_dataset;
  };
  std::map<std::string, Acc> acc;
  for (const auto& o : outcomes) {
    auto& a = acc[o.candidate_model];
    a.entry.candidate_model = o.candidate_model;
    if (!o.verdict) {
      ++a.entry.failures;
      continue;
    }
    const double s = o.verdict->score;
    a.sum += s;
    ++a.entry.verdicts;
    ++a.entry.band_histogram[std::string(band_label(band_of(s)))];
    if (model_family(o.jury_model) == model_family(o.candidate_model)) {
      ++a.entry.same_family_verdicts;
    }
    auto& d = a.per_dataset[o.dataset];
    d.first += s;
    ++d.second;
  }

  JuryRanking out;
  for (auto& [name, a] : acc) {
    if (a.entry.verdicts == 0) {
      out.excluded.push_back(name);
      continue;
    }
    a.entry.mean = a.sum / static_cast<double>(a.entry.verdicts);
    for (const auto& [ds, d] : a.per_dataset) {
      a.entry.per_dataset_mean[ds] = d.first / static_cast<double>(d.second);
    }
    for (const auto& r : rubric()) a.entry.band_histogram.try_emplace(std::string(r.label), 0);
    out.entries.push_back(std::move(a.entry));
  }
  std::stable_sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.candidate_model < b.candidate_model;
  });
  return out;
}

JuryRanking aggregate_rankings(std::span<const JuryVerdict> verdicts) {
  std::vector<VerdictOutcome> outcomes;
  outcomes.reserve(verdicts.size());
  for (const auto& v : verdicts) outcomes.push_back({v.jury_model, v.candidate_model, "", v});
  return aggregate_rankings(outcomes);
}

json to_json(const JuryVerdict& v) {
  return {{"score", v.score},
          {"classification_accuracy", v.classification_accuracy},
          {"reasoning", v.reasoning},
          {"jury_model", v.jury_model},
          {"candidate_model", v.candidate_model}};
}

json to_json(const JuryRanking& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"candidate_model", e.candidate_model},
                       {"mean", e.mean},
                       {"verdicts", e.verdicts},
                       {"failures", e.failures},
                       {"same_family_verdicts", e.same_family_verdicts},
                       {"band_histogram", e.band_histogram},
                       {"per_dataset_mean", e.per_dataset_mean}});
  }
  json bands = json::array();
  for (const auto& b : rubric()) {
    bands.push_back({{"label", b.label}, {"lo", b.lo}, {"hi", b.hi}});
  }
  return {{"ranking", entries},
          {"excluded", r.excluded},
          {"rubric", bands},
          {"band_note", kBandGapNote}};
}

JuryRanking ranking_from_json(const json& doc) {
  JuryRanking r;
  for (const auto& e : doc.at("ranking")) {
    r.entries.push_back({e.at("candidate_model").get<std::string>(), e.at("mean").get<double>(),
                         e.at("verdicts").get<long>(), e.at("failures").get<long>(),
                         e.at("same_family_verdicts").get<long>(),
                         e.at("band_histogram").get<std::map<std::string, long>>(),
                         e.at("per_dataset_mean").get<std::map<std::string, double>>()});
  }
  r.excluded = doc.at("excluded").get<std::vector<std::string>>();
  return r;
}

namespace {

struct Task {
  std::string juror;
  std::string candidate;
  std::string pair_id;
  int index = 0;
  std::string answer;
};

VerdictOutcome outcome_from_file(const json& doc) {
  VerdictOutcome o{doc.at("jury_model").get<std::string>(),
                   doc.at("candidate_model").get<std::string>(),
                   xbd::event_of(doc.at("pair_id").get<std::string>()), std::nullopt};
  if (doc.at("status").get<std::string>() == "ok") {
    o.verdict = JuryVerdict{doc.at("score").get<double>(),
                            doc.at("classification_accuracy").get<std::string>(),
                            doc.at("reasoning").get<std::string>(), o.jury_model,
                            o.candidate_model};
  }
  return o;
}

}  // namespace

JuryRunStats run_jury(const JuryConfig& cfg, const inference::Client& chat,
                      const RunLayout& layout) {
  if (cfg.jury_models.empty()) throw ConfigError("no jury models configured");
  if (cfg.candidate_models.empty()) throw ConfigError("no candidate models configured");

  std::vector<Task> tasks;
  for (const auto& cand : cfg.candidate_models) {
    const auto assessments = assess::load_assessments(layout, cand);
    for (const auto& juror : cfg.jury_models) {
      for (const auto& [key, a] : assessments) {
        tasks.push_back({juror, cand, key.first, key.second, a.raw_response});
      }
    }
  }
  if (tasks.empty()) throw ConfigError("no assessments found; run assess first");

  std::vector<VerdictOutcome> outcomes(tasks.size());
  std::atomic<long> calls{0}, reused{0};
  parallel_for(tasks.size(), cfg.max_inflight, [&](std::size_t i) {
    const Task& t = tasks[i];
    const fs::path path = layout.verdict(t.juror, t.candidate, t.pair_id, t.index);
    if (fs::exists(path)) {
      outcomes[i] = outcome_from_file(read_json(path));
      ++reused;
      return;
    }
    const std::string prompt = build_jury_prompt(t.answer);
    inference::ChatRequest req{
        .model_name = t.juror,
        .prompt = prompt,
        .images = {read_binary_file(layout.crop(t.pair_id, t.index, false)),
                   read_binary_file(layout.crop(t.pair_id, t.index, true))},
        .temperature = cfg.temperature,
        .seed = cfg.seed};

    std::optional<JuryVerdict> verdict;
    std::string error;
    int repairs = 0;
    try {
      ++calls;
      std::string reply = chat.chat(req);
      try {
        verdict = parse_verdict(reply, t.juror, t.candidate);
      } catch (const ParseError&) {
        ++repairs;
        req.prompt = prompts::repair_prompt(prompt, reply);
        ++calls;
        reply = chat.chat(req);
        try {
          verdict = parse_verdict(reply, t.juror, t.candidate);
        } catch (const ParseError& e) {
          error = e.what();
        }
      }
    } catch (const ProtocolError& e) {
      error = e.what();
    } catch (const ContractViolation& e) {
      error = e.what();
    }

    json doc = {{"jury_model", t.juror},
                {"candidate_model", t.candidate},
                {"pair_id", t.pair_id},
                {"building_index", t.index},
                {"repair_retries", repairs},
                {"same_family", model_family(t.juror) == model_family(t.candidate)}};
    if (verdict) {
      doc.update(to_json(*verdict));
      doc["status"] = "ok";
      doc["band"] = band_label(band_of(verdict->score));
    } else {
      doc["status"] = "failed";
      doc["error"] = error;
    }
    write_json(path, doc);
    outcomes[i] = outcome_from_file(doc);
  });

  const JuryRanking ranking = aggregate_rankings(outcomes);
  write_json(layout.jury_report(), to_json(ranking));

  JuryRunStats stats{.chat_calls = calls.load(), .reused = reused.load()};
  for (const auto& o : outcomes) (o.verdict ? stats.verdicts : stats.failures)++;
  return stats;
}

}  // namespace damagepipe::jury
