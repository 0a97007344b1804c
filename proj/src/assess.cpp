#include "damagepipe/assess.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <mutex>

#include <fmt/format.h>

#include "damagepipe/errors.hpp"
#include "damagepipe/json_extract.hpp"
#include "damagepipe/parallel.hpp"
#include "damagepipe/prompts.hpp"

namespace damagepipe::assess {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string build_assessment_prompt() { return prompts::assessment_prompt(); }

CropPair crop_pair(const Raster& pre, const Raster& post, const geometry::BBox& padded_box) {
  if (pre.dims() != post.dims()) {
    throw GeometryError(fmt::format("pre image {}x{} and post image {}x{} differ", pre.width(),
                                    pre.height(), post.width(), post.height()));
  }
  const int x0 = static_cast<int>(std::floor(padded_box.x_min()));
  const int y0 = static_cast<int>(std::floor(padded_box.y_min()));
  const int x1 = static_cast<int>(std::ceil(padded_box.x_max()));
  const int y1 = static_cast<int>(std::ceil(padded_box.y_max()));
  if (x0 < 0 || y0 < 0 || x1 > pre.width() || y1 > pre.height()) {
    throw GeometryError(fmt::format("crop box ({}, {}, {}, {}) outside {}x{} image",
                                    padded_box.x_min(), padded_box.y_min(), padded_box.x_max(),
                                    padded_box.y_max(), pre.width(), pre.height()));
  }
  CropPair out{.padded_box = padded_box};
  out.pre_patch = pre.crop(x0, y0, x1, y1);
  out.post_patch = post.crop(x0, y0, x1, y1);
  return out;
}

namespace {

std::vector<std::string> string_list(const json& doc, const char* key) {
  std::vector<std::string> out;
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return out;
  if (it->is_string()) {
    out.push_back(it->get<std::string>());
    return out;
  }
  if (!it->is_array()) throw ParseError(fmt::format("\"{}\" must be a list of strings", key));
  for (const auto& item : *it) {
    out.push_back(item.is_string() ? item.get<std::string>() : item.dump());
  }
  return out;
}

int category_level(const json& doc) {
  auto it = doc.find("category");
  if (it == doc.end()) throw ParseError("assessment has no \"category\"");
  double value = 0.0;
  if (it->is_number()) {
    value = it->get<double>();
  } else if (it->is_string()) {
    const auto s = it->get<std::string>();
    if (s.size() != 1 || s[0] < '0' || s[0] > '9') {
      throw ParseError(fmt::format("category \"{}\" is not a level 1-4", s));
    }
    value = s[0] - '0';
  } else {
    throw ParseError("category must be a number");
  }
  if (value != std::floor(value) || value < 1 || value > 4) {
    throw ParseError(fmt::format("category {} outside the 1-4 scale", it->dump()));
  }
  return static_cast<int>(value);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

DamageAssessment parse_assessment(std::string_view vlm_text, std::string candidate_model) {
  auto doc = extract_first_json_object(vlm_text);
  if (!doc) throw ParseError("no JSON object in model reply");
  DamageAssessment a{.category = xbd::DamageCategory(category_level(*doc))};
  if (auto r = doc->find("reasoning"); r != doc->end() && r->is_string()) {
    a.reasoning = r->get<std::string>();
  }
  a.hazards = string_list(*doc, "hazards");
  a.characteristics = string_list(*doc, "characteristics");
  a.recommendations = string_list(*doc, "recommendations");
  a.raw_response = std::string(vlm_text);
  a.candidate_model = std::move(candidate_model);
  return a;
}

std::string caption_of(const DamageAssessment& a) {
  return join({std::string(xbd::category_name(a.category)) + ".", a.reasoning,
               join(a.hazards, ". "), join(a.recommendations, ". ")},
              " ");
}

std::string description_of(const DamageAssessment& a) {
  return join({a.reasoning, join(a.characteristics, ". "), join(a.hazards, ". "),
               join(a.recommendations, ". ")},
              ". ");
}

json to_json(const DamageAssessment& a) {
  return {{"category", a.category.level()},
          {"category_name", std::string(xbd::category_name(a.category))},
          {"reasoning", a.reasoning},
          {"hazards", a.hazards},
          {"characteristics", a.characteristics},
          {"recommendations", a.recommendations},
          {"raw_response", a.raw_response},
          {"candidate_model", a.candidate_model}};
}

DamageAssessment assessment_from_json(const json& doc) {
  try {
    return {.category = xbd::DamageCategory(doc.at("category").get<int>()),
            .reasoning = doc.at("reasoning").get<std::string>(),
            .hazards = doc.at("hazards").get<std::vector<std::string>>(),
            .characteristics = doc.at("characteristics").get<std::vector<std::string>>(),
            .recommendations = doc.at("recommendations").get<std::vector<std::string>>(),
            .raw_response = doc.at("raw_response").get<std::string>(),
            .candidate_model = doc.at("candidate_model").get<std::string>()};
  } catch (const json::exception& e) {
    throw LoadError(fmt::format("malformed assessment record: {}", e.what()));
  }
}

namespace {

json box_json(const geometry::BBox& b) { return {b.x_min(), b.y_min(), b.x_max(), b.y_max()}; }

geometry::BBox box_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw LoadError("box must have 4 coordinates");
  return geometry::BBox(v[0], v[1], v[2], v[3]);
}

}  // namespace

json to_json(const SceneRecord& s) {
  json buildings = json::array();
  for (const auto& b : s.buildings) {
    buildings.push_back({{"index", b.index},
                         {"box", box_json(b.box)},
                         {"padded_box", box_json(b.padded_box)},
                         {"confidence", b.confidence}});
  }
  return {{"pair_id", s.pair_id},
          {"scale", s.scale},
          {"native_dims", {s.native_dims.width, s.native_dims.height}},
          {"working_dims", {s.working_dims.width, s.working_dims.height}},
          {"below_threshold", s.below_threshold},
          {"buildings", buildings}};
}

SceneRecord scene_from_json(const json& doc) {
  try {
    SceneRecord s;
    s.pair_id = doc.at("pair_id").get<std::string>();
    s.scale = doc.at("scale").get<double>();
    s.native_dims = {doc.at("native_dims").at(0).get<int>(), doc.at("native_dims").at(1).get<int>()};
    s.working_dims = {doc.at("working_dims").at(0).get<int>(),
                      doc.at("working_dims").at(1).get<int>()};
    s.below_threshold = doc.at("below_threshold").get<int>();
    for (const auto& b : doc.at("buildings")) {
      s.buildings.push_back({b.at("index").get<int>(), box_from(b.at("box")),
                             box_from(b.at("padded_box")), b.at("confidence").get<double>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw LoadError(fmt::format("malformed scene record: {}", e.what()));
  }
}

json to_json(const RunManifest& m) {
  json candidates = json::object();
  for (const auto& [name, c] : m.candidates) {
    candidates[name] = {{"assessments", c.assessments},
                        {"failures", c.failures},
                        {"repair_retries", c.repair_retries}};
  }
  json out = {{"run_id", m.run_id},
              {"created_at", m.created_at},
              {"config", m.config},
              {"timing_s", m.timing_s},
              {"counts",
               {{"pairs", m.pairs},
                {"detections", m.detections},
                {"detections_below_threshold", m.detections_below_threshold},
                {"crops", m.crops}}},
              {"candidates", candidates},
              {"aborted", m.aborted}};
  json errors = json::array();
  for (const auto& [pair_id, reason] : m.pair_errors) {
    errors.push_back({{"pair_id", pair_id}, {"error", reason}});
  }
  out["pair_errors"] = errors;
  if (m.aborted) out["abort_reason"] = m.abort_reason;
  return out;
}

namespace {

SceneRecord prepare_scene(const xbd::ImagePairRecord& pair, const PipelineConfig& cfg,
                          const Backends& backends, const RunLayout& layout) {
  const fs::path scene_path = layout.scene(pair.pair_id);
  if (fs::exists(scene_path)) return scene_from_json(read_json(scene_path));

  Raster pre = png::read_file(pair.pre_image_path);
  Raster post = png::read_file(pair.post_image_path);
  if (pre.dims() != post.dims()) {
    throw GeometryError(fmt::format("{}: pre/post dims differ", pair.pair_id));
  }
  SceneRecord scene{.pair_id = pair.pair_id, .native_dims = pre.dims()};
  if (cfg.super_resolution) {
    pre = backends.upscale.upscale(pre, cfg.sr_factor);
    post = backends.upscale.upscale(post, cfg.sr_factor);
    scene.scale = cfg.sr_factor;
  }
  scene.working_dims = pre.dims();

  if (cfg.granularity == Granularity::kFull) {
    const geometry::BBox whole(0, 0, pre.width(), pre.height());
    scene.buildings.push_back({0, whole, whole, 1.0});
  } else {
    int index = 0;
    for (const auto& det : backends.detect.detect(pre)) {
      if (det.confidence < cfg.confidence_threshold) {
        ++scene.below_threshold;
        continue;
      }
      scene.buildings.push_back({index++, det.bbox,
                                 geometry::pad_bbox(det.bbox, cfg.pad_fraction, pre.dims()),
                                 det.confidence});
    }
  }

  for (const auto& b : scene.buildings) {
    const CropPair crop = crop_pair(pre, post, b.padded_box);
    png::write_file(layout.crop(pair.pair_id, b.index, false), crop.pre_patch);
    png::write_file(layout.crop(pair.pair_id, b.index, true), crop.post_patch);
  }
  // Written last: its presence marks the scene's crops as complete.
  write_json(scene_path, to_json(scene));
  return scene;
}

struct WorkItem {
  std::string candidate;
  std::string pair_id;
  SceneBuilding building;
};

void assess_building(const WorkItem& item, const PipelineConfig& cfg, const Backends& backends,
                     const RunLayout& layout) {
  const std::string prompt = build_assessment_prompt();
  inference::ChatRequest req{
      .model_name = item.candidate,
      .prompt = prompt,
      .images = {read_binary_file(layout.crop(item.pair_id, item.building.index, false)),
                 read_binary_file(layout.crop(item.pair_id, item.building.index, true))},
      .temperature = cfg.temperature,
      .seed = cfg.seed};

  int repairs = 0;
  std::vector<std::string> replies;
  std::string error;
  std::optional<DamageAssessment> parsed;
  try {
    replies.push_back(backends.chat.chat(req));
    try {
      parsed = parse_assessment(replies.back(), item.candidate);
    } catch (const ParseError& first) {
      ++repairs;
      req.prompt = prompts::repair_prompt(prompt, replies.back());
      replies.push_back(backends.chat.chat(req));
      try {
        parsed = parse_assessment(replies.back(), item.candidate);
      } catch (const ParseError& second) {
        error = fmt::format("unparseable after repair: {}; {}", first.what(), second.what());
      }
    }
  } catch (const ProtocolError& e) {
    error = e.what();
  } catch (const ContractViolation& e) {
    error = e.what();
  }

  const int index = item.building.index;
  if (!replies.empty()) write_binary_file(layout.raw(item.candidate, item.pair_id, index), replies.back());
  json meta = {{"pair_id", item.pair_id},
               {"building_index", index},
               {"padded_box", box_json(item.building.padded_box)},
               {"detection_confidence", item.building.confidence},
               {"repair_retries", repairs}};
  if (parsed) {
    json doc = to_json(*parsed);
    doc.update(meta);
    write_json(layout.assessment(item.candidate, item.pair_id, index), doc);
  } else {
    meta["candidate_model"] = item.candidate;
    meta["error"] = error;
    meta["responses"] = replies;
    write_json(layout.failure(item.candidate, item.pair_id, index), meta);
  }
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunManifest run_event(const PipelineConfig& cfg, const json& config_snapshot,
                      const std::vector<std::string>& candidate_models,
                      const std::vector<xbd::ImagePairRecord>& pairs, const Backends& backends,
                      const RunLayout& layout) {
  using clock = std::chrono::steady_clock;
  RunManifest manifest;
  manifest.run_id = layout.run_id();
  manifest.config = config_snapshot;
  manifest.created_at = utc_now();

  std::vector<std::optional<SceneRecord>> scenes(pairs.size());
  std::vector<std::string> pair_errors(pairs.size());
  std::vector<WorkItem> work;

  auto finish = [&](const char* stage, clock::time_point start) {
    manifest.timing_s[stage] = std::chrono::duration<double>(clock::now() - start).count();
  };
  auto tally = [&] {
    manifest.pairs = manifest.detections = manifest.detections_below_threshold = 0;
    manifest.crops = 0;
    manifest.candidates.clear();
    for (const auto& cand : candidate_models) manifest.candidates[cand] = {};
    for (const auto& scene : scenes) {
      if (!scene) continue;
      ++manifest.pairs;
      manifest.detections += static_cast<long>(scene->buildings.size());
      manifest.detections_below_threshold += scene->below_threshold;
      manifest.crops += static_cast<long>(scene->buildings.size());
      for (const auto& cand : candidate_models) {
        auto& counts = manifest.candidates[cand];
        for (const auto& b : scene->buildings) {
          fs::path done = layout.assessment(cand, scene->pair_id, b.index);
          if (fs::exists(done)) {
            ++counts.assessments;
          } else if (done = layout.failure(cand, scene->pair_id, b.index); fs::exists(done)) {
            ++counts.failures;
          } else {
            continue;
          }
          counts.repair_retries += read_json(done).value("repair_retries", 0L);
        }
      }
    }
  };
  auto persist = [&] {
    manifest.pair_errors.clear();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (!pair_errors[i].empty()) manifest.pair_errors[pairs[i].pair_id] = pair_errors[i];
    }
    write_json(layout.manifest(), to_json(manifest));
  };

  try {
    auto start = clock::now();
    parallel_for(pairs.size(), cfg.max_inflight, [&](std::size_t i) {
      try {
        scenes[i] = prepare_scene(pairs[i], cfg, backends, layout);
      } catch (const BackendUnavailable&) {
        throw;
      } catch (const Error& e) {
        pair_errors[i] = e.what();
      }
    });
    finish("scene", start);

    for (const auto& scene : scenes) {
      if (!scene) continue;
      for (const auto& cand : candidate_models) {
        for (const auto& b : scene->buildings) {
          if (fs::exists(layout.assessment(cand, scene->pair_id, b.index)) ||
              fs::exists(layout.failure(cand, scene->pair_id, b.index))) {
            continue;
          }
          work.push_back({cand, scene->pair_id, b});
        }
      }
    }

    start = clock::now();
    parallel_for(work.size(), cfg.max_inflight,
                 [&](std::size_t i) { assess_building(work[i], cfg, backends, layout); });
    finish("assess", start);
  } catch (const BackendUnavailable& e) {
    manifest.aborted = true;
    manifest.abort_reason = e.what();
    tally();
    persist();
    throw;
  }
  tally();
  persist();
  return manifest;
}

std::map<std::pair<std::string, int>, DamageAssessment> load_assessments(
    const RunLayout& layout, std::string_view candidate) {
  std::map<std::pair<std::string, int>, DamageAssessment> out;
  const fs::path dir = layout.assessments_dir(candidate);
  if (!fs::is_directory(dir)) return out;
  for (const auto& pair_dir : fs::directory_iterator(dir)) {
    if (!pair_dir.is_directory()) continue;
    for (const auto& file : fs::directory_iterator(pair_dir.path())) {
      if (file.path().extension() != ".json") continue;
      const json doc = read_json(file.path());
      out.emplace(std::pair{doc.at("pair_id").get<std::string>(),
                            doc.at("building_index").get<int>()},
                  assessment_from_json(doc));
    }
  }
  return out;
}

}  // namespace damagepipe::assess
