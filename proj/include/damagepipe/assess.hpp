#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "damagepipe/geometry.hpp"
#include "damagepipe/inference.hpp"
#include "damagepipe/raster.hpp"
#include "damagepipe/run_layout.hpp"
#include "damagepipe/xbd.hpp"

namespace damagepipe::assess {

struct CropPair {
  std::string pair_id;
  int building_index = 0;
  geometry::BBox padded_box;  // upscaled pixel space, real-valued
  Raster pre_patch;
  Raster post_patch;
  double detection_confidence = 0.0;
};

struct DamageAssessment {
  xbd::DamageCategory category{1};
  std::string reasoning;
  std::vector<std::string> hazards;
  std::vector<std::string> characteristics;
  std::vector<std::string> recommendations;
  std::string raw_response;
  std::string candidate_model;
};

std::string build_assessment_prompt();

/// Cuts the same integer rectangle [floor(min), ceil(max)) from both images.
CropPair crop_pair(const Raster& pre, const Raster& post, const geometry::BBox& padded_box);

/// Parses the first JSON object of a VLM reply. Throws ParseError when there
/// is none or its category is missing or outside 1..4.
DamageAssessment parse_assessment(std::string_view vlm_text, std::string candidate_model);

/// Text scored by clip-eval: category name, reasoning, hazards and
/// recommendations, in that order.
std::string caption_of(const DamageAssessment& a);
/// Text fed to word-frequency analysis: reasoning, characteristics, hazards
/// and recommendations.
std::string description_of(const DamageAssessment& a);

nlohmann::json to_json(const DamageAssessment& a);
DamageAssessment assessment_from_json(const nlohmann::json& doc);

enum class Granularity { kCropped, kFull };

struct PipelineConfig {
  bool super_resolution = true;
  int sr_factor = 4;
  double confidence_threshold = 0.25;
  double pad_fraction = 0.30;
  Granularity granularity = Granularity::kCropped;
  int max_inflight = 4;
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 0;
};

/// One detected building of a scene, persisted so later stages and resumed
/// runs never repeat upscale/detect.
struct SceneBuilding {
  int index = 0;
  geometry::BBox box;         // detector box, upscaled space
  geometry::BBox padded_box;  // upscaled space
  double confidence = 0.0;
};

struct SceneRecord {
  std::string pair_id;
  double scale = 1.0;  // upscaled / native
  geometry::ImageDims native_dims;
  geometry::ImageDims working_dims;
  int below_threshold = 0;
  std::vector<SceneBuilding> buildings;
};

nlohmann::json to_json(const SceneRecord& s);
SceneRecord scene_from_json(const nlohmann::json& doc);

struct CandidateCounts {
  long assessments = 0;
  long failures = 0;
  long repair_retries = 0;
};

struct RunManifest {
  std::string run_id;
  std::string created_at;  // UTC, ISO 8601
  nlohmann::json config;
  std::map<std::string, double> timing_s;
  long pairs = 0;
  long detections = 0;
  long detections_below_threshold = 0;
  long crops = 0;
  std::map<std::string, CandidateCounts> candidates;
  std::map<std::string, std::string> pair_errors;  // pair_id -> reason the pair was skipped
  bool aborted = false;
  std::string abort_reason;
};

nlohmann::json to_json(const RunManifest& m);

struct Backends {
  inference::Client upscale;
  inference::Client detect;
  inference::Client chat;
};

/// Upscale, detect on the upscaled pre image, pad, crop, then ask every
/// candidate VLM about every crop. Artifacts already on disk are reused, so
/// an interrupted run resumes where it stopped. Throws BackendUnavailable
/// (after persisting the manifest) when a backend cannot be reached.
RunManifest run_event(const PipelineConfig& config, const nlohmann::json& config_snapshot,
                      const std::vector<std::string>& candidate_models,
                      const std::vector<xbd::ImagePairRecord>& pairs, const Backends& backends,
                      const RunLayout& layout);

/// Loads every persisted assessment of a candidate, keyed by (pair_id, index).
std::map<std::pair<std::string, int>, DamageAssessment> load_assessments(
    const RunLayout& layout, std::string_view candidate);

}  // namespace damagepipe::assess
