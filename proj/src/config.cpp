#include "damagepipe/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "damagepipe/errors.hpp"
#include "damagepipe/raster.hpp"

namespace damagepipe {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects the keys nobody asked for.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(fmt::format("{} must be an object", where()));
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("{} has the wrong type ({})", name(key), it->type_name()));
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string name(std::string_view key) const {
    return path_.empty() ? std::string(key) : fmt::format("{}.{}", path_, key);
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError(fmt::format("unknown config key \"{}\"", name(key)));
    }
  }

 private:
  std::string where() const { return path_.empty() ? std::string("config") : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

inference::BackendEndpoint parse_endpoint(const json& doc, const std::string& path) {
  Fields f(doc, path);
  inference::BackendEndpoint ep;
  f.read("base_url", ep.base_url);
  f.read("model_name", ep.model_name);
  f.read("timeout_s", ep.timeout_s);
  f.read("max_retries", ep.max_retries);
  f.read("backoff_s", ep.backoff_s);
  f.finish();
  if (ep.base_url.empty()) throw ConfigError(fmt::format("{}.base_url is required", path));
  inference::validate(ep);
  return ep;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void require_models(const std::vector<std::string>& models, const char* key) {
  std::set<std::string> unique;
  for (const auto& m : models) {
    if (m.empty()) throw ConfigError(fmt::format("{} contains an empty model name", key));
    if (!unique.insert(m).second) throw ConfigError(fmt::format("{} lists \"{}\" twice", key, m));
  }
}

}  // namespace

const inference::BackendEndpoint& RunConfig::endpoint(std::string_view capability) const {
  if (auto it = endpoints.find(std::string(capability)); it != endpoints.end()) return it->second;
  if (auto it = endpoints.find("default"); it != endpoints.end()) return it->second;
  throw ConfigError(fmt::format("no endpoint configured for \"{}\"", capability));
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  Fields top(doc, "");

  std::string dataset_root, run_dir = ".";
  top.read("dataset_root", dataset_root);
  top.read("run_dir", run_dir);
  cfg.dataset_root = dataset_root;
  cfg.run_dir = run_dir;
  top.read("run_id", cfg.run_id);
  if (cfg.run_id.empty() || cfg.run_id.find('/') != std::string::npos || cfg.run_id == "." ||
      cfg.run_id == "..") {
    throw ConfigError(fmt::format("run_id \"{}\" is not a valid directory name", cfg.run_id));
  }

  if (const json* eps = top.child("endpoints")) {
    if (!eps->is_object()) throw ConfigError("endpoints must be an object");
    for (const auto& [cap, ep] : eps->items()) {
      bool known = cap == "default";
      for (auto c : kCapabilities) known = known || cap == c;
      if (!known) throw ConfigError(fmt::format("unknown config key \"endpoints.{}\"", cap));
      cfg.endpoints.emplace(cap, parse_endpoint(ep, "endpoints." + cap));
    }
  }

  top.read("candidate_models", cfg.candidate_models);
  top.read("jury_models", cfg.jury_models);
  require_models(cfg.candidate_models, "candidate_models");
  require_models(cfg.jury_models, "jury_models");

  auto& p = cfg.pipeline;
  if (const json* sr = top.child("super_resolution")) {
    Fields f(*sr, "super_resolution");
    f.read("enabled", p.super_resolution);
    f.read("factor", p.sr_factor);
    f.finish();
  }
  if (p.sr_factor != 4) {
    throw ConfigError(fmt::format("super_resolution.factor must be 4, got {}", p.sr_factor));
  }
  if (const json* det = top.child("detection")) {
    Fields f(*det, "detection");
    f.read("confidence_threshold", p.confidence_threshold);
    f.finish();
  }
  if (!(p.confidence_threshold >= 0.0 && p.confidence_threshold <= 1.0)) {
    throw ConfigError(fmt::format("detection.confidence_threshold must be in [0, 1], got {}",
                                  p.confidence_threshold));
  }
  if (const json* crop = top.child("crop")) {
    Fields f(*crop, "crop");
    f.read("pad_fraction", p.pad_fraction);
    f.finish();
  }
  if (!(p.pad_fraction >= 0.0) || !std::isfinite(p.pad_fraction)) {
    throw ConfigError(fmt::format("crop.pad_fraction must be >= 0, got {}", p.pad_fraction));
  }

  std::string granularity = "cropped";
  top.read("granularity", granularity);
  if (granularity == "cropped") p.granularity = assess::Granularity::kCropped;
  else if (granularity == "full") p.granularity = assess::Granularity::kFull;
  else throw ConfigError(fmt::format("granularity must be \"cropped\" or \"full\", got \"{}\"", granularity));

  top.read("max_inflight", p.max_inflight);
  if (p.max_inflight < 1) {
    throw ConfigError(fmt::format("max_inflight must be >= 1, got {}", p.max_inflight));
  }
  top.read("temperature", p.temperature);
  if (!(p.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (doc.contains("seed") && doc["seed"].is_null()) p.seed.reset();
  if (const json* s = top.child("seed")) {
    if (!s->is_number_integer()) throw ConfigError("seed must be an integer or null");
    p.seed = s->get<std::int64_t>();
  }

  if (const json* sc = top.child("score")) {
    Fields f(*sc, "score");
    f.read("w", cfg.score.w);
    f.read("chunk_limit", cfg.score.chunk_limit);
    std::string target = "post";
    f.read("target", target);
    if (target == "post") cfg.score.target = clip::Target::kPost;
    else if (target == "pre") cfg.score.target = clip::Target::kPre;
    else throw ConfigError(fmt::format("score.target must be \"post\" or \"pre\", got \"{}\"", target));
    f.finish();
  }
  clip::validate(cfg.score);
  if (cfg.score.chunk_limit > inference::kClipContextTokens) {
    throw ConfigError(fmt::format("score.chunk_limit must be <= {}", inference::kClipContextTokens));
  }

  if (const json* m = top.child("metrics")) {
    Fields f(*m, "metrics");
    std::string positive = "severe";
    f.read("positive_class", positive);
    cfg.positive_class = metrics::bucket_from_name(lower(positive));
    f.read("iou_threshold", cfg.iou_threshold);
    f.read("top_k", cfg.top_k);
    std::string stopwords;
    f.read("stopwords", stopwords);
    if (!stopwords.empty()) cfg.stopwords = stopwords;
    f.finish();
  }
  if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0)) {
    throw ConfigError(fmt::format("metrics.iou_threshold must be in (0, 1], got {}", cfg.iou_threshold));
  }
  if (cfg.top_k < 1) throw ConfigError(fmt::format("metrics.top_k must be >= 1, got {}", cfg.top_k));

  top.finish();
  return cfg;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(fmt::format("--set expects key=value, got \"{}\"", assignment));
  }
  const std::string_view key = assignment.substr(0, eq);
  const std::string value(assignment.substr(eq + 1));

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part(key.substr(start, dot == std::string_view::npos ? key.npos : dot - start));
    if (part.empty()) throw ConfigError(fmt::format("--set key \"{}\" has an empty component", key));
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw ConfigError(fmt::format("--set {}: parent is not an object", key));
    node = &(*node)[part];
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  json parsed = json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? json(value) : std::move(parsed);
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw ConfigError(fmt::format("config file {} not found", path.string()));
  json doc = json::parse(read_binary_file(path), nullptr, false);
  if (doc.is_discarded()) throw ConfigError(fmt::format("{}: invalid JSON", path.string()));
  if (!doc.is_object()) throw ConfigError(fmt::format("{}: top level must be an object", path.string()));

  if (const char* env = std::getenv("DAMAGEPIPE_RUN_DIR"); env != nullptr && *env != '\0') {
    doc["run_dir"] = env;
  }
  for (const auto& o : overrides) apply_override(doc, o);

  RunConfig cfg = parse_config(doc);
  const fs::path base = path.parent_path();
  auto resolve = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(cfg.dataset_root);
  resolve(cfg.run_dir);
  if (cfg.stopwords) resolve(*cfg.stopwords);
  return cfg;
}

json snapshot(const RunConfig& cfg) {
  json endpoints = json::object();
  for (const auto& [cap, ep] : cfg.endpoints) {
    endpoints[cap] = {{"base_url", ep.base_url},
                      {"model_name", ep.model_name},
                      {"timeout_s", ep.timeout_s},
                      {"max_retries", ep.max_retries},
                      {"backoff_s", ep.backoff_s}};
  }
  const auto& p = cfg.pipeline;
  return {{"run_id", cfg.run_id},
          {"dataset_root", cfg.dataset_root.string()},
          {"endpoints", endpoints},
          {"candidate_models", cfg.candidate_models},
          {"jury_models", cfg.jury_models},
          {"super_resolution", {{"enabled", p.super_resolution}, {"factor", p.sr_factor}}},
          {"detection", {{"confidence_threshold", p.confidence_threshold}}},
          {"crop", {{"pad_fraction", p.pad_fraction}}},
          {"granularity", p.granularity == assess::Granularity::kFull ? "full" : "cropped"},
          {"max_inflight", p.max_inflight},
          {"temperature", p.temperature},
          {"seed", p.seed ? json(*p.seed) : json(nullptr)},
          {"score",
           {{"w", cfg.score.w},
            {"chunk_limit", cfg.score.chunk_limit},
            {"target", cfg.score.target == clip::Target::kPost ? "post" : "pre"}}},
          {"metrics",
           {{"positive_class", metrics::bucket_name(cfg.positive_class)},
            {"iou_threshold", cfg.iou_threshold},
            {"top_k", cfg.top_k}}}};
}

}  // namespace damagepipe
