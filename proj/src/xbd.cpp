#include "damagepipe/xbd.hpp"

#include <algorithm>
#include <array>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "damagepipe/errors.hpp"
#include "damagepipe/raster.hpp"

namespace damagepipe::xbd {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kNames = {"No/Slight Damage", "Moderate Damage",
                                                    "Severe Damage", "Totally Destroyed"};
constexpr std::array<std::string_view, 4> kSubtypes = {"no-damage", "minor-damage",
                                                       "major-damage", "destroyed"};

}  // namespace

DamageCategory::DamageCategory(int level) : level_(level) {
  if (level < 1 || level > 4) {
    throw MappingError(fmt::format("damage level {} outside 1..4", level));
  }
}

std::string_view category_name(DamageCategory c) { return kNames[c.level() - 1]; }

std::string_view subtype_name(int level) { return kSubtypes.at(DamageCategory(level).level() - 1); }

std::optional<DamageCategory> subtype_to_category(std::string_view subtype) {
  for (std::size_t i = 0; i < kSubtypes.size(); ++i) {
    if (subtype == kSubtypes[i]) return DamageCategory(static_cast<int>(i) + 1);
  }
  if (subtype == "un-classified") return std::nullopt;
  throw MappingError(fmt::format("unknown damage subtype '{}'", subtype));
}

LabelFile load_label_file(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_binary_file(path));
  } catch (const json::exception& e) {
    throw LoadError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }

  LabelFile out;
  if (auto meta = doc.find("metadata"); meta != doc.end() && meta->is_object()) {
    if (auto gsd = meta->find("gsd"); gsd != meta->end() && gsd->is_number()) {
      out.gsd_m = gsd->get<double>();
    }
  }
  const json* xy = nullptr;
  if (auto f = doc.find("features"); f != doc.end() && f->is_object()) {
    if (auto x = f->find("xy"); x != f->end()) xy = &*x;
  }
  if (xy == nullptr) return out;
  if (!xy->is_array()) throw LoadError(fmt::format("{}: features.xy is not an array", path.string()));

  for (std::size_t i = 0; i < xy->size(); ++i) {
    const json& feat = (*xy)[i];
    try {
      const json props = feat.value("properties", json::object());
      if (props.value("feature_type", std::string("building")) != "building") {
        ++out.skipped_non_building;
        continue;
      }
      std::optional<DamageCategory> category;
      if (auto st = props.find("subtype"); st != props.end()) {
        category = subtype_to_category(st->get<std::string>());
        if (!category) {
          ++out.excluded_unclassified;
          continue;
        }
      }
      out.buildings.push_back({props.value("uid", fmt::format("feature-{}", i)),
                               geometry::parse_wkt_polygon(feat.at("wkt").get<std::string>()),
                               category});
    } catch (const Error& e) {
      throw LoadError(fmt::format("{}: feature {}: {}", path.string(), i, e.what()));
    } catch (const json::exception& e) {
      throw LoadError(fmt::format("{}: feature {}: {}", path.string(), i, e.what()));
    }
  }
  return out;
}

std::string event_of(std::string_view pair_id) {
  auto pos = pair_id.rfind('_');
  return std::string(pos == std::string_view::npos ? pair_id : pair_id.substr(0, pos));
}

namespace {

struct Found {
  std::optional<fs::path> pre, post;
};

// "<event>_<id>_pre_disaster" -> ("<event>_<id>", true)
std::optional<std::pair<std::string, bool>> split_stem(const std::string& stem) {
  static constexpr std::string_view kPre = "_pre_disaster";
  static constexpr std::string_view kPost = "_post_disaster";
  auto ends_with = [&](std::string_view suffix) {
    return stem.size() > suffix.size() &&
           stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(kPre)) return std::pair{stem.substr(0, stem.size() - kPre.size()), true};
  if (ends_with(kPost)) return std::pair{stem.substr(0, stem.size() - kPost.size()), false};
  return std::nullopt;
}

}  // namespace

Discovery discover_pairs(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw LoadError(fmt::format("dataset root {} is not a directory", root.string()));
  }
  const fs::path image_dir = fs::is_directory(root / "images") ? root / "images" : root;
  const fs::path label_dir = fs::is_directory(root / "labels") ? root / "labels" : image_dir;

  std::map<std::string, Found> found;  // ordered by pair_id
  for (const auto& entry : fs::directory_iterator(image_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    auto split = split_stem(entry.path().stem().string());
    if (!split) continue;
    auto& slot = found[split->first];
    (split->second ? slot.pre : slot.post) = entry.path();
  }

  Discovery out;
  for (const auto& [pair_id, f] : found) {
    if (!f.pre || !f.post) {
      out.warnings.push_back(fmt::format("skipped orphan {}: missing {} image", pair_id,
                                         f.pre ? "post-disaster" : "pre-disaster"));
      continue;
    }
    ImagePairRecord rec;
    rec.pair_id = pair_id;
    rec.pre_image_path = *f.pre;
    rec.post_image_path = *f.post;
    try {
      rec.dims = png::read_dims(*f.pre);
      if (png::read_dims(*f.post) != rec.dims) {
        out.warnings.push_back(fmt::format("skipped {}: pre/post dims differ", pair_id));
        continue;
      }
    } catch (const LoadError& e) {
      out.warnings.push_back(fmt::format("skipped {}: {}", pair_id, e.what()));
      continue;
    }
    if (auto p = label_dir / (pair_id + "_pre_disaster.json"); fs::exists(p)) {
      rec.pre_labels_path = p;
    }
    if (auto p = label_dir / (pair_id + "_post_disaster.json"); fs::exists(p)) {
      rec.post_labels_path = p;
      try {
        json doc = json::parse(read_binary_file(p));
        if (auto g = doc["metadata"]["gsd"]; g.is_number()) rec.gsd_m = g.get<double>();
      } catch (const json::exception&) {
        // Surfaced later by load_label_file.
      }
    }
    out.pairs.push_back(std::move(rec));
  }
  return out;
}

}  // namespace damagepipe::xbd
