#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "damagepipe/geometry.hpp"

namespace damagepipe::xbd {

/// Four-level severity scale, 1 = No/Slight Damage ... 4 = Totally Destroyed.
class DamageCategory {
 public:
  explicit DamageCategory(int level);
  int level() const noexcept { return level_; }
  friend auto operator<=>(const DamageCategory&, const DamageCategory&) = default;

 private:
  int level_;
};

/// "No/Slight Damage", "Moderate Damage", "Severe Damage", "Totally Destroyed".
std::string_view category_name(DamageCategory c);
/// xBD subtype string for a level: "no-damage", "minor-damage", ...
std::string_view subtype_name(int level);

/// Maps an xBD subtype. "un-classified" yields nullopt (excluded from ground
/// truth); unknown strings throw MappingError.
std::optional<DamageCategory> subtype_to_category(std::string_view subtype);

struct BuildingAnnotation {
  std::string uid;
  geometry::Polygon polygon;  // native-resolution pixel space
  std::optional<DamageCategory> category;
};

struct LabelFile {
  std::vector<BuildingAnnotation> buildings;
  int excluded_unclassified = 0;
  int skipped_non_building = 0;
  std::optional<double> gsd_m;
};

LabelFile load_label_file(const std::filesystem::path& path);

/// Event name of a pair id: everything before the last '_'.
std::string event_of(std::string_view pair_id);

struct ImagePairRecord {
  std::string pair_id;  // "<event>_<id>"
  std::filesystem::path pre_image_path;
  std::filesystem::path post_image_path;
  std::optional<std::filesystem::path> pre_labels_path;
  std::optional<std::filesystem::path> post_labels_path;
  geometry::ImageDims dims;
  double gsd_m = 0.5;

  std::string event() const { return event_of(pair_id); }
};

struct Discovery {
  std::vector<ImagePairRecord> pairs;  // sorted by pair_id
  std::vector<std::string> warnings;   // orphans, dim mismatches
};

/// Scans <root>/images (or <root> itself when absent) for
/// <event>_<id>_{pre,post}_disaster.png, and <root>/labels (or the image
/// directory) for matching .json label files.
Discovery discover_pairs(const std::filesystem::path& root);

}  // namespace damagepipe::xbd
