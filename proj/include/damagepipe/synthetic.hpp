#pragma once

// Machine-readable markers painted into synthetic test imagery.
//
// A marker pixel has R == kBuildingTag (or kOtherTag for non-building
// objects), G == damage level 0..4 (0: unknown / pre-disaster) and
// B == object id 1..255. Background pixels are grey (R == G == B). Markers
// survive nearest-neighbour upscaling and cropping, so the mock backend can
// read boxes and damage levels back out of any image derived from a scene.
// The textual form of a damage marker is "[[CAT:n]]".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "damagepipe/geometry.hpp"
#include "damagepipe/raster.hpp"

namespace damagepipe::synthetic {

inline constexpr std::uint8_t kBuildingTag = 250;
inline constexpr std::uint8_t kOtherTag = 251;
inline constexpr std::uint8_t kBackground = 96;

struct MarkedObject {
  int id = 0;
  bool building = true;
  int level = 0;
  geometry::BBox box{0, 0, 1, 1};  // exclusive max, pixel units
  double confidence = 0.0;
};

/// Detector confidence the mock reports for an object id, in [0.50, 0.99].
double confidence_for_id(int id);

std::string category_marker(int level);
/// Parses the first "[[CAT:n]]" marker in text.
std::optional<int> find_category_marker(std::string_view text);

void paint(Raster& image, int id, bool building, int level, int x0, int y0, int x1, int y1);

/// Every marked object in the image, ordered by (tag, id).
std::vector<MarkedObject> decode(const Raster& image);

/// Majority damage level over building marker pixels with level 1..4.
std::optional<int> dominant_level(const Raster& image);

/// Textual payload description, e.g. "[[CAT:3]] [[BOX:1 10 10 40 40]]".
std::string describe(const Raster& image);

struct DatasetOptions {
  std::string event = "moore-tornado";
  int pairs = 3;
  int buildings_per_pair = 2;
  int size = 256;
  std::uint64_t seed = 7;
  bool with_labels = true;
};

/// Writes an xBD-style tree: <root>/images/*.png and <root>/labels/*.json.
/// Buildings are axis-aligned rectangles on a grid so padded crops never
/// reach a neighbour's pixels.
void write_dataset(const std::filesystem::path& root, const DatasetOptions& options);

}  // namespace damagepipe::synthetic
