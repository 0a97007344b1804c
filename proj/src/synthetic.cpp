#include "damagepipe/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "damagepipe/errors.hpp"
#include "damagepipe/xbd.hpp"

namespace damagepipe::synthetic {

using json = nlohmann::json;

double confidence_for_id(int id) { return 0.50 + static_cast<double>((id * 37) % 50) / 100.0; }

std::string category_marker(int level) { return fmt::format("[[CAT:{}]]", level); }

std::optional<int> find_category_marker(std::string_view text) {
  static const std::regex re(R"(\[\[CAT:([0-9]+)\]\])");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(text.begin(), text.end(), m, re)) return std::stoi(m[1].str());
  return std::nullopt;
}

void paint(Raster& image, int id, bool building, int level, int x0, int y0, int x1, int y1) {
  if (id < 1 || id > 255) throw Error(fmt::format("marker id {} outside 1..255", id));
  if (level < 0 || level > 4) throw Error(fmt::format("marker level {} outside 0..4", level));
  image.fill_rect(x0, y0, x1, y1, building ? kBuildingTag : kOtherTag,
                  static_cast<std::uint8_t>(level), static_cast<std::uint8_t>(id));
}

namespace {

struct Extent {
  int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
  std::array<long, 5> level_counts{};
};

}  // namespace

std::vector<MarkedObject> decode(const Raster& image) {
  std::map<std::pair<int, int>, Extent> extents;  // (tag, id)
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto px = image.at(x, y);
      if ((px[0] != kBuildingTag && px[0] != kOtherTag) || px[2] == 0 || px[1] > 4) continue;
      auto& e = extents[{px[0], px[2]}];
      e.x0 = std::min(e.x0, x);
      e.y0 = std::min(e.y0, y);
      e.x1 = std::max(e.x1, x + 1);
      e.y1 = std::max(e.y1, y + 1);
      ++e.level_counts[px[1]];
    }
  }
  std::vector<MarkedObject> out;
  for (const auto& [key, e] : extents) {
    MarkedObject obj;
    obj.id = key.second;
    obj.building = key.first == kBuildingTag;
    obj.level = static_cast<int>(std::max_element(e.level_counts.begin(), e.level_counts.end()) -
                                 e.level_counts.begin());
    obj.box = geometry::BBox(e.x0, e.y0, e.x1, e.y1);
    obj.confidence = confidence_for_id(obj.id);
    out.push_back(obj);
  }
  return out;
}

std::optional<int> dominant_level(const Raster& image) {
  std::array<long, 5> counts{};
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto px = image.at(x, y);
      if (px[0] == kBuildingTag && px[2] != 0 && px[1] >= 1 && px[1] <= 4) ++counts[px[1]];
    }
  }
  auto it = std::max_element(counts.begin() + 1, counts.end());
  if (*it == 0) return std::nullopt;
  return static_cast<int>(it - counts.begin());
}

std::string describe(const Raster& image) {
  std::string out;
  if (auto level = dominant_level(image)) out = category_marker(*level);
  for (const auto& obj : decode(image)) {
    if (!out.empty()) out += ' ';
    out += fmt::format("[[BOX:{} {} {} {} {}]]", obj.id, obj.box.x_min(), obj.box.y_min(),
                       obj.box.x_max(), obj.box.y_max());
  }
  return out;
}

namespace {

json label_document(const std::vector<std::pair<geometry::Polygon, std::optional<int>>>& feats,
                    const std::string& pair_id, bool post) {
  json features = json::array();
  int n = 0;
  for (const auto& [poly, level] : feats) {
    json props = {{"feature_type", "building"},
                  {"uid", fmt::format("{}-b{}", pair_id, ++n)}};
    if (post && level) props["subtype"] = std::string(xbd::subtype_name(*level));
    features.push_back({{"wkt", geometry::to_wkt(poly)}, {"properties", props}});
  }
  return {{"features", {{"lng_lat", json::array()}, {"xy", features}}},
          {"metadata", {{"gsd", 0.5}, {"disaster", pair_id.substr(0, pair_id.find('_'))}}}};
}

}  // namespace

void write_dataset(const std::filesystem::path& root, const DatasetOptions& opt) {
  if (opt.pairs < 0 || opt.buildings_per_pair < 0 || opt.buildings_per_pair > 255 ||
      opt.size < 16) {
    throw ConfigError("synthetic dataset options out of range");
  }
  std::filesystem::create_directories(root / "images");
  if (opt.with_labels) std::filesystem::create_directories(root / "labels");
  std::mt19937_64 rng(opt.seed);
  const int grid = std::max(1, static_cast<int>(std::ceil(std::sqrt(opt.buildings_per_pair))));
  const int cell = opt.size / grid;

  for (int p = 0; p < opt.pairs; ++p) {
    const std::string pair_id = fmt::format("{}_{:08d}", opt.event, p);
    const geometry::ImageDims dims(opt.size, opt.size);
    Raster pre(dims, kBackground);
    Raster post(dims, kBackground);
    std::vector<std::pair<geometry::Polygon, std::optional<int>>> features;
    for (int b = 0; b < opt.buildings_per_pair; ++b) {
      const int gx = b % grid;
      const int gy = b / grid;
      const int side = std::max(4, static_cast<int>(cell * (0.30 + 0.15 * (rng() % 100) / 100.0)));
      const int slack = std::max(1, cell - 2 * side);
      const int x0 = gx * cell + side / 2 + static_cast<int>(rng() % slack) / 2;
      const int y0 = gy * cell + side / 2 + static_cast<int>(rng() % slack) / 2;
      const int level = 1 + static_cast<int>(rng() % 4);
      const int id = b + 1;
      paint(pre, id, true, 0, x0, y0, x0 + side, y0 + side);
      paint(post, id, true, level, x0, y0, x0 + side, y0 + side);
      geometry::Polygon footprint({{double(x0), double(y0)},
                                   {double(x0 + side), double(y0)},
                                   {double(x0 + side), double(y0 + side)},
                                   {double(x0), double(y0 + side)}});
      features.emplace_back(std::move(footprint), level);
    }
    png::write_file(root / "images" / (pair_id + "_pre_disaster.png"), pre);
    png::write_file(root / "images" / (pair_id + "_post_disaster.png"), post);
    if (opt.with_labels) {
      write_binary_file(root / "labels" / (pair_id + "_pre_disaster.json"),
                        label_document(features, pair_id, false).dump(2));
      write_binary_file(root / "labels" / (pair_id + "_post_disaster.json"),
                        label_document(features, pair_id, true).dump(2));
    }
  }
}

}  // namespace damagepipe::synthetic
