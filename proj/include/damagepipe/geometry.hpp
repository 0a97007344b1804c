#pragma once

// Pixel-space geometry shared by ingestion, cropping and evaluation.
//
// WKT grammar accepted by parse_wkt_polygon (keywords case-insensitive,
// whitespace is any run of blanks/tabs/newlines):
//
//   polygon := "POLYGON" ws? "(" ring ( "," ring )* ")"
//   ring    := "(" point ( "," point )* ")"
//   point   := number ws number
//
// Only the first (outer) ring is kept. Serialization writes the ring closed,
// i.e. the first vertex is repeated at the end, using shortest round-trip
// decimal formatting.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace damagepipe::geometry {

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct ImageDims {
  int width = 0;
  int height = 0;

  ImageDims() = default;
  ImageDims(int w, int h);

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Axis-aligned box with x_min < x_max and y_min < y_max, all finite.
class BBox {
 public:
  BBox(double x_min, double y_min, double x_max, double y_max);

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }

  bool within(const ImageDims& dims) const noexcept;

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x_min_, y_min_, x_max_, y_max_;
};

/// Outer ring of a building footprint, stored unclosed.
class Polygon {
 public:
  explicit Polygon(std::vector<PixelPoint> ring);

  const std::vector<PixelPoint>& ring() const noexcept { return ring_; }

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<PixelPoint> ring_;
};

struct ScoredBox {
  BBox box;
  double confidence = 0.0;
};

struct Match {
  std::size_t det_index = 0;
  std::size_t truth_index = 0;

  friend bool operator==(const Match&, const Match&) = default;
};

Polygon parse_wkt_polygon(std::string_view text);
std::string to_wkt(const Polygon& polygon);

BBox polygon_to_bbox(const Polygon& polygon);

/// Grows width and height by (1 + pad_fraction) about the center, then
/// clamps to [0, width] x [0, height].
BBox pad_bbox(const BBox& box, double pad_fraction, const ImageDims& dims);

BBox scale_bbox(const BBox& box, double factor);

double iou(const BBox& a, const BBox& b);

/// Greedy one-to-one matching. Detections are visited in descending
/// confidence (ties by index); each takes the unmatched truth with the
/// highest IoU (ties by lowest truth index) provided IoU >= iou_threshold.
/// Result is ordered by visit order.
std::vector<Match> match_detections(std::span<const ScoredBox> dets,
                                    std::span<const BBox> truths,
                                    double iou_threshold);

}  // namespace damagepipe::geometry
