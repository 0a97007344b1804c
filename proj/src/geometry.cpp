#include "damagepipe/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "damagepipe/errors.hpp"

namespace damagepipe::geometry {

ImageDims::ImageDims(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) {
    throw GeometryError(fmt::format("image dims must be positive, got {}x{}", w, h));
  }
}

BBox::BBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_max)) {
    throw GeometryError("bounding box has a non-finite coordinate");
  }
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw GeometryError(fmt::format("degenerate bounding box ({}, {}, {}, {})", x_min,
                                    y_min, x_max, y_max));
  }
}

bool BBox::within(const ImageDims& dims) const noexcept {
  return x_min_ >= 0.0 && y_min_ >= 0.0 && x_max_ <= dims.width && y_max_ <= dims.height;
}

Polygon::Polygon(std::vector<PixelPoint> ring) : ring_(std::move(ring)) {
  if (ring_.size() >= 2 && ring_.front() == ring_.back()) ring_.pop_back();
  for (const auto& p : ring_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw GeometryError("polygon vertex has a non-finite coordinate");
    }
  }
  std::vector<PixelPoint> distinct = ring_;
  std::sort(distinct.begin(), distinct.end(), [](const auto& a, const auto& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    throw GeometryError(
        fmt::format("polygon needs at least 3 distinct vertices, got {}", distinct.size()));
  }
}

namespace {

class WktLexer {
 public:
  explicit WktLexer(std::string_view text) : text_(text) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void expect(char c) {
    if (peek() != c) {
      throw ParseError(fmt::format("WKT: expected '{}' at offset {}, found '{}'", c, pos_,
                                   current_token()));
    }
    ++pos_;
  }

  void expect_keyword(std::string_view kw) {
    skip_ws();
    std::string_view rest = text_.substr(pos_);
    bool ok = rest.size() >= kw.size();
    for (std::size_t i = 0; ok && i < kw.size(); ++i) {
      ok = std::toupper(static_cast<unsigned char>(rest[i])) == kw[i];
    }
    if (!ok) {
      throw ParseError(
          fmt::format("WKT: expected {} at offset {}, found '{}'", kw, pos_, current_token()));
    }
    pos_ += kw.size();
  }

  double number() {
    skip_ws();
    std::string_view tok = current_token();
    double value = 0.0;
    const char* first = text_.data() + pos_;
    const char* last = first + tok.size();
    // from_chars rejects a leading '+', which WKT writers occasionally emit.
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || tok.empty()) {
      throw ParseError(fmt::format("WKT: non-numeric coordinate '{}' at offset {}", tok, pos_));
    }
    pos_ += tok.size();
    return value;
  }

  std::string_view current_token() {
    skip_ws();
    std::size_t end = pos_;
    while (end < text_.size() && !std::isspace(static_cast<unsigned char>(text_[end])) &&
           text_[end] != ',' && text_[end] != '(' && text_[end] != ')') {
      ++end;
    }
    if (end == pos_ && end < text_.size()) ++end;
    return text_.substr(pos_, end - pos_);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::vector<PixelPoint> parse_ring(WktLexer& lex) {
  std::vector<PixelPoint> ring;
  lex.expect('(');
  while (true) {
    double x = lex.number();
    double y = lex.number();
    ring.push_back({x, y});
    if (lex.peek() == ',') {
      lex.expect(',');
      continue;
    }
    lex.expect(')');
    return ring;
  }
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

Polygon parse_wkt_polygon(std::string_view text) {
  WktLexer lex(text);
  lex.expect_keyword("POLYGON");
  lex.expect('(');
  std::vector<PixelPoint> outer = parse_ring(lex);
  while (lex.peek() == ',') {
    lex.expect(',');
    parse_ring(lex);  // holes are validated, then dropped
  }
  lex.expect(')');
  if (!lex.at_end()) {
    throw ParseError(fmt::format("WKT: trailing input '{}'", lex.current_token()));
  }
  try {
    return Polygon(std::move(outer));
  } catch (const GeometryError& e) {
    throw ParseError(fmt::format("WKT: {}", e.what()));
  }
}

std::string to_wkt(const Polygon& polygon) {
  std::string out = "POLYGON ((";
  const auto& ring = polygon.ring();
  for (std::size_t i = 0; i <= ring.size(); ++i) {
    const auto& p = ring[i % ring.size()];
    if (i > 0) out += ", ";
    append_number(out, p.x);
    out += ' ';
    append_number(out, p.y);
  }
  out += "))";
  return out;
}

BBox polygon_to_bbox(const Polygon& polygon) {
  const auto& ring = polygon.ring();
  auto [xmin, xmax] = std::minmax_element(ring.begin(), ring.end(),
                                          [](const auto& a, const auto& b) { return a.x < b.x; });
  auto [ymin, ymax] = std::minmax_element(ring.begin(), ring.end(),
                                          [](const auto& a, const auto& b) { return a.y < b.y; });
  return BBox(xmin->x, ymin->y, xmax->x, ymax->y);
}

BBox pad_bbox(const BBox& box, double pad_fraction, const ImageDims& dims) {
  if (!(pad_fraction >= 0.0) || !std::isfinite(pad_fraction)) {
    throw GeometryError(fmt::format("pad fraction must be >= 0, got {}", pad_fraction));
  }
  const double cx = 0.5 * (box.x_min() + box.x_max());
  const double cy = 0.5 * (box.y_min() + box.y_max());
  const double half_w = 0.5 * box.width() * (1.0 + pad_fraction);
  const double half_h = 0.5 * box.height() * (1.0 + pad_fraction);
  return BBox(std::max(0.0, cx - half_w), std::max(0.0, cy - half_h),
              std::min(static_cast<double>(dims.width), cx + half_w),
              std::min(static_cast<double>(dims.height), cy + half_h));
}

BBox scale_bbox(const BBox& box, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw GeometryError(fmt::format("scale factor must be > 0, got {}", factor));
  }
  return BBox(box.x_min() * factor, box.y_min() * factor, box.x_max() * factor,
              box.y_max() * factor);
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<Match> match_detections(std::span<const ScoredBox> dets,
                                    std::span<const BBox> truths, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw GeometryError(fmt::format("IoU threshold must be in (0, 1], got {}", iou_threshold));
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });

  std::vector<bool> taken(truths.size(), false);
  std::vector<Match> matches;
  for (std::size_t d : order) {
    double best = -1.0;
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (taken[t]) continue;
      const double v = iou(dets[d].box, truths[t]);
      if (v >= iou_threshold && v > best) {
        best = v;
        best_t = t;
      }
    }
    if (best >= 0.0) {
      taken[best_t] = true;
      matches.push_back({d, best_t});
    }
  }
  return matches;
}

}  // namespace damagepipe::geometry
