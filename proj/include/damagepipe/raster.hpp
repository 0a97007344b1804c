#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "damagepipe/geometry.hpp"

namespace damagepipe {

/// 8-bit RGB image, row-major, tightly packed.
class Raster {
 public:
  Raster() = default;
  Raster(geometry::ImageDims dims, std::uint8_t fill = 0);

  const geometry::ImageDims& dims() const noexcept { return dims_; }
  int width() const noexcept { return dims_.width; }
  int height() const noexcept { return dims_.height; }
  bool empty() const noexcept { return pixels_.empty(); }

  std::span<std::uint8_t, 3> at(int x, int y) {
    return std::span<std::uint8_t, 3>(pixels_.data() + offset(x, y), 3);
  }
  std::span<const std::uint8_t, 3> at(int x, int y) const {
    return std::span<const std::uint8_t, 3>(pixels_.data() + offset(x, y), 3);
  }

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }

  void fill_rect(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b);

  /// Copy of the pixel rectangle [x0, x1) x [y0, y1).
  Raster crop(int x0, int y0, int x1, int y1) const;

  /// Nearest-neighbour enlargement: output(fx, fy) = input(x, y) for every
  /// input pixel (x, y).
  Raster upscale_nearest(int factor) const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * dims_.width + x) * 3;
  }

  geometry::ImageDims dims_;
  std::vector<std::uint8_t> pixels_;
};

namespace png {

std::string encode(const Raster& image);
Raster decode(std::string_view bytes);
/// Reads only the IHDR chunk.
geometry::ImageDims read_dims(const std::filesystem::path& path);
Raster read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Raster& image);

}  // namespace png

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace damagepipe
