#include "damagepipe/raster.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <png.h>
#include <sodium.h>

#include "damagepipe/errors.hpp"

namespace damagepipe {

Raster::Raster(geometry::ImageDims dims, std::uint8_t fill)
    : dims_(dims), pixels_(static_cast<std::size_t>(dims.width) * dims.height * 3, fill) {}

void Raster::fill_rect(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
                       std::uint8_t b) {
  x0 = std::clamp(x0, 0, width());
  x1 = std::clamp(x1, 0, width());
  y0 = std::clamp(y0, 0, height());
  y1 = std::clamp(y1, 0, height());
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      auto px = at(x, y);
      px[0] = r;
      px[1] = g;
      px[2] = b;
    }
  }
}

Raster Raster::crop(int x0, int y0, int x1, int y1) const {
  if (x0 < 0 || y0 < 0 || x1 > width() || y1 > height() || x0 >= x1 || y0 >= y1) {
    throw GeometryError(fmt::format("crop rectangle [{}, {}) x [{}, {}) outside {}x{} image",
                                    x0, x1, y0, y1, width(), height()));
  }
  Raster out(geometry::ImageDims(x1 - x0, y1 - y0));
  const std::size_t row_bytes = static_cast<std::size_t>(x1 - x0) * 3;
  for (int y = y0; y < y1; ++y) {
    std::copy_n(pixels_.begin() + static_cast<std::ptrdiff_t>(offset(x0, y)), row_bytes,
                out.pixels_.begin() + static_cast<std::ptrdiff_t>(out.offset(0, y - y0)));
  }
  return out;
}

Raster Raster::upscale_nearest(int factor) const {
  if (factor < 1) throw GeometryError(fmt::format("upscale factor {} < 1", factor));
  Raster out(geometry::ImageDims(width() * factor, height() * factor));
  const std::size_t out_row = static_cast<std::size_t>(out.width()) * 3;
  for (int y = 0; y < height(); ++y) {
    auto* dst = out.pixels_.data() + out.offset(0, y * factor);
    for (int x = 0; x < width(); ++x) {
      const auto src = at(x, y);
      for (int k = 0; k < factor; ++k) {
        std::copy(src.begin(), src.end(), dst);
        dst += 3;
      }
    }
    const auto* first_row = out.pixels_.data() + out.offset(0, y * factor);
    for (int k = 1; k < factor; ++k) {
      std::copy_n(first_row, out_row, out.pixels_.data() + out.offset(0, y * factor + k));
    }
  }
  return out;
}

namespace png {

std::string encode(const Raster& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.bytes().data(), 0, nullptr)) {
    throw Error(fmt::format("PNG encode failed: {}", img.message));
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.bytes().data(), 0,
                                 nullptr)) {
    throw Error(fmt::format("PNG encode failed: {}", img.message));
  }
  out.resize(size);
  return out;
}

Raster decode(std::string_view bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw LoadError(fmt::format("PNG decode failed: {}", img.message));
  }
  img.format = PNG_FORMAT_RGB;
  Raster out(geometry::ImageDims(static_cast<int>(img.width), static_cast<int>(img.height)));
  if (!png_image_finish_read(&img, nullptr, const_cast<std::uint8_t*>(out.bytes().data()), 0,
                             nullptr)) {
    png_image_free(&img);
    throw LoadError(fmt::format("PNG decode failed: {}", img.message));
  }
  return out;
}

geometry::ImageDims read_dims(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw LoadError(fmt::format("{}: {}", path.string(), img.message));
  }
  geometry::ImageDims dims(static_cast<int>(img.width), static_cast<int>(img.height));
  png_image_free(&img);
  return dims;
}

Raster read_file(const std::filesystem::path& path) {
  try {
    return decode(read_binary_file(path));
  } catch (const LoadError& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_file(const std::filesystem::path& path, const Raster& image) {
  write_binary_file(path, encode(image));
}

}  // namespace png

namespace {

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error("libsodium initialisation failed");
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  ensure_sodium();
  const std::size_t len = sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, reinterpret_cast<const unsigned char*>(bytes.data()),
                    bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // trailing NUL
  return out;
}

std::string base64_decode(std::string_view text) {
  ensure_sodium();
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t out_len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(),
                        text.size(), "\n\r ", &out_len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw ParseError("invalid base64 payload");
  }
  out.resize(out_len);
  return out;
}

std::string read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_binary_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("short write to {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace damagepipe
