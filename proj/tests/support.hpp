#pragma once

// Hand-rolled generators and fixtures shared by the unit and acceptance tests.

#include <cmath>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "damagepipe/geometry.hpp"

namespace damagepipe::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  std::vector<double> unit_vector(int dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : v) {
        x = n(rng_);
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  }

  // A box with the given bounds on its corners and at least min_side per side.
  geometry::BBox box(double lo, double hi, double min_side = 1.0) {
    const double x0 = real(lo, hi - min_side), y0 = real(lo, hi - min_side);
    return {x0, y0, real(x0 + min_side, hi), real(y0 + min_side, hi)};
  }

  std::string bytes(int n) {
    std::string s(n, '\0');
    for (auto& c : s) c = static_cast<char>(integer(0, 255));
    return s;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("damagepipe-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace damagepipe::testing
