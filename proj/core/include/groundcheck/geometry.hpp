#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groundcheck/errors.hpp"

namespace groundcheck {

struct ImageDims {
  int height = 0;
  int width = 0;
  bool operator==(const ImageDims&) const = default;
  long long pixels() const { return 1LL * height * width; }
};

// Half-open pixel box [x_min, x_max) x [y_min, y_max). Origin top-left,
// x rightward, y downward. Pixel (x, y) has its center at real
// coordinates (x, y).
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  bool operator==(const BoundingBox&) const = default;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long long area() const { return 1LL * width() * height(); }
  bool contains(int x, int y) const {
    return x >= x_min && x < x_max && y >= y_min && y < y_max;
  }
  void validate(ImageDims dims) const;
};

// Union of boxes on one image; overlap counts once when rasterized.
struct Region {
  std::vector<BoundingBox> boxes;
  ImageDims dims;

  bool operator==(const Region&) const = default;
  void validate() const;
};

struct BinaryMask {
  ImageDims dims;
  std::vector<std::uint8_t> bits;  // row-major height x width

  explicit BinaryMask(ImageDims d = {})
      : dims(d), bits(static_cast<std::size_t>(d.pixels()), 0) {}

  bool test(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * dims.width + x] != 0;
  }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * dims.width + x] = v ? 1 : 0;
  }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

// Non-negative per-pixel map; a normalized map sums to 1.
struct SegMap {
  ImageDims dims;
  std::vector<double> values;  // row-major height x width

  explicit SegMap(ImageDims d = {})
      : dims(d), values(static_cast<std::size_t>(d.pixels()), 0.0) {}

  double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * dims.width + x];
  }
  double& at(int x, int y) {
    return values[static_cast<std::size_t>(y) * dims.width + x];
  }
  double sum() const;
  double max_value() const;
  bool is_normalized(double tol = 1e-6) const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

inline constexpr double kKlEpsilon = 1e-12;       // prediction floor before log
inline constexpr double kDefaultGaussianSigma = 40.0;

BinaryMask rasterize(const Region& region);

// |a n b| / |a u b|; 0 when the union is empty.
double iou(const BinaryMask& a, const BinaryMask& b);

// Uniform probability over the rasterized union, zero elsewhere.
SegMap gold_map_from_region(const Region& region);

// exp(-((x-cx)^2+(y-cy)^2)/(2 sigma^2)) at pixel centers, renormalized
// over the finite grid.
SegMap gold_map_gaussian(Point center, double sigma, ImageDims dims);

// Pixel set iff value / max >= t (inclusive). Requires a positive max.
BinaryMask normalize_threshold(const SegMap& map, double t);

// Pixel-center coordinates of the maximum; ties broken by smallest
// row-major index.
Point argmax_point(const SegMap& map);

// sum_p gold_p * ln(gold_p / max(pred_p, epsilon)), with 0 ln 0 := 0.
// Both maps must be normalized within tolerance.
double kl_divergence(const SegMap& gold, const SegMap& pred);

// JSON schema {"boxes":[{"x_min":..,"y_min":..,"x_max":..,"y_max":..}],"h":H,"w":W}
std::string region_to_json(const Region& region);
Region region_from_json(const std::string& json_text);

}  // namespace groundcheck
