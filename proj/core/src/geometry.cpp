#include "groundcheck/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace groundcheck {

void BoundingBox::validate(ImageDims dims) const {
  if (x_min >= x_max || y_min >= y_max)
    throw GeometryError("degenerate box: [" + std::to_string(x_min) + "," +
                        std::to_string(x_max) + ")x[" + std::to_string(y_min) +
                        "," + std::to_string(y_max) + ")");
  if (x_min < 0 || y_min < 0 || x_max > dims.width || y_max > dims.height)
    throw GeometryError("box outside image " + std::to_string(dims.width) +
                        "x" + std::to_string(dims.height));
}

void Region::validate() const {
  if (boxes.empty()) throw GeometryError("region has no boxes");
  if (dims.height <= 0 || dims.width <= 0)
    throw GeometryError("region has empty image dims");
  for (const auto& b : boxes) b.validate(dims);
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

double SegMap::sum() const {
  return std::accumulate(values.begin(), values.end(), 0.0);
}

double SegMap::max_value() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

bool SegMap::is_normalized(double tol) const {
  for (double v : values)
    if (v < 0.0) return false;
  return std::abs(sum() - 1.0) <= tol;
}

BinaryMask rasterize(const Region& region) {
  region.validate();
  BinaryMask mask(region.dims);
  for (const auto& b : region.boxes)
    for (int y = b.y_min; y < b.y_max; ++y)
      for (int x = b.x_min; x < b.x_max; ++x) mask.set(x, y);
  return mask;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.dims != b.dims) throw GeometryError("iou: mask dims differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool pa = a.bits[i] != 0, pb = b.bits[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SegMap gold_map_from_region(const Region& region) {
  const BinaryMask mask = rasterize(region);
  const std::size_t n = mask.count();
  SegMap map(region.dims);
  const double v = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) map.values[i] = v;
  return map;
}

SegMap gold_map_gaussian(Point center, double sigma, ImageDims dims) {
  if (sigma <= 0.0) throw GeometryError("gaussian sigma must be positive");
  if (dims.height <= 0 || dims.width <= 0)
    throw GeometryError("gaussian map needs non-empty dims");
  if (center.x < 0 || center.x > dims.width - 1 || center.y < 0 ||
      center.y > dims.height - 1)
    throw GeometryError("gaussian center outside image");
  SegMap map(dims);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double total = 0.0;
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      const double dx = x - center.x, dy = y - center.y;
      const double v = std::exp(-(dx * dx + dy * dy) * inv);
      map.at(x, y) = v;
      total += v;
    }
  }
  for (double& v : map.values) v /= total;
  return map;
}

BinaryMask normalize_threshold(const SegMap& map, double t) {
  if (t <= 0.0 || t > 1.0)
    throw GeometryError("threshold must be in (0, 1]");
  const double m = map.max_value();
  if (m <= 0.0) throw GeometryError("cannot threshold an all-zero map");
  BinaryMask mask(map.dims);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    mask.bits[i] = map.values[i] / m >= t ? 1 : 0;
  return mask;
}

Point argmax_point(const SegMap& map) {
  if (map.values.empty()) throw GeometryError("argmax of an empty map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.values.size(); ++i)
    if (map.values[i] > map.values[best]) best = i;
  const int y = static_cast<int>(best / map.dims.width);
  const int x = static_cast<int>(best % map.dims.width);
  return Point{static_cast<double>(x), static_cast<double>(y)};
}

double kl_divergence(const SegMap& gold, const SegMap& pred) {
  if (gold.dims != pred.dims) throw GeometryError("kl: map dims differ");
  if (!gold.is_normalized()) throw GeometryError("kl: gold map not normalized");
  if (!pred.is_normalized()) throw GeometryError("kl: predicted map not normalized");
  double kl = 0.0;
  for (std::size_t i = 0; i < gold.values.size(); ++i) {
    const double s = gold.values[i];
    if (s <= 0.0) continue;
    const double p = std::max(pred.values[i], kKlEpsilon);
    kl += s * std::log(s / p);
  }
  return std::max(kl, 0.0);
}

std::string region_to_json(const Region& region) {
  nlohmann::json j;
  j["boxes"] = nlohmann::json::array();
  for (const auto& b : region.boxes)
    j["boxes"].push_back({{"x_min", b.x_min},
                          {"y_min", b.y_min},
                          {"x_max", b.x_max},
                          {"y_max", b.y_max}});
  j["h"] = region.dims.height;
  j["w"] = region.dims.width;
  return j.dump();
}

Region region_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("region json: ") + e.what());
  }
  Region r;
  try {
    r.dims.height = j.at("h").get<int>();
    r.dims.width = j.at("w").get<int>();
    for (const auto& jb : j.at("boxes")) {
      BoundingBox b;
      b.x_min = jb.at("x_min").get<int>();
      b.y_min = jb.at("y_min").get<int>();
      b.x_max = jb.at("x_max").get<int>();
      b.y_max = jb.at("y_max").get<int>();
      r.boxes.push_back(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("region json fields: ") + e.what());
  }
  r.validate();
  return r;
}

}  // namespace groundcheck
