#include "groundcheck/geometry.hpp"

#include <cmath>

#include "doctest.h"
#include "groundcheck/rng.hpp"

using namespace groundcheck;

namespace {

// Independent oracle: per-pixel membership against the raw box lists.
bool oracle_member(const Region& r, int x, int y) {
  for (const auto& b : r.boxes)
    if (b.contains(x, y)) return true;
  return false;
}

double oracle_iou(const Region& a, const Region& b) {
  std::size_t inter = 0, uni = 0;
  for (int y = 0; y < a.dims.height; ++y) {
    for (int x = 0; x < a.dims.width; ++x) {
      const bool pa = oracle_member(a, x, y);
      const bool pb = oracle_member(b, x, y);
      inter += pa && pb;
      uni += pa || pb;
    }
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Region random_region(rng::Engine& eng, ImageDims dims, int max_boxes = 3) {
  Region r;
  r.dims = dims;
  const int n = 1 + static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(max_boxes)));
  for (int i = 0; i < n; ++i) {
    const int x0 = static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(dims.width)));
    const int y0 = static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(dims.height)));
    const int x1 = x0 + 1 + static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(dims.width - x0)));
    const int y1 = y0 + 1 + static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(dims.height - y0)));
    r.boxes.push_back(BoundingBox{x0, y0, x1, y1});
  }
  return r;
}

SegMap random_normalized_map(rng::Engine& eng, ImageDims dims) {
  SegMap m(dims);
  double total = 0.0;
  for (auto& v : m.values) {
    v = rng::uniform01(eng) + 1e-6;
    total += v;
  }
  for (auto& v : m.values) v /= total;
  return m;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("rasterize covers exactly the box pixels") {
  Region r;
  r.dims = {4, 4};
  r.boxes.push_back(BoundingBox{0, 0, 2, 2});
  const BinaryMask m = rasterize(r);
  CHECK(m.count() == 4);
  CHECK(m.test(0, 0));
  CHECK(m.test(1, 0));
  CHECK(m.test(0, 1));
  CHECK(m.test(1, 1));
  CHECK_FALSE(m.test(2, 2));
}

TEST_CASE("overlapping boxes count once") {
  Region r;
  r.dims = {4, 4};
  r.boxes.push_back(BoundingBox{0, 0, 2, 2});
  r.boxes.push_back(BoundingBox{1, 1, 3, 3});
  CHECK(rasterize(r).count() == 7);
}

TEST_CASE("full-image box sets every pixel") {
  Region r;
  r.dims = {5, 7};
  r.boxes.push_back(BoundingBox{0, 0, 7, 5});
  CHECK(rasterize(r).count() == 35);
}

TEST_CASE("box outside dims raises invalid geometry") {
  Region r;
  r.dims = {4, 4};
  r.boxes.push_back(BoundingBox{0, 0, 5, 2});
  CHECK_THROWS_AS(rasterize(r), GeometryError);
}

TEST_CASE("iou identities") {
  Region a;
  a.dims = {4, 4};
  a.boxes.push_back(BoundingBox{0, 0, 2, 2});
  const auto ma = rasterize(a);
  CHECK(iou(ma, ma) == 1.0);

  Region b;
  b.dims = {4, 4};
  b.boxes.push_back(BoundingBox{2, 2, 4, 4});
  CHECK(iou(ma, rasterize(b)) == 0.0);

  Region c;
  c.dims = {4, 4};
  c.boxes.push_back(BoundingBox{1, 1, 3, 3});
  CHECK(iou(ma, rasterize(c)) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou dim mismatch raises") {
  BinaryMask a(ImageDims{2, 2}), b(ImageDims{2, 3});
  CHECK_THROWS_AS(iou(a, b), GeometryError);
}

TEST_CASE("iou matches the brute-force pixel oracle on random pairs") {
  auto eng = rng::make_engine(2024);
  for (int trial = 0; trial < 250; ++trial) {
    const int h = 1 + static_cast<int>(rng::bounded(eng, 64));
    const int w = 1 + static_cast<int>(rng::bounded(eng, 64));
    const ImageDims dims{h, w};
    const Region a = random_region(eng, dims);
    const Region b = random_region(eng, dims);
    const double got = iou(rasterize(a), rasterize(b));
    const double want = oracle_iou(a, b);
    CHECK(got == want);  // both are exact pixel counts
  }
}

TEST_CASE("iou is symmetric") {
  auto eng = rng::make_engine(9);
  for (int trial = 0; trial < 50; ++trial) {
    const ImageDims dims{8, 8};
    const auto a = rasterize(random_region(eng, dims));
    const auto b = rasterize(random_region(eng, dims));
    CHECK(iou(a, b) == iou(b, a));
  }
}

TEST_CASE("gold map from region is uniform over the union") {
  Region r;
  r.dims = {4, 4};
  r.boxes.push_back(BoundingBox{1, 1, 3, 3});
  const SegMap m = gold_map_from_region(r);
  CHECK(m.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.at(1, 1) == doctest::Approx(0.25));
  CHECK(m.at(0, 0) == 0.0);

  Region seven;
  seven.dims = {4, 4};
  seven.boxes.push_back(BoundingBox{0, 0, 2, 2});
  seven.boxes.push_back(BoundingBox{1, 1, 3, 3});
  const SegMap m7 = gold_map_from_region(seven);
  CHECK(m7.at(1, 1) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("full-image box on 2x2 gives quarters") {
  Region r;
  r.dims = {2, 2};
  r.boxes.push_back(BoundingBox{0, 0, 2, 2});
  const SegMap m = gold_map_from_region(r);
  for (double v : m.values) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("gaussian gold map center value on 3x3 with sigma 1") {
  const SegMap m = gold_map_gaussian(Point{1, 1}, 1.0, ImageDims{3, 3});
  const double expected =
      1.0 / (1.0 + 4.0 * std::exp(-0.5) + 4.0 * std::exp(-1.0));
  CHECK(m.at(1, 1) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.2042).epsilon(1e-3));
  CHECK(m.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gaussian gold maps sum to 1 for random centers") {
  auto eng = rng::make_engine(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 2 + static_cast<int>(rng::bounded(eng, 30));
    const int w = 2 + static_cast<int>(rng::bounded(eng, 30));
    const Point c{rng::uniform(eng, 0, w - 1), rng::uniform(eng, 0, h - 1)};
    const double sigma = rng::uniform(eng, 0.5, 50.0);
    const SegMap m = gold_map_gaussian(c, sigma, ImageDims{h, w});
    CHECK(std::abs(m.sum() - 1.0) <= 1e-9);
    for (double v : m.values) CHECK(v >= 0.0);
  }
}

TEST_CASE("tiny sigma concentrates all mass at the center pixel") {
  const SegMap m = gold_map_gaussian(Point{2, 3}, 1e-3, ImageDims{6, 6});
  CHECK(m.at(2, 3) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gaussian with non-positive sigma raises") {
  CHECK_THROWS_AS(gold_map_gaussian(Point{1, 1}, 0.0, ImageDims{3, 3}),
                  GeometryError);
}

TEST_CASE("threshold normalizes by the maximum and compares inclusively") {
  SegMap m(ImageDims{1, 3});
  m.values = {0.5, 0.35, 0.2};
  const BinaryMask mask = normalize_threshold(m, 0.6);
  CHECK(mask.test(0, 0));
  CHECK(mask.test(1, 0));  // 0.35 / 0.5 = 0.7 >= 0.6
  CHECK_FALSE(mask.test(2, 0));
}

TEST_CASE("threshold 1.0 keeps exactly the maximal pixels") {
  SegMap m(ImageDims{1, 4});
  m.values = {0.1, 0.4, 0.4, 0.2};
  const BinaryMask mask = normalize_threshold(m, 1.0);
  CHECK(mask.count() == 2);
  CHECK(mask.test(1, 0));
  CHECK(mask.test(2, 0));
}

TEST_CASE("uniform map passes any threshold everywhere") {
  SegMap m(ImageDims{2, 2});
  m.values = {0.25, 0.25, 0.25, 0.25};
  CHECK(normalize_threshold(m, 0.999).count() == 4);
}

TEST_CASE("all-zero map cannot be thresholded") {
  SegMap m(ImageDims{2, 2});
  CHECK_THROWS_AS(normalize_threshold(m, 0.5), GeometryError);
}

TEST_CASE("threshold masks shrink monotonically in t") {
  auto eng = rng::make_engine(13);
  for (int trial = 0; trial < 50; ++trial) {
    const SegMap m = random_normalized_map(eng, ImageDims{6, 6});
    const double t1 = rng::uniform(eng, 0.05, 0.5);
    const double t2 = rng::uniform(eng, t1, 1.0);
    const BinaryMask m1 = normalize_threshold(m, t1);
    const BinaryMask m2 = normalize_threshold(m, t2);
    for (std::size_t i = 0; i < m1.bits.size(); ++i)
      if (m2.bits[i]) CHECK(m1.bits[i]);  // higher t is a subset
  }
}

TEST_CASE("argmax point and its tie rules") {
  SegMap m(ImageDims{8, 10});
  m.at(7, 3) = 2.0;
  const Point p = argmax_point(m);
  CHECK(p.x == 7.0);
  CHECK(p.y == 3.0);

  SegMap ties(ImageDims{2, 5});
  ties.values[5] = 1.0;
  ties.values[9] = 1.0;
  const Point q = argmax_point(ties);  // row-major index 5 wins
  CHECK(q.x == 0.0);
  CHECK(q.y == 1.0);

  SegMap uniform(ImageDims{3, 3});
  uniform.fill_zero_check:;
  for (auto& v : uniform.values) v = 1.0 / 9.0;
  const Point u = argmax_point(uniform);
  CHECK(u.x == 0.0);
  CHECK(u.y == 0.0);
}

TEST_CASE("argmax is invariant under positive scaling") {
  auto eng = rng::make_engine(17);
  for (int trial = 0; trial < 50; ++trial) {
    SegMap m = random_normalized_map(eng, ImageDims{7, 5});
    const Point p = argmax_point(m);
    SegMap scaled = m;
    const double c = rng::uniform(eng, 0.1, 100.0);
    for (auto& v : scaled.values) v *= c;
    const Point q = argmax_point(scaled);
    CHECK(p == q);
  }
}

TEST_CASE("kl divergence closed forms") {
  SegMap gold(ImageDims{1, 2}), pred(ImageDims{1, 2});
  gold.values = {1.0, 0.0};
  pred.values = {0.5, 0.5};
  CHECK(kl_divergence(gold, pred) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  gold.values = {0.5, 0.5};
  pred.values = {0.25, 0.75};
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(kl_divergence(gold, pred) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.1438).epsilon(1e-3));
}

TEST_CASE("kl is zero iff equal, non-negative on random pairs") {
  auto eng = rng::make_engine(23);
  for (int trial = 0; trial < 100; ++trial) {
    const SegMap a = random_normalized_map(eng, ImageDims{5, 5});
    const SegMap b = random_normalized_map(eng, ImageDims{5, 5});
    CHECK(kl_divergence(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    const double kl = kl_divergence(a, b);
    CHECK(kl >= 0.0);
  }
}

TEST_CASE("kl rejects mismatched or unnormalized maps") {
  SegMap a(ImageDims{1, 2}), b(ImageDims{2, 1}), c(ImageDims{1, 2});
  a.values = {0.5, 0.5};
  b.values = {0.5, 0.5};
  c.values = {0.9, 0.5};
  CHECK_THROWS_AS(kl_divergence(a, b), GeometryError);
  CHECK_THROWS_AS(kl_divergence(a, c), GeometryError);
  CHECK_THROWS_AS(kl_divergence(c, a), GeometryError);
}

TEST_CASE("region json round trip") {
  Region r;
  r.dims = {10, 20};
  r.boxes.push_back(BoundingBox{1, 2, 5, 6});
  r.boxes.push_back(BoundingBox{0, 0, 20, 10});
  const Region back = region_from_json(region_to_json(r));
  CHECK(back == r);
}

TEST_CASE("region json validates geometry") {
  CHECK_THROWS_AS(
      region_from_json(R"({"boxes":[{"x_min":3,"y_min":0,"x_max":2,"y_max":1}],"h":4,"w":4})"),
      GeometryError);
}

}  // TEST_SUITE
