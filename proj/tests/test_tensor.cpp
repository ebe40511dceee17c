#include "groundcheck/tensor.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "groundcheck/errors.hpp"
#include "groundcheck/rng.hpp"

using namespace groundcheck;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("gtf round trip is bit exact for f64") {
  auto eng = rng::make_engine(7);
  Tensor t({3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng::uniform(eng, -100.0, 100.0);
  const auto path = temp_file("gc_roundtrip.gtf");
  write_gtf(path.string(), t, GtfDtype::f64);
  const Tensor back = read_gtf(path.string());
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
  std::filesystem::remove(path);
}

TEST_CASE("gtf f32 payload survives a write-read-write cycle unchanged") {
  auto eng = rng::make_engine(11);
  Tensor t({64});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng::uniform(eng, -1.0, 1.0);
  const auto p1 = temp_file("gc_f32_a.gtf");
  const auto p2 = temp_file("gc_f32_b.gtf");
  write_gtf(p1.string(), t, GtfDtype::f32);
  const Tensor once = read_gtf(p1.string());
  write_gtf(p2.string(), once, GtfDtype::f32);
  const Tensor twice = read_gtf(p2.string());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(once[i] == twice[i]);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("rank-0 scalar supported") {
  const auto path = temp_file("gc_scalar.gtf");
  write_gtf(path.string(), Tensor::scalar(3.25));
  const Tensor back = read_gtf(path.string());
  CHECK(back.rank() == 0);
  CHECK(back.size() == 1);
  CHECK(back[0] == 3.25);
  std::filesystem::remove(path);
}

TEST_CASE("wrong magic raises a format error") {
  const auto path = temp_file("gc_badmagic.gtf");
  std::ofstream out(path, std::ios::binary);
  out << "NOPE" << '\x02' << '\x00';
  out.close();
  CHECK_THROWS_AS(read_gtf(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("truncated payload raises a format error") {
  const auto path = temp_file("gc_trunc.gtf");
  Tensor t({4, 4});
  write_gtf(path.string(), t);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  CHECK_THROWS_AS(read_gtf(path.string()), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("checksum changes when any element changes") {
  Tensor t({8});
  t.fill(1.5);
  const auto h1 = tensor_checksum(t);
  t[3] = 1.5000001;
  CHECK(tensor_checksum(t) != h1);
}

}  // TEST_SUITE
