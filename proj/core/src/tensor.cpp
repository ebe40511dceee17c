#include "groundcheck/tensor.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "groundcheck/errors.hpp"
#include "groundcheck/rng.hpp"

namespace groundcheck {

namespace {

constexpr char kMagic[4] = {'G', 'T', 'F', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t f32_bits(float f) {
  std::uint32_t b;
  std::memcpy(&b, &f, 4);
  return b;
}

std::uint64_t f64_bits(double d) {
  std::uint64_t b;
  std::memcpy(&b, &d, 8);
  return b;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_.assign(1, v);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void write_gtf(const std::string& path, const Tensor& t, GtfDtype dtype) {
  std::string buf;
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) put_u64_le(buf, d);
  if (dtype == GtfDtype::f32) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::uint32_t b = f32_bits(static_cast<float>(t[i]));
      for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((b >> (8 * k)) & 0xff));
    }
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::uint64_t b = f64_bits(t[i]);
      for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((b >> (8 * k)) & 0xff));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("write failed: " + path);
}

Tensor read_gtf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 6 || std::memcmp(p, kMagic, 4) != 0)
    throw FormatError("bad GTF magic: " + path);
  const std::uint8_t dtype = p[4];
  const std::uint8_t rank = p[5];
  if (dtype != 1 && dtype != 2) throw FormatError("bad GTF dtype code: " + path);
  std::size_t off = 6;
  if (buf.size() < off + 8ull * rank) throw FormatError("truncated GTF header: " + path);
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (int i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(get_u64_le(p + off));
    n *= shape[i];
    off += 8;
  }
  const std::size_t elem = dtype == 1 ? 4 : 8;
  if (buf.size() != off + n * elem) throw FormatError("truncated GTF payload: " + path);
  Tensor t(shape);
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == 1) {
      std::uint32_t b = 0;
      for (int k = 0; k < 4; ++k) b |= static_cast<std::uint32_t>(p[off + k]) << (8 * k);
      float f;
      std::memcpy(&f, &b, 4);
      t[i] = static_cast<double>(f);
      off += 4;
    } else {
      std::uint64_t b = 0;
      for (int k = 0; k < 8; ++k) b |= static_cast<std::uint64_t>(p[off + k]) << (8 * k);
      double d;
      std::memcpy(&d, &b, 8);
      t[i] = d;
      off += 8;
    }
  }
  return t;
}

std::uint64_t tensor_checksum(const Tensor& t, std::uint64_t h) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::uint64_t b = f64_bits(t[i]);
    unsigned char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>((b >> (8 * k)) & 0xff);
    h = rng::fnv1a(bytes, 8, h);
  }
  return h;
}

}  // namespace groundcheck
