#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace groundcheck {

// Dense row-major tensor of doubles. All internal math runs in 64-bit;
// GTF files may carry a 32-bit payload (see GtfDtype).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor scalar(double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t dim(std::size_t i) const { return shape_[i]; }

  // Rank-2 indexing (r, c) and rank-3 indexing (a, b, c).
  double& at(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
  }
  const double& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  double& at(std::size_t a, std::size_t b, std::size_t c) {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }
  const double& at(std::size_t a, std::size_t b, std::size_t c) const {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }
  double& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const double& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double v);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// GTF binary tensor format:
//   4-byte magic "GTF1"
//   1-byte dtype code (1 = f32, 2 = f64)
//   1-byte rank
//   rank x 8-byte little-endian dims
//   row-major little-endian payload
enum class GtfDtype : std::uint8_t { f32 = 1, f64 = 2 };

void write_gtf(const std::string& path, const Tensor& t,
               GtfDtype dtype = GtfDtype::f64);
Tensor read_gtf(const std::string& path);

// FNV-1a over the f64 payload bytes in row-major order.
std::uint64_t tensor_checksum(const Tensor& t, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace groundcheck
