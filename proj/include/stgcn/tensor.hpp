#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stgcn {

/// Extents of a tensor, outermost first. Rank 0 denotes a scalar.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of 32-bit reals with at most three axes.
class Tensor {
 public:
  static constexpr std::size_t kMaxRank = 3;

  Tensor();
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor scalar(float value);
  static Tensor vector(std::vector<float> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  float at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  float& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;

  bool all_finite() const;
  void fill(float value);

  /// Bitwise equality of shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Throws NumericalError naming `where` when `t` holds NaN or Inf.
void require_finite(const Tensor& t, const char* where);

/// Largest absolute elementwise difference; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace stgcn
