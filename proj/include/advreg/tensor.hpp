#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace advreg {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds one
// scalar. Tensors are plain values: copying copies the data.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Single element; throws ShapeError unless size() == 1.
  double item() const;

  // Same data viewed with a different shape of equal size.
  Tensor reshaped(Shape shape) const;

  // Rows [begin, end) along axis 0.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Stack along axis 0; all parts must agree on trailing dimensions.
Tensor concat_rows(const Tensor& a, const Tensor& b);

// Elementwise helpers on plain values (no differentiation).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace advreg
