#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ydlc {

// Dense NCHW extents.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool scalar() const { return n == 1 && c == 1 && h == 1 && w == 1; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

// 32-bit float tensor, row-major in (batch, channel, height, width) order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor({1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Pointer to the start of one (n, c) plane.
  float* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const float* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(float v);
  // this += other (same shape).
  void accumulate(const Tensor& other);
  bool all_finite() const;

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::vector<float> data_;
};

}  // namespace ydlc
