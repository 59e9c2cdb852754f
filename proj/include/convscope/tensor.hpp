#pragma once

#include <cstdint>
#include <vector>

namespace convscope {

/// Dense 4-D extents in (n, c, h, w) order.
struct Extent4 {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  bool operator==(const Extent4&) const = default;

  /// Element count n*c*h*w. Throws ShapeError if the product overflows.
  int64_t count() const;
};

/// Axis selector for reductions.
struct Axes {
  bool n = false;
  bool c = false;
  bool h = false;
  bool w = false;

  static Axes none() { return {}; }
  static Axes all() { return {true, true, true, true}; }
  static Axes hw() { return {false, false, true, true}; }
  static Axes chw() { return {false, true, true, true}; }
};

// Dense 4-D array of doubles, row-major with w fastest. Value semantics:
// every operation returns a fresh tensor, so a tensor handed to another
// thread never changes underneath it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Extent4 shape, double fill = 0.0);
  static Tensor from_values(Extent4 shape, std::vector<double> values);

  const Extent4& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[offset(n, c, h, w)];
  }
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[offset(n, c, h, w)];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  int64_t offset(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Same buffer reinterpreted with a new shape of equal element count.
  Tensor reshaped(Extent4 shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  Extent4 shape_{};
  std::vector<double> data_;
};

/// out[n,c,i,j] = t[n,c,H-1-i,W-1-j]; applying it twice is the identity.
Tensor flip_hw(const Tensor& t);

/// Sums over the selected axes; reduced extents become 1.
Tensor reduce_sum(const Tensor& t, Axes over);

double sum(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace convscope
