#include "convscope/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "convscope/errors.hpp"

namespace convscope {

int64_t Extent4::count() const {
  if (n < 0 || c < 0 || h < 0 || w < 0)
    throw ShapeError("extent components must be non-negative");
  const int64_t dims[4] = {n, c, h, w};
  int64_t prod = 1;
  for (int64_t d : dims) {
    if (d == 0) return 0;
    if (prod > std::numeric_limits<int64_t>::max() / d)
      throw ShapeError("extent product overflows addressable size");
    prod *= d;
  }
  return prod;
}

Tensor::Tensor(Extent4 shape, double fill)
    : shape_(shape), data_(static_cast<size_t>(shape.count()), fill) {}

Tensor Tensor::from_values(Extent4 shape, std::vector<double> values) {
  if (shape.count() != static_cast<int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match extent product " + std::to_string(shape.count()));
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::reshaped(Extent4 shape) const {
  if (shape.count() != size())
    throw ShapeError("reshape changes element count");
  Tensor t;
  t.shape_ = shape;
  t.data_ = data_;
  return t;
}

Tensor flip_hw(const Tensor& t) {
  const Extent4& s = t.shape();
  Tensor out(s);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t i = 0; i < s.h; ++i)
        for (int64_t j = 0; j < s.w; ++j)
          out.at(n, c, i, j) = t.at(n, c, s.h - 1 - i, s.w - 1 - j);
  return out;
}

Tensor reduce_sum(const Tensor& t, Axes over) {
  const Extent4& s = t.shape();
  Extent4 os{over.n ? std::min<int64_t>(1, s.n) : s.n,
             over.c ? std::min<int64_t>(1, s.c) : s.c,
             over.h ? std::min<int64_t>(1, s.h) : s.h,
             over.w ? std::min<int64_t>(1, s.w) : s.w};
  Tensor out(os, 0.0);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t i = 0; i < s.h; ++i)
        for (int64_t j = 0; j < s.w; ++j)
          out.at(over.n ? 0 : n, over.c ? 0 : c, over.h ? 0 : i, over.w ? 0 : j) +=
              t.at(n, c, i, j);
  return out;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  const double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) acc += p[i];
  return acc;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double acc = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  const double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

}  // namespace convscope
