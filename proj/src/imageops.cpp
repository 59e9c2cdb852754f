#include "convscope/imageops.hpp"

#include <algorithm>
#include <cmath>

#include "convscope/errors.hpp"

namespace convscope {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sample_at(const Tensor& img, int64_t c, double sy, double sx, Resample mode,
                 double fill) {
  const Extent4& s = img.shape();
  if (mode == Resample::Nearest) {
    int64_t y = static_cast<int64_t>(std::llround(sy));
    int64_t x = static_cast<int64_t>(std::llround(sx));
    if (y < 0 || y >= s.h || x < 0 || x >= s.w) return fill;
    return img.at(0, c, y, x);
  }
  int64_t y0 = static_cast<int64_t>(std::floor(sy));
  int64_t x0 = static_cast<int64_t>(std::floor(sx));
  double fy = sy - static_cast<double>(y0);
  double fx = sx - static_cast<double>(x0);
  auto px = [&](int64_t y, int64_t x) {
    if (y < 0 || y >= s.h || x < 0 || x >= s.w) return fill;
    return img.at(0, c, y, x);
  };
  double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
  double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

// Inverse-maps every output pixel through (sy, sx) = f(y, x).
template <typename MapFn>
Tensor warp(const Tensor& img, int64_t out_h, int64_t out_w, Resample mode, double fill,
            MapFn&& map) {
  const Extent4& s = img.shape();
  Tensor out({1, s.c, out_h, out_w});
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = 0; y < out_h; ++y)
      for (int64_t x = 0; x < out_w; ++x) {
        auto [sy, sx] = map(static_cast<double>(y), static_cast<double>(x));
        out.at(0, c, y, x) = sample_at(img, c, sy, sx, mode, fill);
      }
  return out;
}

void check_image(const Tensor& img) {
  const Extent4& s = img.shape();
  if (s.n != 1) throw InputError("image tensors must have batch extent 1");
  if (s.h < 1 || s.w < 1) throw InputError("image must be at least 1x1");
}

}  // namespace

Tensor resize_image(const Tensor& img, int64_t out_h, int64_t out_w, Resample mode) {
  check_image(img);
  if (out_h < 1 || out_w < 1) throw InvalidArgumentError("resize target must be >= 1");
  const Extent4& s = img.shape();
  if (out_h == s.h && out_w == s.w) return img;
  // Align pixel centers: source = (dst + 0.5) * scale - 0.5.
  double scale_y = static_cast<double>(s.h) / static_cast<double>(out_h);
  double scale_x = static_cast<double>(s.w) / static_cast<double>(out_w);
  Tensor out({1, s.c, out_h, out_w});
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = 0; y < out_h; ++y)
      for (int64_t x = 0; x < out_w; ++x) {
        double sy = std::clamp((static_cast<double>(y) + 0.5) * scale_y - 0.5, 0.0,
                               static_cast<double>(s.h - 1));
        double sx = std::clamp((static_cast<double>(x) + 0.5) * scale_x - 0.5, 0.0,
                               static_cast<double>(s.w - 1));
        out.at(0, c, y, x) = sample_at(img, c, sy, sx, mode, 0.0);
      }
  return out;
}

Tensor resize_smaller_to(const Tensor& img, int64_t target, Resample mode) {
  check_image(img);
  if (target < 1) throw InvalidArgumentError("resize target must be >= 1");
  const Extent4& s = img.shape();
  int64_t out_h, out_w;
  if (s.h <= s.w) {
    out_h = target;
    out_w = std::max<int64_t>(target, (s.w * target + s.h / 2) / s.h);
  } else {
    out_w = target;
    out_h = std::max<int64_t>(target, (s.h * target + s.w / 2) / s.w);
  }
  return center_crop(resize_image(img, out_h, out_w, mode), target, target);
}

Tensor crop(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  check_image(img);
  const Extent4& s = img.shape();
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > s.h || x0 + w > s.w)
    throw InvalidArgumentError("crop rectangle out of bounds");
  Tensor out({1, s.c, h, w});
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) out.at(0, c, y, x) = img.at(0, c, y0 + y, x0 + x);
  return out;
}

Tensor center_crop(const Tensor& img, int64_t h, int64_t w) {
  const Extent4& s = img.shape();
  if (h > s.h || w > s.w) throw InvalidArgumentError("center crop larger than image");
  return crop(img, (s.h - h) / 2, (s.w - w) / 2, h, w);
}

Tensor hflip(const Tensor& img) {
  check_image(img);
  const Extent4& s = img.shape();
  Tensor out(s);
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = 0; y < s.h; ++y)
      for (int64_t x = 0; x < s.w; ++x) out.at(0, c, y, x) = img.at(0, c, y, s.w - 1 - x);
  return out;
}

Tensor paste_rect(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w,
                  double value) {
  check_image(img);
  const Extent4& s = img.shape();
  Tensor out = img;
  int64_t ya = std::max<int64_t>(0, y0);
  int64_t xa = std::max<int64_t>(0, x0);
  int64_t yb = std::min(s.h, y0 + h);
  int64_t xb = std::min(s.w, x0 + w);
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = ya; y < yb; ++y)
      for (int64_t x = xa; x < xb; ++x) out.at(0, c, y, x) = value;
  return out;
}

Tensor translate_image(const Tensor& img, int64_t dy, int64_t dx, double fill) {
  check_image(img);
  const Extent4& s = img.shape();
  Tensor out({1, s.c, s.h, s.w}, fill);
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = 0; y < s.h; ++y) {
      int64_t sy = y - dy;
      if (sy < 0 || sy >= s.h) continue;
      for (int64_t x = 0; x < s.w; ++x) {
        int64_t sx = x - dx;
        if (sx < 0 || sx >= s.w) continue;
        out.at(0, c, y, x) = img.at(0, c, sy, sx);
      }
    }
  return out;
}

Tensor scale_image(const Tensor& img, double ratio, double fill, Resample mode) {
  check_image(img);
  if (!(ratio > 0.0)) throw InvalidArgumentError("scale ratio must be positive");
  const Extent4& s = img.shape();
  double cy = static_cast<double>(s.h - 1) / 2.0;
  double cx = static_cast<double>(s.w - 1) / 2.0;
  return warp(img, s.h, s.w, mode, fill, [&](double y, double x) {
    return std::pair<double, double>((y - cy) / ratio + cy, (x - cx) / ratio + cx);
  });
}

Tensor rotate_image(const Tensor& img, double degrees, double fill, Resample mode) {
  check_image(img);
  const Extent4& s = img.shape();
  double rad = degrees * kPi / 180.0;
  double cs = std::cos(rad);
  double sn = std::sin(rad);
  double cy = static_cast<double>(s.h - 1) / 2.0;
  double cx = static_cast<double>(s.w - 1) / 2.0;
  return warp(img, s.h, s.w, mode, fill, [&](double y, double x) {
    double ry = y - cy;
    double rx = x - cx;
    return std::pair<double, double>(cs * ry - sn * rx + cy, sn * ry + cs * rx + cx);
  });
}

}  // namespace convscope
