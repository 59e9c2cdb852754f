#pragma once

#include "convscope/tensor.hpp"

namespace convscope {

enum class Resample { Bilinear, Nearest };

/// Images are (1, c, h, w) tensors. Resampling maps output pixels back to
/// source coordinates; samples outside the frame read as `fill`.
Tensor resize_image(const Tensor& img, int64_t out_h, int64_t out_w,
                    Resample mode = Resample::Bilinear);

/// Resize so the smaller spatial dimension equals `target`, then center-crop
/// a target x target square.
Tensor resize_smaller_to(const Tensor& img, int64_t target,
                         Resample mode = Resample::Bilinear);

Tensor crop(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w);
Tensor center_crop(const Tensor& img, int64_t h, int64_t w);
Tensor hflip(const Tensor& img);

/// Pastes `value` over the rectangle [y0, y0+h) x [x0, x0+w) on all channels,
/// clipped at the image borders.
Tensor paste_rect(const Tensor& img, int64_t y0, int64_t x0, int64_t h, int64_t w,
                  double value);

Tensor translate_image(const Tensor& img, int64_t dy, int64_t dx, double fill);

/// Scales about the image center; frame size is preserved.
Tensor scale_image(const Tensor& img, double ratio, double fill,
                   Resample mode = Resample::Bilinear);

/// Rotates counterclockwise about the image center.
Tensor rotate_image(const Tensor& img, double degrees, double fill,
                    Resample mode = Resample::Bilinear);

}  // namespace convscope
