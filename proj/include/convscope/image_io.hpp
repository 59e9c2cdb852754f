#pragma once

#include <cstdint>
#include <string>

#include "convscope/tensor.hpp"

namespace convscope {

// Codecs: PNG and binary PPM (P6), 8-bit RGB. Decoded images are (1, 3, h, w)
// tensors with values in [0, 255]; grayscale inputs are replicated to three
// channels. Saving clamps to [0, 255] and rounds half to even.

Tensor load_image(const std::string& path);
void save_image(const Tensor& img, const std::string& path);

/// Raw little-endian f64 tensor file, used for cached mean images.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

/// Writes via a temp file in the same directory plus an atomic rename.
void atomic_write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

/// Heat color for t in [0, 1]: dark blue through green to red.
void heat_color(double t, uint8_t rgb[3]);

/// Distinct color for a class index (cycled palette).
void label_color(int index, uint8_t rgb[3]);

}  // namespace convscope
