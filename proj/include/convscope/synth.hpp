#pragma once

#include <cstdint>
#include <string>

namespace convscope {

// Synthetic desk-scale datasets, written as PNG files plus a manifest.
//
//   shapes10  - ten glyph classes (disk, ring, plus, ...) with jittered
//               position and size and randomized colors; the standard desk
//               training set.
//   quadrants - four texture classes; the texture occupies one random 16x16
//               quadrant recorded as landmark "object", the rest is noise.
//               Built for occlusion-localization experiments.
//   parts     - cluttered scenes sharing one aligned high-contrast marker,
//               recorded as landmark "part". Built for correspondence
//               experiments.
struct SynthSpec {
  std::string kind = "shapes10";
  int train = 5000;
  int val = 500;
  int test = 1000;
  int size = 32;       // square image side in pixels
  uint64_t seed = 1;
};

void generate_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir);

}  // namespace convscope
