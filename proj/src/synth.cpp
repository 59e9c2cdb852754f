#include "convscope/synth.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "convscope/dataset.hpp"
#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"
#include "convscope/rng.hpp"
#include "convscope/tensor.hpp"

namespace convscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Sample {
  Tensor image;
  int label = 0;
  json landmarks;  // name -> [y, x, h, w]
};

void fill_background(Tensor& img, Rng& rng, double noise) {
  const Extent4& s = img.shape();
  double base[3] = {rng.uniform(30, 110), rng.uniform(30, 110), rng.uniform(30, 110)};
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < s.h; ++y)
      for (int64_t x = 0; x < s.w; ++x)
        img.at(0, c, y, x) = base[c] + rng.uniform(-noise, noise);
}

// Coverage in [0,1] of glyph `cls` at offset (dy, dx) from center, size s.
double glyph_mask(int cls, double dy, double dx, double s) {
  double ax = std::fabs(dx), ay = std::fabs(dy);
  double r = std::sqrt(dx * dx + dy * dy);
  auto soft = [](double signed_dist) {  // 1 inside, 0 outside, 1px ramp
    return std::clamp(0.5 - signed_dist, 0.0, 1.0);
  };
  switch (cls) {
    case 0:  // disk
      return soft(r - s);
    case 1:  // ring
      return soft(r - s) * soft(0.55 * s - r);
    case 2:  // plus
      return std::max(soft(std::max(ax - 0.3 * s, ay - s)),
                      soft(std::max(ay - 0.3 * s, ax - s)));
    case 3:  // diagonal cross
      return std::max(soft(std::max(std::fabs(dx - dy) * 0.7071 - 0.28 * s,
                                    std::max(ax, ay) - s)),
                      soft(std::max(std::fabs(dx + dy) * 0.7071 - 0.28 * s,
                                    std::max(ax, ay) - s)));
    case 4: {  // horizontal bars
      if (ax > s || ay > s) return 0.0;
      double phase = std::fmod(dy + s, s);
      return phase < 0.5 * s ? 1.0 : 0.0;
    }
    case 5: {  // vertical bars
      if (ax > s || ay > s) return 0.0;
      double phase = std::fmod(dx + s, s);
      return phase < 0.5 * s ? 1.0 : 0.0;
    }
    case 6:  // square outline
      return soft(std::max(ax, ay) - s) * soft(0.55 * s - std::max(ax, ay));
    case 7:  // filled triangle, apex up
      return soft(std::max(dy - 0.9 * s, ax - 0.55 * (dy + s)));
    case 8: {  // checkerboard
      if (ax > s || ay > s) return 0.0;
      int cell = (static_cast<int>(std::floor((dx + s) / (0.5 * s))) +
                  static_cast<int>(std::floor((dy + s) / (0.5 * s))));
      return cell % 2 == 0 ? 1.0 : 0.0;
    }
    case 9:  // single diagonal stripe
      return soft(std::max(std::fabs(dx + dy) * 0.7071 - 0.3 * s,
                           std::max(ax, ay) - s));
    default:
      throw InvalidArgumentError("glyph class out of range");
  }
}

void stamp_glyph(Tensor& img, int cls, double cy, double cx, double s,
                 const double color[3]) {
  const Extent4& sh = img.shape();
  for (int64_t y = 0; y < sh.h; ++y)
    for (int64_t x = 0; x < sh.w; ++x) {
      double m = glyph_mask(cls, static_cast<double>(y) - cy, static_cast<double>(x) - cx, s);
      if (m <= 0.0) continue;
      for (int64_t c = 0; c < 3; ++c)
        img.at(0, c, y, x) = img.at(0, c, y, x) * (1.0 - m) + color[c] * m;
    }
}

Sample make_shapes10(int label, int size, Rng& rng) {
  Sample smp;
  smp.label = label;
  smp.image = Tensor({1, 3, size, size});
  fill_background(smp.image, rng, 18.0);
  double color[3] = {rng.uniform(150, 255), rng.uniform(150, 255), rng.uniform(150, 255)};
  double half = static_cast<double>(size) / 2.0;
  double cy = half + rng.uniform(-3.0, 3.0);
  double cx = half + rng.uniform(-3.0, 3.0);
  double s = rng.uniform(0.42, 0.58) * half;
  stamp_glyph(smp.image, label, cy, cx, s, color);
  return smp;
}

void texture_fill(Tensor& img, int cls, int64_t y0, int64_t x0, int64_t h, int64_t w,
                  double lo, double hi) {
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = y0; y < y0 + h; ++y)
      for (int64_t x = x0; x < x0 + w; ++x) {
        bool on = false;
        switch (cls) {
          case 0: on = ((y / 2) + (x / 2)) % 2 == 0; break;  // checker
          case 1: on = (y / 2) % 2 == 0; break;              // horizontal stripes
          case 2: on = (x / 2) % 2 == 0; break;              // vertical stripes
          case 3: on = ((y + x) / 3) % 2 == 0; break;        // diagonal stripes
          default: throw InvalidArgumentError("texture class out of range");
        }
        double v = on ? hi : lo;
        img.at(0, c, y, x) = v;
      }
}

Sample make_quadrants(int label, int size, Rng& rng) {
  Sample smp;
  smp.label = label;
  smp.image = Tensor({1, 3, size, size});
  fill_background(smp.image, rng, 10.0);
  int64_t half = size / 2;
  int quadrant = static_cast<int>(rng.uniform_index(4));
  int64_t qy = (quadrant / 2) * half;
  int64_t qx = (quadrant % 2) * half;
  texture_fill(smp.image, label, qy, qx, half, half, rng.uniform(10, 40),
               rng.uniform(210, 250));
  smp.landmarks["object"] = {qy, qx, half, half};
  return smp;
}

Sample make_parts(int size, Rng& rng) {
  Sample smp;
  smp.label = 0;
  smp.image = Tensor({1, 3, size, size});
  fill_background(smp.image, rng, 18.0);
  // varying clutter
  for (int blob = 0; blob < 3; ++blob) {
    double color[3] = {rng.uniform(60, 220), rng.uniform(60, 220), rng.uniform(60, 220)};
    stamp_glyph(smp.image, static_cast<int>(rng.uniform_index(10)),
                rng.uniform(4, size - 4), rng.uniform(4, size - 4),
                rng.uniform(3.0, 6.0), color);
  }
  // the aligned part: a fixed high-contrast checker marker
  int64_t py = size / 4 - 2;
  int64_t px = size / 4 - 2;
  int64_t ps = std::max<int64_t>(6, size / 4);
  for (int64_t y = py; y < py + ps; ++y)
    for (int64_t x = px; x < px + ps; ++x) {
      double v = ((y / 2) + (x / 2)) % 2 == 0 ? 250.0 : 5.0;
      for (int64_t c = 0; c < 3; ++c) smp.image.at(0, c, y, x) = v;
    }
  smp.landmarks["part"] = {py, px, ps, ps};
  return smp;
}

}  // namespace

void generate_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.size < 16) throw InvalidArgumentError("synthetic images must be at least 16px");
  if (spec.train < 1 || spec.test < 0 || spec.val < 0)
    throw InvalidArgumentError("bad synthetic split sizes");

  int classes;
  std::function<Sample(int, Rng&)> make;
  if (spec.kind == "shapes10") {
    classes = 10;
    make = [&](int label, Rng& rng) { return make_shapes10(label, spec.size, rng); };
  } else if (spec.kind == "quadrants") {
    classes = 4;
    make = [&](int label, Rng& rng) { return make_quadrants(label, spec.size, rng); };
  } else if (spec.kind == "parts") {
    classes = 1;
    make = [&](int, Rng& rng) { return make_parts(spec.size, rng); };
  } else {
    throw InvalidArgumentError("unknown synthetic dataset kind '" + spec.kind + "'");
  }

  Rng rng(spec.seed);
  fs::create_directories(out_dir);
  json manifest;
  json images = json::array();
  json landmarks = json::object();
  for (int c = 0; c < classes; ++c) {
    manifest["classes"].push_back(spec.kind + "_" + std::to_string(c));
    fs::create_directories(fs::path(out_dir) / ("class" + std::to_string(c)));
  }

  struct Part {
    Split split;
    int count;
  };
  const Part parts[] = {{Split::Train, spec.train}, {Split::Val, spec.val},
                        {Split::Test, spec.test}};
  for (const Part& part : parts) {
    for (int i = 0; i < part.count; ++i) {
      int label = i % classes;  // balanced splits
      Sample smp = make(label, rng);
      char name[96];
      std::snprintf(name, sizeof(name), "class%d/%s_%05d.png", label,
                    split_name(part.split), i);
      save_image(smp.image, (fs::path(out_dir) / name).string());
      images.push_back({{"file", name}, {"class", label}, {"split", split_name(part.split)}});
      if (!smp.landmarks.is_null()) landmarks[name] = smp.landmarks;
    }
  }
  manifest["images"] = std::move(images);
  if (!landmarks.empty()) {
    manifest["landmarks"] = "landmarks.json";
    atomic_write_file((fs::path(out_dir) / "landmarks.json").string(), landmarks.dump(1));
  }
  atomic_write_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(1));
}

}  // namespace convscope
