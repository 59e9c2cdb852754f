#include "convscope/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <vector>

#include "convscope/errors.hpp"

namespace convscope {

namespace {

uint8_t quantize(double v) {
  // clamp to [0,255], round half to even
  v = std::min(255.0, std::max(0.0, v));
  double r = std::nearbyint(v);  // default FP rounding mode is to-nearest-even
  return static_cast<uint8_t>(r);
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  for (char& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return tail == suffix;
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* f = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (f) std::fclose(f);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* f = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (f) std::fclose(f);
  }
};

Tensor load_png(const std::string& path) {
  PngReadCloser ctx;
  ctx.f = std::fopen(path.c_str(), "rb");
  if (!ctx.f) throw IoError("cannot open " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, ctx.f) != 8 || png_sig_cmp(sig, 0, 8))
    throw FormatError("not a PNG file: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw InternalError("libpng allocation failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw FormatError("corrupt PNG data in " + path);
  png_init_io(ctx.png, ctx.f);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  png_uint_32 width = png_get_image_width(ctx.png, ctx.info);
  png_uint_32 height = png_get_image_height(ctx.png, ctx.info);
  int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  int color_type = png_get_color_type(ctx.png, ctx.info);
  if (bit_depth == 16)
    throw FormatError("unsupported bit depth 16 in " + path + " (8-bit RGB only)");

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  if (png_get_channels(ctx.png, ctx.info) != 3)
    throw FormatError("unsupported PNG channel layout in " + path);

  std::vector<unsigned char> rowbuf(static_cast<size_t>(width) * 3);
  Tensor img({1, 3, static_cast<int64_t>(height), static_cast<int64_t>(width)});
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(ctx.png, rowbuf.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) = static_cast<double>(rowbuf[x * 3 + static_cast<size_t>(c)]);
  }
  png_read_end(ctx.png, nullptr);
  return img;
}

void save_png(const Tensor& img, const std::string& path) {
  const Extent4& s = img.shape();
  std::string tmp = path + ".tmp";
  {
    PngWriteCloser ctx;
    ctx.f = std::fopen(tmp.c_str(), "wb");
    if (!ctx.f) throw IoError("cannot write " + tmp);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw InternalError("libpng allocation failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("PNG write failed for " + path);
    png_init_io(ctx.png, ctx.f);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(s.w),
                 static_cast<png_uint_32>(s.h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<unsigned char> rowbuf(static_cast<size_t>(s.w) * 3);
    for (int64_t y = 0; y < s.h; ++y) {
      for (int64_t x = 0; x < s.w; ++x)
        for (int64_t c = 0; c < 3; ++c)
          rowbuf[static_cast<size_t>(x * 3 + c)] = quantize(img.at(0, c, y, x));
      png_write_row(ctx.png, rowbuf.data());
    }
    png_write_end(ctx.png, nullptr);
  }
  std::filesystem::rename(tmp, path);
}

Tensor load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw FormatError("not a binary PPM (P6) file: " + path);
  auto next_token = [&]() -> long {
    // skip whitespace and '#' comments
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    long v = -1;
    f >> v;
    return v;
  };
  long w = next_token();
  long h = next_token();
  long maxval = next_token();
  if (!f || w < 1 || h < 1) throw FormatError("bad PPM header in " + path);
  if (maxval != 255)
    throw FormatError("unsupported bit depth in " + path + " (maxval must be 255)");
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> buf(static_cast<size_t>(w) * static_cast<size_t>(h) * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size()))
    throw FormatError("truncated PPM data in " + path);
  Tensor img({1, 3, h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) =
            static_cast<double>(buf[(static_cast<size_t>(y) * w + x) * 3 + static_cast<size_t>(c)]);
  return img;
}

void save_ppm(const Tensor& img, const std::string& path) {
  const Extent4& s = img.shape();
  std::string bytes = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  bytes.reserve(bytes.size() + static_cast<size_t>(s.h * s.w * 3));
  for (int64_t y = 0; y < s.h; ++y)
    for (int64_t x = 0; x < s.w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        bytes.push_back(static_cast<char>(quantize(img.at(0, c, y, x))));
  atomic_write_file(path, bytes);
}

}  // namespace

Tensor load_image(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
  if (has_suffix(path, ".png")) return load_png(path);
  if (has_suffix(path, ".ppm")) return load_ppm(path);
  throw FormatError("unsupported image format for " + path + " (PNG or PPM only)");
}

void save_image(const Tensor& img, const std::string& path) {
  const Extent4& s = img.shape();
  if (s.n != 1 || s.c != 3 || s.h < 1 || s.w < 1)
    throw InputError("save_image expects a (1,3,h,w) tensor");
  if (has_suffix(path, ".png")) return save_png(img, path);
  if (has_suffix(path, ".ppm")) return save_ppm(img, path);
  throw FormatError("unsupported image format for " + path + " (PNG or PPM only)");
}

void save_tensor(const Tensor& t, const std::string& path) {
  const Extent4& s = t.shape();
  std::string bytes;
  bytes.reserve(40 + static_cast<size_t>(t.size()) * 8);
  bytes.append("CSTENS1\n");
  auto put_i64 = [&](int64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_i64(s.n);
  put_i64(s.c);
  put_i64(s.h);
  put_i64(s.w);
  for (int64_t i = 0; i < t.size(); ++i) {
    uint64_t bits;
    double v = t.data()[i];
    std::memcpy(&bits, &v, 8);
    put_i64(static_cast<int64_t>(bits));
  }
  atomic_write_file(path, bytes);
}

Tensor load_tensor(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 40 || bytes.compare(0, 8, "CSTENS1\n") != 0)
    throw FormatError("not a tensor file: " + path);
  size_t pos = 8;
  auto get_i64 = [&]() {
    if (pos + 8 > bytes.size()) throw FormatError("truncated tensor file: " + path);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return static_cast<int64_t>(v);
  };
  Extent4 s{get_i64(), get_i64(), get_i64(), get_i64()};
  Tensor t(s);
  for (int64_t i = 0; i < t.size(); ++i) {
    uint64_t bits = static_cast<uint64_t>(get_i64());
    double v;
    std::memcpy(&v, &bits, 8);
    t.data()[i] = v;
  }
  return t;
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path + " failed: " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

void heat_color(double t, uint8_t rgb[3]) {
  t = std::min(1.0, std::max(0.0, t));
  // piecewise blue -> cyan -> green -> yellow -> red
  struct Stop {
    double t;
    double r, g, b;
  };
  static const Stop stops[] = {
      {0.00, 20, 20, 120}, {0.25, 30, 160, 200}, {0.50, 40, 180, 60},
      {0.75, 230, 220, 40}, {1.00, 200, 30, 30},
  };
  for (int i = 0; i < 4; ++i) {
    if (t <= stops[i + 1].t) {
      double f = (t - stops[i].t) / (stops[i + 1].t - stops[i].t);
      rgb[0] = static_cast<uint8_t>(std::lround(stops[i].r + f * (stops[i + 1].r - stops[i].r)));
      rgb[1] = static_cast<uint8_t>(std::lround(stops[i].g + f * (stops[i + 1].g - stops[i].g)));
      rgb[2] = static_cast<uint8_t>(std::lround(stops[i].b + f * (stops[i + 1].b - stops[i].b)));
      return;
    }
  }
}

void label_color(int index, uint8_t rgb[3]) {
  static const uint8_t palette[][3] = {
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
      {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
      {128, 128, 0},  {255, 215, 180}, {0, 0, 128},    {128, 128, 128},
  };
  const int n = static_cast<int>(sizeof(palette) / sizeof(palette[0]));
  int i = ((index % n) + n) % n;
  rgb[0] = palette[i][0];
  rgb[1] = palette[i][1];
  rgb[2] = palette[i][2];
}

}  // namespace convscope
