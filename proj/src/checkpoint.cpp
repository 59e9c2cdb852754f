#include "convscope/checkpoint.hpp"

#include <cstring>

#include "convscope/arch_text.hpp"
#include "convscope/dataset.hpp"
#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"

namespace convscope {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'C', 'K', 'P', 'T', '0', '1'};

class Writer {
 public:
  void u8(uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.append(s);
  }
  void raw(const char* p, size_t n) { bytes_.append(p, n); }
  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(bytes_[pos_++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  void need(uint64_t n) const {
    if (pos_ + n > bytes_.size())
      throw FormatError("truncated checkpoint file: " + path_);
  }
  const std::string& bytes_;
  std::string path_;
  size_t pos_ = 0;
};

void write_tensor32(Writer& w, const Tensor& t) {
  const Extent4& s = t.shape();
  w.u64(static_cast<uint64_t>(s.n));
  w.u64(static_cast<uint64_t>(s.c));
  w.u64(static_cast<uint64_t>(s.h));
  w.u64(static_cast<uint64_t>(s.w));
  for (int64_t i = 0; i < t.size(); ++i) w.f32(static_cast<float>(t.data()[i]));
}

Tensor read_tensor32(Reader& r) {
  int64_t n = static_cast<int64_t>(r.u64());
  int64_t c = static_cast<int64_t>(r.u64());
  int64_t h = static_cast<int64_t>(r.u64());
  int64_t w = static_cast<int64_t>(r.u64());
  Tensor t(Extent4{n, c, h, w});
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(r.f32());
  return t;
}

void write_layer_params(Writer& w, const std::vector<LayerParams>& layers,
                        const ArchitectureSpec& arch, const char* tag) {
  w.u32(static_cast<uint32_t>(layers.size()));
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerParams& lp = layers[i];
    if (lp.empty()) {
      w.u8(0);
      continue;
    }
    w.u8(1);
    std::string name = "layer" + std::to_string(i) + "." +
                       layer_kind_name(arch.layers[i].kind) + "." + tag;
    w.str(name);
    write_tensor32(w, lp.weights);
    w.u64(lp.bias.size());
    for (double b : lp.bias) w.f32(static_cast<float>(b));
  }
}

std::vector<LayerParams> read_layer_params(Reader& r) {
  uint32_t count = r.u32();
  std::vector<LayerParams> layers(count);
  for (uint32_t i = 0; i < count; ++i) {
    if (r.u8() == 0) continue;
    (void)r.str();  // name; informative only, layout is positional
    layers[i].weights = read_tensor32(r);
    uint64_t blen = r.u64();
    layers[i].bias.resize(blen);
    for (uint64_t b = 0; b < blen; ++b) layers[i].bias[b] = static_cast<double>(r.f32());
  }
  return layers;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  Writer w;
  w.raw(kMagic, 8);
  w.str(print_arch_text(ck.arch));
  w.u32(static_cast<uint32_t>(ck.epoch));
  w.u64(ck.seed);
  w.str(ck.rng_state);
  write_layer_params(w, ck.params.layers, ck.arch, "weights");
  w.f64(ck.opt.lr);
  w.u32(static_cast<uint32_t>(ck.opt.epochs_since_improvement));
  w.f64(ck.opt.best_val_err);
  if (ck.opt.velocity.empty()) {
    w.u8(0);
  } else {
    w.u8(1);
    write_layer_params(w, ck.opt.velocity, ck.arch, "velocity");
  }
  uint64_t hash = fnv1a64(w.bytes().data(), w.bytes().size());
  w.u64(hash);
  atomic_write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 16)
    throw FormatError("truncated checkpoint file: " + path);
  if (std::memcmp(bytes.data(), kMagic, 6) != 0)
    throw FormatError("not a checkpoint file: " + path);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError("unsupported checkpoint version in " + path);
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[bytes.size() - 8 + i]))
              << (8 * i);
  uint64_t actual = fnv1a64(bytes.data(), bytes.size() - 8);
  if (stored != actual)
    throw FormatError("checkpoint content hash mismatch (corrupt file): " + path);

  Reader r(bytes, path);
  for (int i = 0; i < 8; ++i) (void)r.u8();  // magic, already checked
  Checkpoint ck;
  ck.arch = parse_arch_text(r.str());
  ck.epoch = static_cast<int>(r.u32());
  ck.seed = r.u64();
  ck.rng_state = r.str();
  ck.params.layers = read_layer_params(r);
  ck.opt.lr = r.f64();
  ck.opt.epochs_since_improvement = static_cast<int>(r.u32());
  ck.opt.best_val_err = r.f64();
  if (r.u8() == 1) ck.opt.velocity = read_layer_params(r);

  // A checkpoint may carry no parameters at all (a bare architecture).
  if (ck.params.layers.empty()) ck.params.layers.resize(ck.arch.layers.size());
  if (ck.params.layers.size() != ck.arch.layers.size())
    throw IntegrityError("checkpoint parameter list does not match its architecture: " + path);
  // Stored parameter shapes must match the embedded spec.
  Rng probe(0);
  Params expect = init_params(ck.arch, 0.0, probe);
  for (size_t i = 0; i < expect.layers.size(); ++i) {
    if (ck.params.layers[i].empty()) continue;
    if (expect.layers[i].weights.shape() != ck.params.layers[i].weights.shape() ||
        expect.layers[i].bias.size() != ck.params.layers[i].bias.size())
      throw IntegrityError("checkpoint parameter shapes do not match its architecture: " +
                           path);
  }
  return ck;
}

uint64_t checkpoint_file_hash(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 16) throw FormatError("truncated checkpoint file: " + path);
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[bytes.size() - 8 + i]))
              << (8 * i);
  return stored;
}

}  // namespace convscope
