// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Heavyweight artifacts (synthetic datasets, the trained
// desk-scale model) live under ./acceptance_work and are reused when their
// deterministic inputs have not changed.
//
// Run all criteria:        ./acceptance
// Run a subset:            ./acceptance 1 4 7

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "convscope/arch_text.hpp"
#include "convscope/checkpoint.hpp"
#include "convscope/dataset.hpp"
#include "convscope/deconvnet.hpp"
#include "convscope/image_io.hpp"
#include "convscope/probes.hpp"
#include "convscope/synth.hpp"
#include "convscope/trainer.hpp"
#include "convscope/transfer.hpp"

using namespace convscope;
namespace fs = std::filesystem;

namespace {

constexpr const char* kWorkDir = "acceptance_work";

double wall_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-2});
}

Tensor random_tensor(Extent4 shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

ConvParams random_conv(Rng& rng, int64_t in_c, int64_t out_c, int k, int stride, int pad,
                       bool zero_bias) {
  ConvParams p;
  p.filters = random_tensor({out_c, in_c, k, k}, rng);
  p.bias.assign(static_cast<size_t>(out_c), 0.0);
  if (!zero_bias)
    for (double& b : p.bias) b = rng.uniform(-0.5, 0.5);
  p.stride = stride;
  p.pad = pad;
  return p;
}

// ---- shared artifacts --------------------------------------------------

std::string dataset_dir(const char* name) { return std::string(kWorkDir) + "/" + name; }

const std::string& shapes_dir() {
  static const std::string dir = [] {
    std::string d = dataset_dir("shapes10");
    if (!fs::exists(d + "/manifest.json")) {
      std::printf("  [setup] generating shapes10 dataset (5000/500/1000)...\n");
      SynthSpec spec;
      spec.kind = "shapes10";
      spec.train = 5000;
      spec.val = 500;
      spec.test = 1000;
      spec.size = 32;
      spec.seed = 20260808;
      generate_synthetic_dataset(spec, d);
    }
    return d;
  }();
  return dir;
}

const std::string& shapes_small_dir() {
  static const std::string dir = [] {
    std::string d = dataset_dir("shapes10_small");
    if (!fs::exists(d + "/manifest.json")) {
      SynthSpec spec;
      spec.kind = "shapes10";
      spec.train = 400;
      spec.val = 80;
      spec.test = 80;
      spec.size = 32;
      spec.seed = 7;
      generate_synthetic_dataset(spec, d);
    }
    return d;
  }();
  return dir;
}

const std::string& quadrants_dir() {
  static const std::string dir = [] {
    std::string d = dataset_dir("quadrants");
    if (!fs::exists(d + "/manifest.json")) {
      SynthSpec spec;
      spec.kind = "quadrants";
      spec.train = 2000;
      spec.val = 200;
      spec.test = 100;
      spec.size = 32;
      spec.seed = 11;
      generate_synthetic_dataset(spec, d);
    }
    return d;
  }();
  return dir;
}

const std::string& parts_dir() {
  static const std::string dir = [] {
    std::string d = dataset_dir("parts");
    if (!fs::exists(d + "/manifest.json")) {
      SynthSpec spec;
      spec.kind = "parts";
      spec.train = 8;
      spec.val = 0;
      spec.test = 48;
      spec.size = 32;
      spec.seed = 13;
      generate_synthetic_dataset(spec, d);
    }
    return d;
  }();
  return dir;
}

ArchitectureSpec desk_arch() { return load_arch(std::string(PRESET_DIR) + "/desk32.arch"); }

TrainConfig desk_train_config() {
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.momentum = 0.9;
  cfg.batch = 64;
  cfg.max_epochs = 6;
  cfg.seed = 42;
  // the 1e-2 default suits the 224-input scale; five desk-size layers need a
  // larger init for the signal to reach the classifier within a short run
  cfg.weight_init_std = 0.05;
  cfg.snapshot_epochs = {};
  return cfg;
}

struct DeskModel {
  Checkpoint ck;
  double train_cpu_seconds = 0.0;
  double train_wall_seconds = 0.0;
  double test_accuracy = 0.0;
  bool fresh = false;
};

// Trains the desk model once per process; reuses a cached checkpoint from a
// previous acceptance run when present (training is deterministic, so the
// cache is exact).
DeskModel& desk_model(bool force_train = false) {
  static DeskModel model;
  static bool ready = false;
  if (ready && !force_train) return model;
  std::string path = std::string(kWorkDir) + "/desk_model.ckpt";
  Dataset data = Dataset::load(shapes_dir());
  if (!force_train && fs::exists(path)) {
    model.ck = load_checkpoint(path);
    model.fresh = false;
  } else {
    std::printf("  [setup] training the desk model (6 epochs on 5000 images)...\n");
    std::fflush(stdout);
    double cpu0 = cpu_seconds();
    double wall0 = wall_seconds();
    model.ck = train(desk_arch(), data, desk_train_config(), "");
    model.train_cpu_seconds = cpu_seconds() - cpu0;
    model.train_wall_seconds = wall_seconds() - wall0;
    model.fresh = true;
    save_checkpoint(model.ck, path);
  }
  model.test_accuracy =
      evaluate(model.ck.arch, model.ck.params, data, Split::Test).accuracy;
  ready = true;
  return model;
}

// ---- criteria ----------------------------------------------------------

bool criterion_1(std::string& detail) {
  const int kernels[] = {1, 3, 5, 7};
  const int strides[] = {1, 2};
  const int pads[] = {0, 1, 3};
  Rng rng(101);
  double t0 = wall_seconds();
  double worst = 0.0;
  int configs = 0;
  while (configs < 50) {
    int k = kernels[rng.uniform_index(4)];
    int stride = strides[rng.uniform_index(2)];
    int pad = pads[rng.uniform_index(3)];
    int64_t hw = std::max<int64_t>(k, rng.uniform_int(6, 14));
    if (hw + 2 * pad < k) continue;
    int64_t in_c = rng.uniform_int(1, 3);
    int64_t out_c = rng.uniform_int(1, 4);
    Tensor x = random_tensor({rng.uniform_int(1, 2), in_c, hw, hw}, rng);
    ConvParams p = random_conv(rng, in_c, out_c, k, stride, pad, /*zero_bias=*/true);
    Tensor fwd = conv_forward(x, p);
    Tensor y = random_tensor(fwd.shape(), rng);
    double lhs = dot(fwd, y);
    double rhs = dot(x, deconv_filter(y, p, hw, hw));
    worst = std::max(worst, rel_err(lhs, rhs));
    ++configs;
  }
  double elapsed = wall_seconds() - t0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "50 configs, worst relative error %.2e, %.1fs", worst,
                elapsed);
  detail = buf;
  return worst < 1e-9 && elapsed < 10.0;
}

using LossFn = std::function<double(const Tensor&)>;

double fd_max_err(const LossFn& f, Tensor at, const Tensor& analytic, double h = 1e-6) {
  double worst = 0.0;
  for (int64_t i = 0; i < at.size(); ++i) {
    double orig = at.data()[i];
    at.data()[i] = orig + h;
    double up = f(at);
    at.data()[i] = orig - h;
    double down = f(at);
    at.data()[i] = orig;
    worst = std::max(worst, rel_err((up - down) / (2.0 * h), analytic.data()[i]));
  }
  return worst;
}

bool criterion_2(std::string& detail) {
  Rng rng(202);
  double t0 = wall_seconds();
  std::map<std::string, double> worst;
  const int instances = 20;

  for (int i = 0; i < instances; ++i) {
    {  // conv: input, filter and bias gradients
      int k = 1 + 2 * static_cast<int>(rng.uniform_index(2));
      Tensor in = random_tensor({1, 2, 5, 5}, rng);
      ConvParams p = random_conv(rng, 2, 2, k, rng.uniform_int(1, 2),
                                 static_cast<int>(rng.uniform_index(2)), false);
      Tensor w = random_tensor(conv_forward(in, p).shape(), rng, -0.3, 0.3);
      ConvGrads g = conv_backward(in, p, w);
      worst["conv"] = std::max(
          worst["conv"],
          fd_max_err([&](const Tensor& t) { return dot(conv_forward(t, p), w); }, in,
                     g.input));
      worst["conv"] = std::max(worst["conv"], fd_max_err(
          [&](const Tensor& f) {
            ConvParams q = p;
            q.filters = f;
            return dot(conv_forward(in, q), w);
          },
          p.filters, g.filters));
    }
    {  // relu
      Tensor in = random_tensor({1, 2, 4, 4}, rng);
      for (int64_t j = 0; j < in.size(); ++j)
        if (std::fabs(in.data()[j]) < 1e-4) in.data()[j] = 0.5;  // stay off the kink
      Tensor w = random_tensor(in.shape(), rng, -0.3, 0.3);
      Tensor g = relu_backward(in, w);
      worst["relu"] = std::max(
          worst["relu"],
          fd_max_err([&](const Tensor& t) { return dot(relu_forward(t), w); }, in, g));
    }
    {  // maxpool, ties excluded
      int window = rng.uniform_int(2, 3);
      int stride = rng.uniform_int(1, 2);
      bool ceil_mode = rng.uniform() < 0.5;
      Tensor in;
      for (;;) {  // regenerate until all windows have a clear margin
        in = random_tensor({1, 2, 5, 5}, rng);
        PoolResult pr = maxpool_forward(in, window, stride, ceil_mode);
        bool clear = true;
        const Extent4& os = pr.out.shape();
        for (int64_t c = 0; c < os.c && clear; ++c)
          for (int64_t oy = 0; oy < os.h && clear; ++oy)
            for (int64_t ox = 0; ox < os.w && clear; ++ox) {
              double best = pr.out.at(0, c, oy, ox);
              for (int64_t y = oy * stride;
                   y < std::min<int64_t>(oy * stride + window, 5) && clear; ++y)
                for (int64_t x = ox * stride;
                     x < std::min<int64_t>(ox * stride + window, 5); ++x) {
                  double v = in.at(0, c, y, x);
                  if (v != best && best - v < 1e-4) {
                    clear = false;
                    break;
                  }
                }
            }
        if (clear) break;
      }
      PoolResult pr = maxpool_forward(in, window, stride, ceil_mode);
      Tensor w = random_tensor(pr.out.shape(), rng, -0.3, 0.3);
      Tensor g = maxpool_backward(pr.switches, w);
      worst["maxpool"] = std::max(
          worst["maxpool"],
          fd_max_err(
              [&](const Tensor& t) {
                return dot(maxpool_forward(t, window, stride, ceil_mode).out, w);
              },
              in, g));
    }
    {  // lrn
      LrnParams p{3, 1.5, 0.3, 0.8};
      Tensor in = random_tensor({1, 5, 3, 3}, rng);
      Tensor w = random_tensor(in.shape(), rng, -0.3, 0.3);
      Tensor g = lrn_backward(in, p, w);
      worst["lrn"] = std::max(
          worst["lrn"],
          fd_max_err([&](const Tensor& t) { return dot(lrn_forward(t, p), w); }, in, g));
    }
    {  // fully connected
      Tensor in = random_tensor({1, 6, 1, 1}, rng);
      Tensor wmat = random_tensor({4, 6, 1, 1}, rng);
      std::vector<double> bias{0.1, -0.2, 0.05, 0.3};
      Tensor w = random_tensor({1, 4, 1, 1}, rng, -0.3, 0.3);
      FcGrads g = fc_backward(in, wmat, w);
      worst["fc"] = std::max(
          worst["fc"],
          fd_max_err([&](const Tensor& t) { return dot(fc_forward(t, wmat, bias), w); },
                     in, g.input));
      worst["fc"] = std::max(
          worst["fc"],
          fd_max_err([&](const Tensor& m) { return dot(fc_forward(in, m, bias), w); },
                     wmat, g.weights));
    }
    {  // dropout backward through a fixed mask
      Tensor in = random_tensor({1, 2, 4, 4}, rng);
      Rng mask_rng(3000 + static_cast<uint64_t>(i));
      DropoutResult dr = dropout_apply(in, 0.5, mask_rng, Mode::Train);
      Tensor w = random_tensor(in.shape(), rng, -0.3, 0.3);
      Tensor analytic(in.shape());
      for (int64_t j = 0; j < in.size(); ++j)
        analytic.data()[j] = w.data()[j] * dr.mask.data()[j];
      worst["dropout"] = std::max(
          worst["dropout"],
          fd_max_err(
              [&](const Tensor& t) {
                double acc = 0.0;
                for (int64_t j = 0; j < t.size(); ++j)
                  acc += t.data()[j] * dr.mask.data()[j] * w.data()[j];
                return acc;
              },
              in, analytic));
    }
    {  // flatten: the gradient reshapes back untouched
      Tensor in = random_tensor({1, 2, 3, 4}, rng);
      Tensor w = random_tensor({1, 24, 1, 1}, rng, -0.3, 0.3);
      Tensor analytic = w.reshaped(in.shape());
      worst["flatten"] = std::max(
          worst["flatten"],
          fd_max_err(
              [&](const Tensor& t) {
                return dot(t.reshaped({1, 24, 1, 1}), w);
              },
              in, analytic));
    }
    {  // softmax cross-entropy
      Tensor logits = random_tensor({1, 5, 1, 1}, rng, -2, 2);
      int label = static_cast<int>(rng.uniform_index(5));
      std::span<const double> row(logits.data(), 5);
      SoftmaxXent sx = softmax_xent(row, label);
      Tensor analytic = Tensor::from_values({1, 5, 1, 1}, sx.grad_logits);
      worst["softmax"] = std::max(
          worst["softmax"],
          fd_max_err(
              [&](const Tensor& t) {
                std::span<const double> r(t.data(), 5);
                return softmax_xent(r, label).loss;
              },
              logits, analytic));
    }
  }
  double elapsed = wall_seconds() - t0;
  double overall = 0.0;
  std::string kinds;
  for (const auto& [kind, err] : worst) {
    overall = std::max(overall, err);
    kinds += kind + "=" + std::to_string(err).substr(0, 8) + " ";
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "8 layer kinds x %d instances, worst %.2e, %.1fs",
                instances, overall, elapsed);
  detail = buf;
  return overall < 1e-5 && elapsed < 60.0;
}

bool criterion_3(std::string& detail) {
  ArchitectureSpec net224 = load_arch(std::string(PRESET_DIR) + "/imagenet224.arch");
  std::vector<Extent4> shapes = infer_shapes(net224);
  bool ok = shapes[0] == Extent4{1, 96, 110, 110};   // conv1
  int pool1 = 2, flatten = 15;
  ok = ok && shapes[static_cast<size_t>(pool1)] == Extent4{1, 96, 55, 55};
  ok = ok && shapes[static_cast<size_t>(flatten)] == Extent4{1, 9216, 1, 1};
  detail = "conv1 " + std::to_string(shapes[0].h) + "x" + std::to_string(shapes[0].w) +
           ", pool1 " + std::to_string(shapes[2].c) + "x" + std::to_string(shapes[2].h) +
           "x" + std::to_string(shapes[2].w) + ", flatten " +
           std::to_string(shapes[15].c);
  return ok;
}

bool criterion_4(std::string& detail) {
  Rng rng(404);
  int equal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int window = rng.uniform_int(2, 3);
    int stride = rng.uniform_int(1, 3);
    bool ceil_mode = rng.uniform() < 0.5;
    Extent4 s{rng.uniform_int(1, 2), rng.uniform_int(1, 3), rng.uniform_int(4, 10),
              rng.uniform_int(4, 10)};
    Tensor in = random_tensor(s, rng);
    PoolResult pr = maxpool_forward(in, window, stride, ceil_mode);
    Tensor x = random_tensor(pr.out.shape(), rng);
    if (unpool(x, pr.switches) == maxpool_backward(pr.switches, x)) ++equal;
  }
  detail = std::to_string(equal) + "/100 cases bit-equal";
  return equal == 100;
}

bool criterion_5(std::string& detail) {
  Dataset data = Dataset::load(shapes_small_dir());
  ArchitectureSpec arch = desk_arch();
  TrainConfig cfg = desk_train_config();
  cfg.max_epochs = 5;
  cfg.batch = 32;
  cfg.seed = 17;
  int64_t checks = 0;
  double worst = 0.0;
  train(arch, data, cfg, "", [&](const StepInfo&, const Params& p) {
    for (size_t li = 0; li < arch.layers.size(); ++li) {
      if (arch.layers[li].kind != LayerKind::Conv) continue;
      for (int64_t o = 0; o < p.layers[li].weights.shape().n; ++o) {
        double rms = filter_slice_rms(p.layers[li].weights, o);
        worst = std::max(worst, rms);
        ++checks;
      }
    }
  });
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%lld slice checks over 5 epochs, max rms %.12f (radius 0.1)",
                static_cast<long long>(checks), worst);
  detail = buf;
  return checks > 0 && worst <= 0.1 + 1e-12;
}

bool criterion_6(std::string& detail) {
  DeskModel& m = desk_model(/*force_train=*/true);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "test accuracy %.3f (>= 0.60) in %.1f cpu-min / %.1f wall-min",
                m.test_accuracy, m.train_cpu_seconds / 60.0, m.train_wall_seconds / 60.0);
  detail = buf;
  return m.test_accuracy >= 0.60 && m.train_cpu_seconds < 1800.0;
}

bool criterion_7(std::string& detail) {
  ArchitectureSpec net224 = load_arch(std::string(PRESET_DIR) + "/imagenet224.arch");
  Rng rng(707);
  Params params = init_params(net224, 0.05, rng);
  Tensor image = random_tensor({1, 3, 224, 224}, rng, -1.0, 1.0);
  ActivationRecord rec = net_forward(net224, params, image, Mode::Eval);

  // impulse: one conv1 activation projects to the kernel stamp at its window
  const int map = 7;
  ActivationSelection sel{0, map, 30, 40, KeepPolicy::SingleActivation};
  ProjectionResult proj = project(net224, params, rec, sel);
  double act = rec.output_of(0).at(0, map, 30, 40);
  // analytic adjoint stamp: act * filter at the receptive window (top-left
  // 30*2-1, 40*2-1 from stride 2 pad 1), clipped at the frame
  double dot_v = 0.0, na = 0.0, nb = 0.0;
  RfInfo rf = receptive_field(net224, 0);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 7; ++i)
      for (int64_t j = 0; j < 7; ++j) {
        int64_t y = rf.offset + 30 * rf.stride + i;
        int64_t x = rf.offset + 40 * rf.stride + j;
        if (y < 0 || y >= 224 || x < 0 || x >= 224) continue;
        double expect = act * params.layers[0].weights.at(map, c, i, j);
        double got = proj.image.at(0, c, y, x);
        dot_v += expect * got;
        na += expect * expect;
        nb += got * got;
      }
  double cosine = dot_v / std::sqrt(na * nb);

  // support containment at every layer of the preset
  bool contained = true;
  std::string bad_layer;
  for (size_t layer = 0; layer < net224.layers.size() && contained; ++layer) {
    const Tensor& feat = rec.output_of(static_cast<int>(layer));
    ActivationSelection s2{static_cast<int>(layer), 0, -1, -1,
                           KeepPolicy::SingleActivation};
    if (feat.shape().h == 1 && feat.shape().w == 1) {
      s2.row = 0;
      s2.col = 0;
    }
    ProjectionResult p2 = project(net224, params, rec, s2);
    for (int64_t c = 0; c < 3 && contained; ++c)
      for (int64_t y = 0; y < 224 && contained; ++y)
        for (int64_t x = 0; x < 224 && contained; ++x)
          if (p2.image.at(0, c, y, x) != 0.0 &&
              (y < p2.box.y0 || y >= p2.box.y1 || x < p2.box.x0 || x >= p2.box.x1)) {
            contained = false;
            bad_layer = std::to_string(layer);
          }
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf), "impulse cosine %.6f, support contained %s%s", cosine,
                contained ? "at all 23 layers" : "VIOLATED at layer ",
                contained ? "" : bad_layer.c_str());
  detail = buf;
  return cosine > 0.999 && contained;
}

bool criterion_8(std::string& detail) {
  // train a small texture-locator model on the quadrants dataset
  Dataset data = Dataset::load(quadrants_dir());
  ArchitectureSpec arch = parse_arch_text(
      "input c=3 h=32 w=32\n"
      "conv out=12 k=3 stride=1 pad=1\nrelu\npool k=3 stride=2 ceil=true\n"
      "conv out=16 k=3 stride=1 pad=1\nrelu\npool k=3 stride=2 ceil=true\n"
      "flatten\nfc out=32\nrelu\nsoftmax classes=4\n");
  std::string path = std::string(kWorkDir) + "/quad_model.ckpt";
  Checkpoint ck;
  if (fs::exists(path)) {
    ck = load_checkpoint(path);
  } else {
    std::printf("  [setup] training the quadrant model (3 epochs on 2000 images)...\n");
    std::fflush(stdout);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch = 32;
    // gentler settings than the shapes run: the high-contrast textures drive
    // much larger activations and diverge at lr 1e-2
    cfg.lr = 0.002;
    cfg.seed = 5;
    cfg.weight_init_std = 0.02;
    ck = train(arch, data, cfg, "");
    save_checkpoint(ck, path);
  }
  double acc = evaluate(ck.arch, ck.params, data, Split::Test).accuracy;

  std::vector<int> test = data.indices_of(Split::Test);
  OcclusionOptions opt;
  opt.size = 16;
  opt.stride = 4;
  int localized = 0;
  int total = 0;
  for (int idx : test) {
    if (total == 100) break;
    ++total;
    std::optional<Rect> object = data.landmark(idx, "object");
    if (!object) continue;
    Tensor in = preprocessed_input(data, idx, 32);
    OcclusionReport rep = occlusion_sweep(ck.arch, ck.params, in,
                                          data.entries()[static_cast<size_t>(idx)].label,
                                          opt);
    size_t argmin = 0;
    for (size_t i = 1; i < rep.prob_map.size(); ++i)
      if (rep.prob_map[i] < rep.prob_map[argmin]) argmin = i;
    int64_t cy = rep.pos_y[argmin] + opt.size / 2;
    int64_t cx = rep.pos_x[argmin] + opt.size / 2;
    if (cy >= object->y && cy < object->y + object->h && cx >= object->x &&
        cx < object->x + object->w)
      ++localized;
  }

  // a unit whose receptive field misses the occluder must not move at all
  Tensor in = preprocessed_input(data, test[0], 32);
  Tensor occluded = paste_rect(in, 0, 0, 8, 8, 0.0);
  ActivationRecord clean = net_forward(ck.arch, ck.params, in, Mode::Eval);
  ActivationRecord blocked = net_forward(ck.arch, ck.params, occluded, Mode::Eval);
  const int conv2_relu = 4;
  // conv2 unit at (7,7): rf starts at 7*2*... comfortably inside the clean zone
  bool untouched = true;
  RfBox box = receptive_box(ck.arch, conv2_relu, 7, 7);
  bool disjoint = box.y0 >= 8 || box.x0 >= 8;  // occluder covers [0,8)x[0,8)
  for (int64_t m = 0; m < 16; ++m)
    if (blocked.output_of(conv2_relu).at(0, m, 7, 7) !=
        clean.output_of(conv2_relu).at(0, m, 7, 7))
      untouched = false;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "argmin in object quadrant %d/%d (model acc %.2f); disjoint unit moved: %s",
                localized, total, acc, untouched ? "no" : "YES");
  detail = buf;
  return localized >= 90 && disjoint && untouched;
}

bool criterion_9(std::string& detail) {
  DeskModel& m = desk_model();
  Dataset data = Dataset::load(parts_dir());
  std::vector<int> pool = data.indices_of(Split::Test);
  const int layer = top_conv_stage(m.ck.arch).layer;

  // cache per-image clean inputs and the part-occlusion differences
  std::map<int, Tensor> inputs;
  std::map<int, std::vector<double>> part_eps;
  for (int idx : pool) {
    Tensor in = preprocessed_input(data, idx, 32);
    Tensor occluded = occlude_part(data, idx, in, "part", 0.0);
    part_eps[idx] = feature_difference(m.ck.arch, m.ck.params, in, occluded, layer);
    inputs.emplace(idx, std::move(in));
  }
  std::optional<Rect> rect = data.landmark(pool[0], "part");
  if (!rect) {
    detail = "parts dataset lacks the 'part' landmark";
    return false;
  }

  Rng rng(909);
  int ordered = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> chosen = pool;
    rng.shuffle(chosen);
    chosen.resize(5);
    std::vector<std::vector<double>> eps_part, eps_random;
    for (int idx : chosen) {
      eps_part.push_back(part_eps[idx]);
      Rect r{static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(32 - rect->h + 1))),
             static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(32 - rect->w + 1))),
             rect->h, rect->w};
      Tensor occluded = occlude_rect(inputs.at(idx), r, 0.0);
      eps_random.push_back(
          feature_difference(m.ck.arch, m.ck.params, inputs.at(idx), occluded, layer));
    }
    double d_part = correspondence_score(eps_part).mean;
    double d_random = correspondence_score(eps_random).mean;
    if (d_part < d_random) ++ordered;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "consistent < random in %d/%d trials (layer %d)",
                ordered, trials, layer);
  detail = buf;
  return ordered >= 95;
}

bool criterion_10(std::string& detail) {
  DeskModel& m = desk_model();
  Dataset data = Dataset::load(shapes_dir());
  std::vector<StagePoint> stages = feature_stages(m.ck.arch);
  const int low = stages.front().layer;
  const int top = stages.back().layer;

  Rng rng(1010);
  std::vector<int> test = data.indices_of(Split::Test);
  rng.shuffle(test);
  test.resize(100);
  std::sort(test.begin(), test.end());

  std::vector<Tensor> inputs;
  std::vector<int> labels;
  for (int idx : test) {
    inputs.push_back(preprocessed_input(data, idx, 32));
    labels.push_back(data.entries()[static_cast<size_t>(idx)].label);
  }
  double spread_low = feature_spread(m.ck.arch, m.ck.params, inputs, low);
  double spread_top = feature_spread(m.ck.arch, m.ck.params, inputs, top);

  InvarianceOptions opt;
  opt.kind = TransformKind::VerticalTranslate;
  opt.sweep = {-4, 0, 4};
  opt.layers = {low, top};
  std::vector<InvarianceCurve> curves =
      invariance_sweep(m.ck.arch, m.ck.params, inputs, labels, opt);

  int ordered = 0;
  for (const InvarianceCurve& c : curves) {
    double d_low = (c.distances[0][0] + c.distances[0][2]) / 2.0 / spread_low;
    double d_top = (c.distances[1][0] + c.distances[1][2]) / 2.0 / spread_top;
    if (d_top < d_low) ++ordered;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "top layer less disturbed than layer 1 for %d/100 images (+-4 px)",
                ordered);
  detail = buf;
  return ordered >= 80;
}

bool criterion_11(std::string& detail) {
  DeskModel& m = desk_model();
  Dataset data = Dataset::load(shapes_dir());
  Rng rng(1111);
  std::vector<int> train = data.indices_of(Split::Train);
  std::vector<int> test = data.indices_of(Split::Test);
  rng.shuffle(train);
  train.resize(1500);
  std::sort(train.begin(), train.end());

  std::vector<StagePoint> stages = feature_stages(m.ck.arch);
  HeadConfig hc;
  hc.kind = HeadKind::Softmax;
  hc.classes = data.class_count();
  hc.epochs = 30;
  hc.seed = 3;

  std::vector<double> accs;
  std::string trace;
  for (const StagePoint& sp : stages) {
    FeatureMatrix trf = extract_features(data, train, m.ck.arch, m.ck.params, sp.layer);
    FeatureMatrix tef = extract_features(data, test, m.ck.arch, m.ck.params, sp.layer);
    HeadModel head = train_head(trf, hc);
    double acc = evaluate_per_class(head, tef).mean_accuracy;
    accs.push_back(acc);
    char item[64];
    std::snprintf(item, sizeof(item), "%s=%.3f ", sp.name.c_str(), acc);
    trace += item;
  }
  bool ordered = true;
  for (size_t i = 1; i < accs.size(); ++i)
    if (accs[i] < accs[i - 1] - 0.02) ordered = false;
  detail = trace + (ordered ? "(non-decreasing within 2%)" : "(ORDER VIOLATED)");
  return ordered;
}

bool criterion_12(std::string& detail) {
  Dataset data = Dataset::load(shapes_small_dir());
  ArchitectureSpec arch = desk_arch();
  TrainConfig cfg = desk_train_config();
  cfg.max_epochs = 2;
  cfg.batch = 32;
  cfg.seed = 2026;

  std::string dir_a = std::string(kWorkDir) + "/det_a";
  std::string dir_b = std::string(kWorkDir) + "/det_b";
  train(arch, data, cfg, dir_a);
  train(arch, data, cfg, dir_b);
  std::string bytes_a = read_file(dir_a + "/model.ckpt");
  std::string bytes_b = read_file(dir_b + "/model.ckpt");
  bool identical = bytes_a == bytes_b;

  // round-trip: eval outputs move only by float32 quantization
  Checkpoint ck = load_checkpoint(dir_a + "/model.ckpt");
  Checkpoint orig{arch, {}, {}, 0, 0, ""};
  {
    // recompute the in-memory model for the same run
    orig = train(arch, data, cfg, "");
  }
  double worst = 0.0;
  std::vector<int> test = data.indices_of(Split::Test);
  for (int i = 0; i < 10; ++i) {
    Tensor in = preprocessed_input(data, test[static_cast<size_t>(i)], 32);
    ActivationRecord r1 = net_forward(orig.arch, orig.params, in, Mode::Eval);
    ActivationRecord r2 = net_forward(ck.arch, ck.params, in, Mode::Eval);
    auto p1 = probabilities(r1)[0];
    auto p2 = probabilities(r2)[0];
    for (size_t c = 0; c < p1.size(); ++c)
      worst = std::max(worst, std::fabs(p1[c] - p2[c]));
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "checkpoints %s; round-trip probability drift %.2e (< 1e-5)",
                identical ? "bit-identical" : "DIFFER", worst);
  detail = buf;
  return identical && worst < 1e-5;
}

struct Criterion {
  int number;
  const char* title;
  bool (*fn)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "conv/deconv adjoint identity over random configurations", criterion_1},
    {2, "finite-difference gradient suite for every layer kind", criterion_2},
    {3, "224-input preset shape chain (110, 55x55x96, 9216)", criterion_3},
    {4, "unpool / maxpool_backward bit-equality", criterion_4},
    {5, "rms radius holds after every training step", criterion_5},
    {6, "desk-scale training reaches 60% inside the time budget", criterion_6},
    {7, "deconvnet impulse response and receptive-field support", criterion_7},
    {8, "occlusion argmin localizes the object quadrant", criterion_8},
    {9, "correspondence: consistent part scores below random", criterion_9},
    {10, "invariance: top layer steadier than layer 1 under translation", criterion_10},
    {11, "linear probes improve (within 2%) as layers ascend", criterion_11},
    {12, "bit-identical checkpoints and capped round-trip drift", criterion_12},
};

}  // namespace

int main(int argc, char** argv) {
  fs::create_directories(kWorkDir);
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() && !wanted.count(c.number)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %2d: %s — %s\n", ok ? "PASS" : "FAIL", c.number, c.title,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures == 0)
    std::printf("acceptance: all criteria passed\n");
  else
    std::printf("acceptance: %d criterion(s) failed\n", failures);
  return failures;
}
