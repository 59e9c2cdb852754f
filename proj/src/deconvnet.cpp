#include "convscope/deconvnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"
#include "convscope/parallel.hpp"
#include "convscope/trainer.hpp"
#include "linalg.hpp"

namespace convscope {

RfInfo receptive_field(const ArchitectureSpec& arch, int layer) {
  if (layer < 0 || static_cast<size_t>(layer) >= arch.layers.size())
    throw InvalidArgumentError("receptive_field: layer index out of range");
  RfInfo rf;
  bool global = false;
  for (int i = 0; i <= layer; ++i) {
    const LayerDesc& d = arch.layers[static_cast<size_t>(i)];
    switch (d.kind) {
      case LayerKind::Conv:
        rf.size += static_cast<int64_t>(d.kernel - 1) * rf.stride;
        rf.offset -= static_cast<int64_t>(d.pad) * rf.stride;
        rf.stride *= d.stride;
        break;
      case LayerKind::MaxPool:
        rf.size += static_cast<int64_t>(d.kernel - 1) * rf.stride;
        rf.stride *= d.stride;
        break;
      case LayerKind::Flatten:
      case LayerKind::FullyConnected:
      case LayerKind::SoftmaxClassifier:
        global = true;
        break;
      default:
        break;
    }
  }
  if (global) {
    int64_t side = std::max(arch.input.h, arch.input.w);
    return {side, 1, 0};
  }
  return rf;
}

RfBox receptive_box(const ArchitectureSpec& arch, int layer, int64_t row, int64_t col) {
  RfInfo rf = receptive_field(arch, layer);
  RfBox box;
  box.y0 = std::clamp<int64_t>(rf.offset + row * rf.stride, 0, arch.input.h);
  box.x0 = std::clamp<int64_t>(rf.offset + col * rf.stride, 0, arch.input.w);
  box.y1 = std::clamp<int64_t>(rf.offset + row * rf.stride + rf.size, 0, arch.input.h);
  box.x1 = std::clamp<int64_t>(rf.offset + col * rf.stride + rf.size, 0, arch.input.w);
  return box;
}

Tensor unpool(const Tensor& recon, const SwitchMap& switches) {
  if (!(recon.shape() == switches.out_shape))
    throw ShapeError("unpool: reconstruction shape does not match the pooled shape");
  const Extent4& os = switches.out_shape;
  const Extent4& is = switches.in_shape;
  Tensor out(is, 0.0);
  int64_t idx = 0;
  // Same scatter order as maxpool_backward: pooled elements row-major.
  for (int64_t n = 0; n < os.n; ++n)
    for (int64_t c = 0; c < os.c; ++c)
      for (int64_t oy = 0; oy < os.h; ++oy)
        for (int64_t ox = 0; ox < os.w; ++ox, ++idx) {
          int64_t iy = switches.rows[static_cast<size_t>(idx)];
          int64_t ix = switches.cols[static_cast<size_t>(idx)];
          if (iy < 0 || iy >= is.h || ix < 0 || ix >= is.w)
            throw IntegrityError("unpool: switch coordinate outside the input");
          out.at(n, c, iy, ix) += recon.at(n, c, oy, ox);
        }
  return out;
}

Tensor deconv_filter(const Tensor& recon, const ConvParams& p, int64_t out_h,
                     int64_t out_w) {
  const Extent4& rs = recon.shape();
  const Extent4& fs = p.filters.shape();
  if (rs.c != fs.n)
    throw ShapeError("deconv_filter: reconstruction channels must equal filter count");
  const int k = static_cast<int>(fs.h);
  const int stride = p.stride;
  const int pad = p.pad;
  int64_t in_h = out_h > 0 ? out_h : (rs.h - 1) * stride + k - 2 * pad;
  int64_t in_w = out_w > 0 ? out_w : (rs.w - 1) * stride + k - 2 * pad;
  if (in_h < 1 || in_w < 1) throw ShapeError("deconv_filter: degenerate geometry");
  if (conv_out_dim(in_h, k, stride, pad, false) != rs.h ||
      conv_out_dim(in_w, k, stride, pad, false) != rs.w)
    throw ShapeError("deconv_filter: requested extent is inconsistent with the map");

  Tensor flipped = flip_hw(p.filters);
  Tensor out({rs.n, fs.c, in_h, in_w});
  // Correlate the stride-dilated reconstruction with the flipped filters.
  // Walking source positions in ascending order keeps the summation order
  // identical to conv_backward's input-gradient gather.
  auto one_plane = [&](int64_t n, int64_t c) {
    for (int64_t iy = 0; iy < in_h; ++iy) {
      int64_t ylo_num = iy + pad - (k - 1);
      int64_t y_lo = ylo_num > 0 ? (ylo_num + stride - 1) / stride : 0;
      int64_t y_hi = std::min<int64_t>(rs.h - 1, (iy + pad) / stride);
      for (int64_t ix = 0; ix < in_w; ++ix) {
        int64_t xlo_num = ix + pad - (k - 1);
        int64_t x_lo = xlo_num > 0 ? (xlo_num + stride - 1) / stride : 0;
        int64_t x_hi = std::min<int64_t>(rs.w - 1, (ix + pad) / stride);
        double acc = 0.0;
        for (int64_t o = 0; o < fs.n; ++o)
          for (int64_t y = y_lo; y <= y_hi; ++y) {
            int64_t fi = (k - 1) - (iy + pad - y * stride);  // flipped row tap
            for (int64_t x = x_lo; x <= x_hi; ++x) {
              int64_t fj = (k - 1) - (ix + pad - x * stride);
              acc += recon.at(n, o, y, x) * flipped.at(o, c, fi, fj);
            }
          }
        out.at(n, c, iy, ix) = acc;
      }
    }
  };
  parallel_for(static_cast<size_t>(rs.n * fs.c), [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i)
      one_plane(static_cast<int64_t>(i) / fs.c, static_cast<int64_t>(i) % fs.c);
  });
  return out;
}

ProjectionResult project(const ArchitectureSpec& arch, const Params& params,
                         const ActivationRecord& record, const ActivationSelection& sel) {
  if (record.outputs.size() != arch.layers.size())
    throw ShapeError("project: record does not match the architecture");
  if (record.input.shape().n != 1)
    throw InvalidArgumentError("project expects a batch-1 record");
  if (sel.layer < 0 || static_cast<size_t>(sel.layer) >= record.outputs.size())
    throw InvalidArgumentError("project: layer index out of range");
  const Tensor& feat = record.outputs[static_cast<size_t>(sel.layer)];
  const Extent4& fsh = feat.shape();
  if (sel.map < 0 || sel.map >= fsh.c)
    throw InvalidArgumentError("project: feature map index out of range");

  int64_t row = sel.row;
  int64_t col = sel.col;
  if (sel.policy == KeepPolicy::SingleActivation && (row < 0 || col < 0)) {
    // resolve `strongest`
    double best = -std::numeric_limits<double>::infinity();
    for (int64_t y = 0; y < fsh.h; ++y)
      for (int64_t x = 0; x < fsh.w; ++x)
        if (feat.at(0, sel.map, y, x) > best) {
          best = feat.at(0, sel.map, y, x);
          row = y;
          col = x;
        }
  }

  ProjectionResult result;
  Tensor current(fsh, 0.0);
  if (sel.policy == KeepPolicy::SingleActivation) {
    if (row >= fsh.h || col >= fsh.w)
      throw InvalidArgumentError("project: spatial coordinate out of range");
    result.activation = feat.at(0, sel.map, row, col);
    current.at(0, sel.map, row, col) = result.activation;
    result.box = receptive_box(arch, sel.layer, row, col);
  } else {
    // zero all other maps, keep the chosen map's full spatial extent
    double peak = 0.0;
    for (int64_t y = 0; y < fsh.h; ++y)
      for (int64_t x = 0; x < fsh.w; ++x) {
        double v = feat.at(0, sel.map, y, x);
        current.at(0, sel.map, y, x) = v;
        peak = std::max(peak, std::fabs(v));
      }
    result.activation = peak;
    RfBox top_left = receptive_box(arch, sel.layer, 0, 0);
    RfBox bottom_right = receptive_box(arch, sel.layer, fsh.h - 1, fsh.w - 1);
    result.box = {top_left.y0, top_left.x0, bottom_right.y1, bottom_right.x1};
  }
  result.zero_activation = result.activation == 0.0;

  for (int i = sel.layer; i >= 0; --i) {
    const LayerDesc& d = arch.layers[static_cast<size_t>(i)];
    const Extent4 below =
        i == 0 ? record.input.shape() : record.outputs[static_cast<size_t>(i - 1)].shape();
    switch (d.kind) {
      case LayerKind::MaxPool:
        current = unpool(current, record.switches.at(i));
        break;
      case LayerKind::Relu:
        current = relu_forward(current);
        break;
      case LayerKind::Conv: {
        ConvParams cp{params.layers[static_cast<size_t>(i)].weights,
                      params.layers[static_cast<size_t>(i)].bias, d.stride, d.pad};
        current = deconv_filter(current, cp, below.h, below.w);
        break;
      }
      case LayerKind::Lrn:
      case LayerKind::Dropout:
        break;  // identity on the way down
      case LayerKind::Flatten:
        current = current.reshaped(below);
        break;
      case LayerKind::FullyConnected:
      case LayerKind::SoftmaxClassifier: {
        const Tensor& w = params.layers[static_cast<size_t>(i)].weights;
        Tensor next({1, below.c * below.h * below.w, 1, 1});
        linalg::matmul_nn(current.data(), w.data(), next.data(), 1, w.shape().n,
                          w.shape().c, false, true);
        current = next.reshaped(below);
        break;
      }
    }
  }
  result.image = std::move(current);
  return result;
}

std::vector<TopKResult> top_k_scan(const Dataset& data, Split split,
                                   const ArchitectureSpec& arch, const Params& params,
                                   int layer, const std::vector<int>& maps, int k) {
  if (k < 1) throw InvalidArgumentError("top_k: k must be >= 1");
  std::vector<int> indices = data.indices_of(split);
  if (indices.empty()) throw InputError("top_k: split has no images");
  const int target = static_cast<int>(arch.input.h);
  const Tensor& mean = data.mean(target);

  // per map, the best hit of every image
  std::vector<std::vector<TopHit>> best(maps.size());
  for (auto& v : best) v.reserve(indices.size());
  for (int idx : indices) {
    Tensor in = preprocess(data.image(idx), target, target, mean,
                           PreprocessMode::EvalSingle)[0];
    ActivationRecord rec = net_forward(arch, params, in, Mode::Eval);
    const Tensor& feat = rec.output_of(layer);
    const Extent4& s = feat.shape();
    for (size_t mi = 0; mi < maps.size(); ++mi) {
      int map = maps[mi];
      if (map < 0 || map >= s.c) throw InvalidArgumentError("top_k: map index out of range");
      TopHit hit{idx, 0, 0, feat.at(0, map, 0, 0)};
      for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
          if (feat.at(0, map, y, x) > hit.value) {
            hit.value = feat.at(0, map, y, x);
            hit.row = y;
            hit.col = x;
          }
      best[mi].push_back(hit);
    }
  }

  std::vector<TopKResult> out(maps.size());
  for (size_t mi = 0; mi < maps.size(); ++mi) {
    auto& hits = best[mi];
    std::sort(hits.begin(), hits.end(), [](const TopHit& a, const TopHit& b) {
      if (a.value != b.value) return a.value > b.value;
      if (a.image_index != b.image_index) return a.image_index < b.image_index;
      if (a.row != b.row) return a.row < b.row;
      return a.col < b.col;
    });
    out[mi].truncated = static_cast<int>(hits.size()) < k;
    hits.resize(std::min<size_t>(hits.size(), static_cast<size_t>(k)));
    out[mi].hits = std::move(hits);
  }
  return out;
}

TopKResult top_k(const Dataset& data, Split split, const ArchitectureSpec& arch,
                 const Params& params, int layer, int map, int k) {
  return top_k_scan(data, split, arch, params, layer, {map}, k)[0];
}

namespace {

// Contrast-normalizes a (1,c,h,w) crop to [0,255]; constant maps to mid-gray.
Tensor normalize_cell(const Tensor& t) {
  double lo = t.data()[0], hi = t.data()[0];
  for (int64_t i = 0; i < t.size(); ++i) {
    lo = std::min(lo, t.data()[i]);
    hi = std::max(hi, t.data()[i]);
  }
  Tensor out(t.shape());
  if (hi - lo < 1e-12) {
    for (int64_t i = 0; i < out.size(); ++i) out.data()[i] = 128.0;
    return out;
  }
  for (int64_t i = 0; i < out.size(); ++i)
    out.data()[i] = (t.data()[i] - lo) / (hi - lo) * 255.0;
  return out;
}

Tensor crop_box(const Tensor& img, const RfBox& box) {
  const Extent4& s = img.shape();
  int64_t h = std::max<int64_t>(1, box.height());
  int64_t w = std::max<int64_t>(1, box.width());
  Tensor out({1, s.c, h, w}, 0.0);
  for (int64_t c = 0; c < s.c; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        int64_t sy = box.y0 + y;
        int64_t sx = box.x0 + x;
        if (sy < s.h && sx < s.w) out.at(0, c, y, x) = img.at(0, c, sy, sx);
      }
  return out;
}

}  // namespace

void render_grid(const std::vector<ProjectionResult>& projections,
                 const std::vector<Tensor>& patches, int rows, int cols,
                 const std::string& path) {
  if (projections.size() != patches.size())
    throw InvalidArgumentError("render_grid: projection and patch counts differ");
  if (projections.empty()) throw InvalidArgumentError("render_grid: nothing to render");
  if (static_cast<size_t>(rows) * static_cast<size_t>(cols) < projections.size())
    throw InvalidArgumentError("render_grid: layout smaller than the cell count");

  int64_t cell_h = 1, cell_w = 1;
  for (const ProjectionResult& p : projections) {
    cell_h = std::max(cell_h, std::max<int64_t>(1, p.box.height()));
    cell_w = std::max(cell_w, std::max<int64_t>(1, p.box.width()));
  }
  const int64_t margin = 2;
  const int64_t block_w = cols * (cell_w + margin) + margin;
  const int64_t block_h = rows * (cell_h + margin) + margin;
  const int64_t gap = 6;
  Tensor canvas({1, 3, block_h, 2 * block_w + gap}, 40.0);

  auto blit = [&](const Tensor& cell, int64_t oy, int64_t ox) {
    const Extent4& s = cell.shape();
    for (int64_t c = 0; c < 3; ++c) {
      int64_t sc = std::min<int64_t>(c, s.c - 1);  // gray inputs replicate
      for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
          canvas.at(0, c, oy + y, ox + x) = cell.at(0, sc, y, x);
    }
  };

  for (size_t i = 0; i < projections.size(); ++i) {
    int64_t r = static_cast<int64_t>(i) / cols;
    int64_t ccol = static_cast<int64_t>(i) % cols;
    int64_t oy = margin + r * (cell_h + margin);
    int64_t ox = margin + ccol * (cell_w + margin);
    Tensor proj_cell = normalize_cell(crop_box(projections[i].image, projections[i].box));
    blit(proj_cell, oy, ox);
    Tensor patch_cell = crop_box(patches[i], projections[i].box);
    blit(patch_cell, oy, block_w + gap + ox);
  }
  save_image(canvas, path);
}

}  // namespace convscope
