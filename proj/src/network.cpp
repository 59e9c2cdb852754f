#include "convscope/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "convscope/errors.hpp"

namespace convscope {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "pool";
    case LayerKind::Lrn: return "lrn";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::SoftmaxClassifier: return "softmax";
  }
  return "?";
}

namespace {

std::string junction(int layer, const LayerDesc& d) {
  return "layer " + std::to_string(layer) + " (" + layer_kind_name(d.kind) + ")";
}

}  // namespace

std::vector<Extent4> infer_shapes(const ArchitectureSpec& arch) {
  if (arch.input.c <= 0 || arch.input.h <= 0 || arch.input.w <= 0)
    throw ShapeError("architecture input extents must be positive");
  std::vector<Extent4> shapes;
  shapes.reserve(arch.layers.size());
  Extent4 cur{1, arch.input.c, arch.input.h, arch.input.w};
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& d = arch.layers[i];
    const int li = static_cast<int>(i);
    try {
      switch (d.kind) {
        case LayerKind::Conv:
          if (d.out_channels < 1) throw ShapeError("conv needs out channels >= 1");
          if (d.kernel < 1) throw ShapeError("conv needs kernel >= 1");
          cur = conv_out_shape(cur, d.out_channels, d.kernel, d.stride, d.pad, false);
          break;
        case LayerKind::MaxPool:
          if (d.kernel < 1 || d.kernel > cur.h || d.kernel > cur.w)
            throw ShapeError("pool window must fit inside its input");
          cur = {cur.n, cur.c, conv_out_dim(cur.h, d.kernel, d.stride, 0, d.ceil_mode),
                 conv_out_dim(cur.w, d.kernel, d.stride, 0, d.ceil_mode)};
          break;
        case LayerKind::Relu:
        case LayerKind::Lrn:
        case LayerKind::Dropout:
          break;
        case LayerKind::Flatten:
          cur = {cur.n, cur.c * cur.h * cur.w, 1, 1};
          break;
        case LayerKind::FullyConnected:
          if (d.units < 1) throw ShapeError("fc needs units >= 1");
          if (cur.h != 1 || cur.w != 1)
            throw ShapeError("fc requires flattened input (insert a flatten layer)");
          cur = {cur.n, d.units, 1, 1};
          break;
        case LayerKind::SoftmaxClassifier:
          if (d.classes < 2) throw ShapeError("softmax needs classes >= 2");
          if (cur.h != 1 || cur.w != 1)
            throw ShapeError("softmax requires flattened input (insert a flatten layer)");
          cur = {cur.n, d.classes, 1, 1};
          break;
      }
    } catch (const Error& e) {
      throw ShapeError("at " + junction(li, d) + ": " + e.what());
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate_arch(const ArchitectureSpec& arch) {
  if (arch.layers.empty()) throw ShapeError("architecture has no layers");
  int softmax_count = 0;
  for (const LayerDesc& d : arch.layers)
    if (d.kind == LayerKind::SoftmaxClassifier) ++softmax_count;
  if (softmax_count != 1)
    throw ShapeError("architecture must contain exactly one softmax classifier");
  if (arch.layers.back().kind != LayerKind::SoftmaxClassifier)
    throw ShapeError("the softmax classifier must be the last layer");
  for (const LayerDesc& d : arch.layers) {
    if (d.kind == LayerKind::Dropout && (d.rate < 0.0 || d.rate >= 1.0))
      throw InvalidArgumentError("dropout rate must be in [0, 1)");
    if (d.kind == LayerKind::Lrn && (d.lrn.n_adj < 1 || d.lrn.n_adj % 2 == 0))
      throw InvalidArgumentError("lrn neighborhood must be odd and >= 1");
  }
  infer_shapes(arch);
}

int64_t Params::count() const {
  int64_t total = 0;
  for (const LayerParams& lp : layers)
    total += lp.weights.size() + static_cast<int64_t>(lp.bias.size());
  return total;
}

Params init_params(const ArchitectureSpec& arch, double weight_std, Rng& rng) {
  std::vector<Extent4> shapes = infer_shapes(arch);
  Params p;
  p.layers.resize(arch.layers.size());
  Extent4 cur{1, arch.input.c, arch.input.h, arch.input.w};
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& d = arch.layers[i];
    LayerParams& lp = p.layers[i];
    if (d.kind == LayerKind::Conv) {
      lp.weights = Tensor({d.out_channels, cur.c, d.kernel, d.kernel});
      lp.bias.assign(static_cast<size_t>(d.out_channels), 0.0);
    } else if (d.kind == LayerKind::FullyConnected ||
               d.kind == LayerKind::SoftmaxClassifier) {
      int64_t out = d.kind == LayerKind::FullyConnected ? d.units : d.classes;
      int64_t in_dim = cur.c * cur.h * cur.w;
      lp.weights = Tensor({out, in_dim, 1, 1});
      lp.bias.assign(static_cast<size_t>(out), 0.0);
    }
    for (int64_t j = 0; j < lp.weights.size(); ++j)
      lp.weights.data()[j] = rng.normal(0.0, weight_std);
    cur = shapes[i];
  }
  return p;
}

int64_t param_count(const ArchitectureSpec& arch) {
  std::vector<Extent4> shapes = infer_shapes(arch);
  int64_t total = 0;
  Extent4 cur{1, arch.input.c, arch.input.h, arch.input.w};
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& d = arch.layers[i];
    if (d.kind == LayerKind::Conv)
      total += static_cast<int64_t>(d.out_channels) * cur.c * d.kernel * d.kernel +
               d.out_channels;
    else if (d.kind == LayerKind::FullyConnected)
      total += static_cast<int64_t>(d.units) * cur.c * cur.h * cur.w + d.units;
    else if (d.kind == LayerKind::SoftmaxClassifier)
      total += static_cast<int64_t>(d.classes) * cur.c * cur.h * cur.w + d.classes;
    cur = shapes[i];
  }
  return total;
}

ActivationRecord net_forward(const ArchitectureSpec& arch, const Params& params,
                             const Tensor& in, Mode mode, Rng* rng) {
  const Extent4& s = in.shape();
  if (s.c != arch.input.c || s.h != arch.input.h || s.w != arch.input.w)
    throw ShapeError("input shape does not match architecture input");
  if (params.layers.size() != arch.layers.size())
    throw ShapeError("parameter list does not match architecture layer count");
  if (mode == Mode::Train && rng == nullptr)
    throw InvalidArgumentError("train-mode forward needs an rng for dropout");

  ActivationRecord rec;
  rec.mode = mode;
  rec.input = in;
  rec.outputs.reserve(arch.layers.size());
  const Tensor* cur = &rec.input;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerDesc& d = arch.layers[i];
    const LayerParams& lp = params.layers[i];
    Tensor out;
    switch (d.kind) {
      case LayerKind::Conv: {
        ConvParams cp{lp.weights, lp.bias, d.stride, d.pad};
        out = conv_forward(*cur, cp);
        break;
      }
      case LayerKind::Relu:
        out = relu_forward(*cur);
        break;
      case LayerKind::MaxPool: {
        PoolResult pr = maxpool_forward(*cur, d.kernel, d.stride, d.ceil_mode);
        rec.switches.emplace(static_cast<int>(i), std::move(pr.switches));
        out = std::move(pr.out);
        break;
      }
      case LayerKind::Lrn:
        out = lrn_forward(*cur, d.lrn);
        break;
      case LayerKind::Flatten:
        out = cur->reshaped({cur->shape().n, cur->shape().c * cur->shape().h * cur->shape().w, 1, 1});
        break;
      case LayerKind::FullyConnected:
        out = fc_forward(*cur, lp.weights, lp.bias);
        break;
      case LayerKind::Dropout: {
        if (mode == Mode::Train) {
          DropoutResult dr = dropout_apply(*cur, d.rate, *rng, mode);
          rec.dropout_masks.emplace(static_cast<int>(i), std::move(dr.mask));
          out = std::move(dr.out);
        } else {
          out = *cur;
        }
        break;
      }
      case LayerKind::SoftmaxClassifier:
        out = fc_forward(*cur, lp.weights, lp.bias);  // logits; softmax on demand
        break;
    }
    rec.outputs.push_back(std::move(out));
    cur = &rec.outputs.back();
  }
  return rec;
}

std::vector<std::vector<double>> probabilities(const ActivationRecord& record) {
  const Tensor& logits = record.final_logits();
  const Extent4& s = logits.shape();
  std::vector<std::vector<double>> out(static_cast<size_t>(s.n));
  for (int64_t n = 0; n < s.n; ++n) {
    std::span<const double> row(logits.data() + logits.offset(n, 0, 0, 0),
                                static_cast<size_t>(s.c));
    out[static_cast<size_t>(n)] = softmax(row);
  }
  return out;
}

BatchLoss batch_loss(const ActivationRecord& record, const std::vector<int>& labels) {
  const Tensor& logits = record.final_logits();
  const Extent4& s = logits.shape();
  if (static_cast<int64_t>(labels.size()) != s.n)
    throw ShapeError("label count does not match batch size");
  BatchLoss r;
  r.grad_logits = Tensor(s, 0.0);
  int wrong = 0;
  for (int64_t n = 0; n < s.n; ++n) {
    std::span<const double> row(logits.data() + logits.offset(n, 0, 0, 0),
                                static_cast<size_t>(s.c));
    SoftmaxXent sx = softmax_xent(row, labels[static_cast<size_t>(n)]);
    r.loss += sx.loss;
    int argmax = 0;
    for (size_t c = 1; c < sx.probs.size(); ++c)
      if (sx.probs[c] > sx.probs[static_cast<size_t>(argmax)]) argmax = static_cast<int>(c);
    if (argmax != labels[static_cast<size_t>(n)]) ++wrong;
    for (int64_t c = 0; c < s.c; ++c)
      r.grad_logits.at(n, c, 0, 0) = sx.grad_logits[static_cast<size_t>(c)] / static_cast<double>(s.n);
  }
  r.loss /= static_cast<double>(s.n);
  r.error_rate = static_cast<double>(wrong) / static_cast<double>(s.n);
  return r;
}

Grads net_backward(const ArchitectureSpec& arch, const Params& params,
                   const ActivationRecord& record, const Tensor& grad_logits,
                   const std::vector<int>& frozen_layers) {
  if (record.outputs.size() != arch.layers.size())
    throw ShapeError("record does not match architecture");
  if (!(grad_logits.shape() == record.final_logits().shape()))
    throw ShapeError("grad_logits shape does not match final logits");

  std::vector<bool> frozen(arch.layers.size(), false);
  for (int f : frozen_layers) {
    if (f < 0 || static_cast<size_t>(f) >= arch.layers.size())
      throw InvalidArgumentError("frozen layer index out of range");
    frozen[static_cast<size_t>(f)] = true;
  }

  Grads g;
  g.layers.resize(arch.layers.size());
  g.present.assign(arch.layers.size(), false);

  Tensor grad = grad_logits;
  for (int i = static_cast<int>(arch.layers.size()) - 1; i >= 0; --i) {
    const LayerDesc& d = arch.layers[static_cast<size_t>(i)];
    const LayerParams& lp = params.layers[static_cast<size_t>(i)];
    const Tensor& layer_in = i == 0 ? record.input : record.outputs[static_cast<size_t>(i - 1)];
    switch (d.kind) {
      case LayerKind::Conv: {
        ConvParams cp{lp.weights, lp.bias, d.stride, d.pad};
        ConvGrads cg = conv_backward(layer_in, cp, grad);
        if (!frozen[static_cast<size_t>(i)]) {
          g.layers[static_cast<size_t>(i)] = {std::move(cg.filters), std::move(cg.bias)};
          g.present[static_cast<size_t>(i)] = true;
        }
        grad = std::move(cg.input);
        break;
      }
      case LayerKind::Relu:
        grad = relu_backward(layer_in, grad);
        break;
      case LayerKind::MaxPool:
        grad = maxpool_backward(record.switches.at(i), grad);
        break;
      case LayerKind::Lrn:
        grad = lrn_backward(layer_in, d.lrn, grad);
        break;
      case LayerKind::Flatten:
        grad = grad.reshaped(layer_in.shape());
        break;
      case LayerKind::FullyConnected:
      case LayerKind::SoftmaxClassifier: {
        FcGrads fg = fc_backward(layer_in, lp.weights, grad);
        if (!frozen[static_cast<size_t>(i)]) {
          g.layers[static_cast<size_t>(i)] = {std::move(fg.weights), std::move(fg.bias)};
          g.present[static_cast<size_t>(i)] = true;
        }
        grad = std::move(fg.input);
        break;
      }
      case LayerKind::Dropout: {
        if (record.mode == Mode::Train) {
          const Tensor& mask = record.dropout_masks.at(i);
          Tensor masked(grad.shape());
          for (int64_t j = 0; j < grad.size(); ++j)
            masked.data()[j] = grad.data()[j] * mask.data()[j];
          grad = std::move(masked);
        }
        break;
      }
    }
  }
  return g;
}

std::vector<StagePoint> feature_stages(const ArchitectureSpec& arch) {
  // A Conv or FullyConnected opens a block; Relu/MaxPool/Lrn/Dropout extend
  // it; anything else closes it. The stage point is the block's last layer.
  std::vector<StagePoint> stages;
  int block_count = 0;
  int block_end = -1;
  std::string block_name;
  auto close = [&] {
    if (block_end >= 0) stages.push_back({block_end, block_name});
    block_end = -1;
  };
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    switch (arch.layers[i].kind) {
      case LayerKind::Conv:
        close();
        block_name = "conv" + std::to_string(++block_count);
        block_end = static_cast<int>(i);
        break;
      case LayerKind::FullyConnected:
        close();
        block_name = "fc" + std::to_string(++block_count);
        block_end = static_cast<int>(i);
        break;
      case LayerKind::Relu:
      case LayerKind::MaxPool:
      case LayerKind::Lrn:
      case LayerKind::Dropout:
        if (block_end >= 0) block_end = static_cast<int>(i);
        break;
      case LayerKind::Flatten:
      case LayerKind::SoftmaxClassifier:
        close();
        break;
    }
  }
  close();
  return stages;
}

StagePoint top_conv_stage(const ArchitectureSpec& arch) {
  std::vector<StagePoint> stages = feature_stages(arch);
  StagePoint best{-1, ""};
  for (const StagePoint& sp : stages)
    if (sp.name.rfind("conv", 0) == 0) best = sp;
  if (best.layer < 0) throw ShapeError("architecture has no convolutional stage");
  return best;
}

}  // namespace convscope
