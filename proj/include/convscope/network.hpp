#pragma once

#include <map>
#include <string>
#include <vector>

#include "convscope/layers.hpp"
#include "convscope/rng.hpp"
#include "convscope/tensor.hpp"

namespace convscope {

enum class LayerKind {
  Conv,
  Relu,
  MaxPool,
  Lrn,
  Flatten,
  FullyConnected,
  Dropout,
  SoftmaxClassifier,
};

const char* layer_kind_name(LayerKind k);

/// One layer in an architecture. Only the fields relevant to `kind` are used;
/// input dimensions are always inferred from the preceding layer.
struct LayerDesc {
  LayerKind kind = LayerKind::Relu;
  int out_channels = 0;     // Conv
  int kernel = 0;           // Conv, MaxPool
  int stride = 1;           // Conv, MaxPool
  int pad = 0;              // Conv
  bool ceil_mode = false;   // MaxPool
  LrnParams lrn;            // Lrn
  int units = 0;            // FullyConnected
  double rate = 0.0;        // Dropout
  int classes = 0;          // SoftmaxClassifier

  bool operator==(const LayerDesc&) const = default;
};

/// Ordered layer list plus the (c, h, w) input geometry it expects.
struct ArchitectureSpec {
  Extent4 input{1, 0, 0, 0};  // n is a placeholder; batch comes from the data
  std::vector<LayerDesc> layers;

  bool operator==(const ArchitectureSpec&) const = default;
};

// Shape inference for batch size 1. Throws ShapeError naming the first broken
// junction. A valid spec has exactly one SoftmaxClassifier and it is last.
std::vector<Extent4> infer_shapes(const ArchitectureSpec& arch);
void validate_arch(const ArchitectureSpec& arch);

/// Learned tensors of one layer; empty for layers without parameters.
/// Conv: weights (out,in,k,k); FullyConnected/SoftmaxClassifier: weights (out,in,1,1).
struct LayerParams {
  Tensor weights;
  std::vector<double> bias;

  bool empty() const { return weights.size() == 0 && bias.empty(); }
  bool operator==(const LayerParams&) const = default;
};

struct Params {
  std::vector<LayerParams> layers;

  int64_t count() const;
  bool operator==(const Params&) const = default;
};

/// Gaussian init N(0, weight_std^2) for all weights, zero biases.
Params init_params(const ArchitectureSpec& arch, double weight_std, Rng& rng);

int64_t param_count(const ArchitectureSpec& arch);

// Everything one forward pass produced: each layer's output plus the switch
// maps and dropout masks needed to run the deconvnet or the backward pass.
struct ActivationRecord {
  Mode mode = Mode::Eval;
  Tensor input;
  std::vector<Tensor> outputs;           // per layer, logits for the classifier
  std::map<int, SwitchMap> switches;     // keyed by pooling layer index
  std::map<int, Tensor> dropout_masks;   // keyed by dropout layer index

  const Tensor& output_of(int layer) const { return outputs.at(static_cast<size_t>(layer)); }
  const Tensor& final_logits() const { return outputs.back(); }
};

/// Runs the network; rng is only needed in train mode (dropout masks).
ActivationRecord net_forward(const ArchitectureSpec& arch, const Params& params,
                             const Tensor& in, Mode mode, Rng* rng = nullptr);

/// Softmax rows of the final logits, one per batch item.
std::vector<std::vector<double>> probabilities(const ActivationRecord& record);

struct BatchLoss {
  double loss = 0.0;            // mean cross-entropy over the batch
  double error_rate = 0.0;      // fraction of argmax misclassifications
  Tensor grad_logits;           // d(mean loss)/d(logits)
};

BatchLoss batch_loss(const ActivationRecord& record, const std::vector<int>& labels);

/// Per-layer parameter gradients. `present[i]` is false for layers listed as
/// frozen (their gradients are not computed at all) and for layers without
/// parameters.
struct Grads {
  std::vector<LayerParams> layers;
  std::vector<bool> present;
};

Grads net_backward(const ArchitectureSpec& arch, const Params& params,
                   const ActivationRecord& record, const Tensor& grad_logits,
                   const std::vector<int>& frozen_layers = {});

// Named feature extraction points: the end of each conv block (after its
// pool / lrn) and of each fully-connected block. "Layer 1..top" in probe and
// transfer experiments indexes this list.
struct StagePoint {
  int layer = 0;       // index into arch.layers / record.outputs
  std::string name;    // conv1, conv2, ..., fc6, ...
};

std::vector<StagePoint> feature_stages(const ArchitectureSpec& arch);

/// Index of the last conv-block stage (the "top convolutional layer").
StagePoint top_conv_stage(const ArchitectureSpec& arch);

}  // namespace convscope
