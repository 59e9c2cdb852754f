#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "convscope/rng.hpp"
#include "convscope/tensor.hpp"

namespace convscope {

enum class Mode { Train, Eval };

/// Learned convolution parameters: square filters plus one bias per output map.
struct ConvParams {
  Tensor filters;             // (out_c, in_c, k, k)
  std::vector<double> bias;   // out_c entries
  int stride = 1;
  int pad = 0;

  int64_t out_channels() const { return filters.shape().n; }
  int64_t in_channels() const { return filters.shape().c; }
  int64_t kernel() const { return filters.shape().h; }
};

/// Across-channel normalization hyperparameters.
struct LrnParams {
  int n_adj = 5;       // channel neighborhood size, odd
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;

  bool operator==(const LrnParams&) const = default;
};

// Argmax bookkeeping from max pooling. One (row, col) input coordinate per
// pooled output element; the deconvnet reuses these to route reconstructions
// back to the positions that produced each pooled value.
struct SwitchMap {
  Extent4 in_shape;
  Extent4 out_shape;
  int window = 0;
  int stride = 0;
  bool ceil_mode = false;
  std::vector<int32_t> rows;  // argmax input row, per pooled element
  std::vector<int32_t> cols;  // argmax input col, per pooled element
};

/// Output extent of a square sliding window: floor division for convolution,
/// ceil for pooling layers configured with ceil_mode.
int64_t conv_out_dim(int64_t in, int k, int stride, int pad, bool ceil_mode);
Extent4 conv_out_shape(const Extent4& in, int64_t out_c, int k, int stride, int pad,
                       bool ceil_mode = false);

/// out[n,o,y,x] = bias[o] + sum_{c,i,j} in[n,c,y*s-pad+i,x*s-pad+j] * f[o,c,i,j],
/// out-of-bounds input reads as zero.
Tensor conv_forward(const Tensor& in, const ConvParams& p);

struct ConvGrads {
  Tensor input;
  Tensor filters;
  std::vector<double> bias;
};

/// Exact vector-Jacobian products of conv_forward.
ConvGrads conv_backward(const Tensor& in, const ConvParams& p, const Tensor& grad_out);

Tensor relu_forward(const Tensor& in);
Tensor relu_backward(const Tensor& in, const Tensor& grad_out);

struct PoolResult {
  Tensor out;
  SwitchMap switches;
};

/// Max over each window; ties broken by the first element in row-major scan
/// order. The tie rule is part of the contract because switches feed the
/// deconvnet.
PoolResult maxpool_forward(const Tensor& in, int window, int stride, bool ceil_mode);

/// Routes grad_out to the recorded argmax positions, accumulating overlaps.
Tensor maxpool_backward(const SwitchMap& switches, const Tensor& grad_out);

/// out[n,c,y,x] = in[n,c,y,x] / (k + alpha * sum_{c' in N(c)} in[n,c',y,x]^2)^beta
/// with N(c) the n_adj-wide channel window clamped at the boundaries.
Tensor lrn_forward(const Tensor& in, const LrnParams& p);
Tensor lrn_backward(const Tensor& in, const LrnParams& p, const Tensor& grad_out);

/// out = W*in + b over flattened rows; in is (n, d, 1, 1), weights (out, d, 1, 1).
Tensor fc_forward(const Tensor& in, const Tensor& weights, const std::vector<double>& bias);

struct FcGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

FcGrads fc_backward(const Tensor& in, const Tensor& weights, const Tensor& grad_out);

struct DropoutResult {
  Tensor out;
  Tensor mask;  // survivor entries hold 1/(1-rate), dropped entries 0
};

/// Inverted dropout: train mode zeroes with probability rate and rescales
/// survivors by 1/(1-rate); eval mode is the identity.
DropoutResult dropout_apply(const Tensor& in, double rate, Rng& rng, Mode mode);

struct SoftmaxXent {
  double loss = 0.0;
  std::vector<double> probs;
  std::vector<double> grad_logits;  // probs - onehot(label)
};

/// Max-subtracted softmax with cross-entropy loss against an integer label.
SoftmaxXent softmax_xent(std::span<const double> logits, int label);

/// Softmax probabilities alone (same stabilization).
std::vector<double> softmax(std::span<const double> logits);

}  // namespace convscope
