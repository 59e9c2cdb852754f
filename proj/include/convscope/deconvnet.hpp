#pragma once

#include <string>
#include <vector>

#include "convscope/dataset.hpp"
#include "convscope/network.hpp"

namespace convscope {

// Reverse pathway through a trained network: unpool with the recorded
// switches, rectify, then filter with the transposed kernels, repeated until
// pixel space. A probe of the model, not a generative path.

enum class KeepPolicy { SingleActivation, WholeMap };

struct ActivationSelection {
  int layer = 0;            // index into the record's outputs
  int map = 0;              // feature map (channel)
  int row = -1;             // spatial coordinate; -1 selects the strongest
  int col = -1;
  KeepPolicy policy = KeepPolicy::SingleActivation;
};

/// Half-open pixel box [y0, y1) x [x0, x1), clipped to the input frame.
struct RfBox {
  int64_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  int64_t height() const { return y1 - y0; }
  int64_t width() const { return x1 - x0; }
};

/// Receptive-field geometry of one layer's outputs: every output element sees
/// `size` input pixels starting at `offset + coordinate * stride`.
struct RfInfo {
  int64_t size = 1;
  int64_t stride = 1;
  int64_t offset = 0;
};

RfInfo receptive_field(const ArchitectureSpec& arch, int layer);
RfBox receptive_box(const ArchitectureSpec& arch, int layer, int64_t row, int64_t col);

/// Places each value at its recorded argmax coordinate, summing overlaps;
/// zeros elsewhere. Routing is identical to maxpool_backward.
Tensor unpool(const Tensor& recon, const SwitchMap& switches);

/// Transposed filtering: correlation of the (implicitly stride-dilated)
/// reconstruction with the flipped filters, bias ignored. Bit-identical to
/// the grad_in output of conv_backward. out_h/out_w select the layer-beneath
/// extent when the convolution's floor division made it ambiguous; 0 picks
/// the minimal one.
Tensor deconv_filter(const Tensor& recon, const ConvParams& p, int64_t out_h = 0,
                     int64_t out_w = 0);

struct ProjectionResult {
  Tensor image;             // pixel-space tensor, network-input shaped
  int image_index = -1;     // caller-provided source id
  double activation = 0.0;  // value of the selected activation
  RfBox box;                // analytic receptive field of the selection
  bool zero_activation = false;
};

/// Projects the selected activation of a batch-1 record to pixel space.
/// Contrast-normalization layers pass reconstructions through unchanged.
ProjectionResult project(const ArchitectureSpec& arch, const Params& params,
                         const ActivationRecord& record, const ActivationSelection& sel);

struct TopHit {
  int image_index = -1;     // dataset entry index
  int64_t row = 0, col = 0;
  double value = 0.0;
};

struct TopKResult {
  std::vector<TopHit> hits;  // descending; ties by (image, row-major coord)
  bool truncated = false;    // dataset had fewer than k images
};

/// Strongest activation of one feature map per image, best k images. A batch
/// of maps shares one dataset scan.
std::vector<TopKResult> top_k_scan(const Dataset& data, Split split,
                                   const ArchitectureSpec& arch, const Params& params,
                                   int layer, const std::vector<int>& maps, int k);

TopKResult top_k(const Dataset& data, Split split, const ArchitectureSpec& arch,
                 const Params& params, int layer, int map, int k);

// Renders projections and their source patches as two side-by-side grids.
// Projections are contrast-normalized per cell to [0, 255] (a constant cell
// renders mid-gray); patches are cropped to each projection's receptive box.
void render_grid(const std::vector<ProjectionResult>& projections,
                 const std::vector<Tensor>& patches, int rows, int cols,
                 const std::string& path);

}  // namespace convscope
