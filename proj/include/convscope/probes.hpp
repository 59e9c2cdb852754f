#pragma once

#include <string>
#include <vector>

#include "convscope/dataset.hpp"
#include "convscope/imageops.hpp"
#include "convscope/network.hpp"

namespace convscope {

// Analysis instruments that slide occluders or geometric transforms over an
// input and watch the model: occlusion sensitivity maps, part-correspondence
// scoring, and transformation-invariance curves. All run in eval mode on
// preprocessed (mean-subtracted) inputs, so the gray occluder is fill = 0.

struct OcclusionOptions {
  int layer = -1;        // feature layer for the activation map; -1 = top conv stage
  int map = -1;          // feature map; -1 resolves the strongest on the clean image
  int size = 0;          // occluder side in px; 0 = 25% of the input side
  int stride = 4;        // occluder step in px
  double fill = 0.0;     // occluder value in preprocessed space (0 = dataset mean)
};

struct OcclusionReport {
  int grid_h = 0, grid_w = 0;
  int occ_size = 0, occ_stride = 0;
  double fill = 0.0;
  int layer = -1, map = -1;
  std::vector<double> prob_map;   // P(true class) per occluder position, row-major
  std::vector<double> act_map;    // summed activation of the chosen map
  std::vector<int> label_map;     // argmax class per position
  std::vector<int64_t> pos_y;     // occluder top-left per grid cell
  std::vector<int64_t> pos_x;
  double baseline_prob = 0.0;     // unoccluded
  double baseline_act = 0.0;
  int baseline_label = -1;
};

/// Slides the occluder over the preprocessed image; `label` is the true class.
OcclusionReport occlusion_sweep(const ArchitectureSpec& arch, const Params& params,
                                const Tensor& input, int label,
                                const OcclusionOptions& opt);

/// Flattened activation difference at `layer` between the clean and the
/// occluded input, eval mode.
std::vector<double> feature_difference(const ArchitectureSpec& arch, const Params& params,
                                       const Tensor& input, const Tensor& occluded,
                                       int layer);

struct CorrespondenceResult {
  double mean = 0.0;  // mean normalized Hamming distance over vector pairs
  double stddev = 0.0;
  int pairs = 0;
};

// Three-valued sign consistency of the difference vectors: signs with a
// dead zone of sign_tau, normalized Hamming distance per unordered pair,
// mean and standard deviation over pairs. Lower means more consistent.
CorrespondenceResult correspondence_score(const std::vector<std::vector<double>>& eps_list,
                                          double sign_tau = 1e-6);

/// Rectangle fill; landmark-based occlusion resolves the rect through the
/// dataset's annotation file.
Tensor occlude_rect(const Tensor& image, const Rect& rect, double fill);
Tensor occlude_part(const Dataset& data, int index, const Tensor& preprocessed,
                    const std::string& part, double fill);

enum class TransformKind { VerticalTranslate, Scale, Rotate };

TransformKind transform_from_name(const std::string& name);
const char* transform_name(TransformKind t);

struct InvarianceCurve {
  TransformKind kind = TransformKind::VerticalTranslate;
  int image_index = -1;
  std::vector<double> sweep;                        // px, ratio, or degrees
  std::vector<std::vector<double>> distances;       // [layer][sweep] Euclidean
  std::vector<double> prob_true;                    // [sweep]
};

struct InvarianceOptions {
  TransformKind kind = TransformKind::VerticalTranslate;
  std::vector<double> sweep;       // must include the identity value
  std::vector<int> layers;         // record layers to measure
  Resample resample = Resample::Bilinear;
  double fill = 0.0;
};

/// One curve per image; distances are to the untransformed feature vector.
std::vector<InvarianceCurve> invariance_sweep(const ArchitectureSpec& arch,
                                              const Params& params,
                                              const std::vector<Tensor>& inputs,
                                              const std::vector<int>& labels,
                                              const InvarianceOptions& opt);

/// Applies the probe transform to a preprocessed image.
Tensor apply_transform(const Tensor& input, TransformKind kind, double value,
                       Resample resample, double fill);

/// RMS distance of per-image features to their centroid: the per-layer scale
/// used to normalize invariance distances.
double feature_spread(const ArchitectureSpec& arch, const Params& params,
                      const std::vector<Tensor>& inputs, int layer);

// CSV / PNG writers for the reports.
void write_occlusion_csv(const OcclusionReport& rep, const std::string& path);
void write_occlusion_pngs(const OcclusionReport& rep, const std::string& prob_png,
                          const std::string& act_png, const std::string& label_png,
                          const std::string& legend_json,
                          const std::vector<std::string>& class_names, int cell_px = 12);
void write_invariance_csv(const std::vector<InvarianceCurve>& curves,
                          const std::vector<int>& layers, const std::string& path);

}  // namespace convscope
