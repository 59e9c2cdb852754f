#pragma once

#include <string>
#include <vector>

#include "convscope/dataset.hpp"
#include "convscope/network.hpp"
#include "convscope/rng.hpp"

namespace convscope {

// Frozen-feature generalization: extract activations from a fixed model,
// train a shallow head (softmax regression or one-vs-rest linear SVM) on
// them, and evaluate with the unweighted per-class accuracy protocol.

struct FeatureMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  int layer = -1;
  uint64_t checkpoint_hash = 0;
  std::vector<float> data;     // row-major examples x features
  std::vector<int> labels;     // parallel to rows
  std::vector<int> indices;    // dataset entry per row

  float at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
};

/// Eval-mode activations at `layer`, one flattened row per example.
/// layer == -1 extracts the preprocessed input itself.
FeatureMatrix extract_features(const Dataset& data, const std::vector<int>& indices,
                               const ArchitectureSpec& arch, const Params& params,
                               int layer, uint64_t checkpoint_hash = 0);

/// Binary feature-matrix file: magic, dims, layer, checkpoint hash, then
/// little-endian 32-bit floats. Labels ride along after the matrix body.
void save_features(const FeatureMatrix& m, const std::string& path);
FeatureMatrix load_features(const std::string& path);

enum class HeadKind { Softmax, LinearSvm };

HeadKind head_from_name(const std::string& name);
const char* head_name(HeadKind k);

struct HeadConfig {
  HeadKind kind = HeadKind::Softmax;
  int classes = 0;          // 0 = infer from labels
  int epochs = 40;
  double lr = 0.05;
  double svm_c = 1.0;       // hinge slack weight; lambda = 1 / (C * n)
  int batch = 32;
  uint64_t seed = 0;
  bool standardize = true;  // per-feature standardization before the head
};

struct HeadModel {
  HeadKind kind = HeadKind::Softmax;
  int classes = 0;
  Tensor weights;               // (classes, dim, 1, 1)
  std::vector<double> bias;
  std::vector<double> feat_mean;   // standardization, empty when disabled
  std::vector<double> feat_scale;
};

/// Trains the head by seeded SGD; deterministic for a fixed config.
HeadModel train_head(const FeatureMatrix& feats, const HeadConfig& cfg);

std::vector<int> head_predict(const HeadModel& head, const FeatureMatrix& feats);
std::vector<double> head_scores(const HeadModel& head, const float* row, int64_t cols);

struct PerClassResult {
  double mean_accuracy = 0.0;          // unweighted mean over classes
  std::vector<double> per_class;
};

/// Per-class accuracies averaged unweighted; every class must appear.
PerClassResult evaluate_per_class(const HeadModel& head, const FeatureMatrix& feats);

struct SweepPoint {
  int per_class_count = 0;
  double mean_accuracy = 0.0;  // across folds
  double stddev = 0.0;
  std::vector<double> fold_accuracy;
};

// For each training-set size: sample count images per class (seeded per
// fold), train a head on frozen features, evaluate per-class on the test
// rows. Mirrors the Caltech 15/30-per-class protocol.
std::vector<SweepPoint> size_sweep(const FeatureMatrix& train_feats,
                                   const FeatureMatrix& test_feats,
                                   const std::vector<int>& per_class_counts, int folds,
                                   const HeadConfig& cfg);

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path);

// Architecture surgery for ablation studies: remove layers or resize conv
// maps / fc units, then revalidate. Downstream dimensions are recomputed by
// shape inference; a broken junction is reported by layer.
struct ArchEdit {
  enum class Kind { RemoveLayer, Resize } kind = Kind::RemoveLayer;
  int layer = 0;
  int new_size = 0;  // Resize: conv out channels or fc units
};

ArchitectureSpec ablate(const ArchitectureSpec& arch, const std::vector<ArchEdit>& edits);

/// Parses "remove:INDEX" / "resize:INDEX=SIZE" edit strings.
std::vector<ArchEdit> parse_edits(const std::vector<std::string>& specs);

}  // namespace convscope
