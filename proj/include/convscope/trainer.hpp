#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "convscope/dataset.hpp"
#include "convscope/network.hpp"

namespace convscope {

struct Checkpoint;

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  int batch = 128;
  double dropout_rate = -1.0;    // >= 0 overrides every dropout layer's rate
  double weight_init_std = 1e-2;
  double rms_radius = 1e-1;
  double anneal_factor = 0.1;
  int anneal_patience = 3;
  double anneal_min_improve = 1e-4;
  int max_epochs = 10;
  uint64_t seed = 0;
  std::vector<int> snapshot_epochs;  // 1-based epochs to snapshot
  int target = 0;                    // preprocess resize target; 0 = arch input size
  bool augment_crops = true;         // sample among the 10 train crops

  void check() const;
};

struct OptimizerState {
  std::vector<LayerParams> velocity;  // mirrors parameter shapes
  double lr = 0.0;
  int epochs_since_improvement = 0;
  double best_val_err = -1.0;         // < 0 until the first validation pass

  bool operator==(const OptimizerState&) const = default;
};

enum class PreprocessMode { Train, EvalTenCrop, EvalSingle };

// The 10-crop recipe: resize the smaller side to `target`, center-crop
// target x target, subtract the per-pixel mean, then take the four corner
// crops and the center crop of size crop x crop, each plain and mirrored.
// Train and EvalTenCrop return all ten; EvalSingle returns the center crop.
std::vector<Tensor> preprocess(const Tensor& image, int target, int crop,
                               const Tensor& mean, PreprocessMode mode);

/// v <- momentum*v - lr*g; p <- p + v, for every present gradient.
void sgd_step(Params& params, const Grads& grads, OptimizerState& state,
              const TrainConfig& cfg);

/// Filter slices whose root-mean-square exceeds `radius` are scaled back to
/// exactly that radius; direction is preserved, smaller slices untouched.
void rms_renormalize(Tensor& filters, double radius);
void rms_renormalize_conv_layers(const ArchitectureSpec& arch, Params& params,
                                 double radius);

double filter_slice_rms(const Tensor& filters, int64_t out_channel);

/// Cuts the learning rate by anneal_factor when the validation error has not
/// improved by more than anneal_min_improve for anneal_patience epochs.
void anneal(OptimizerState& state, const std::vector<double>& val_error_history,
            const TrainConfig& cfg);

struct StepInfo {
  int epoch = 0;
  int step = 0;    // global step counter
  double loss = 0.0;
  double error_rate = 0.0;
};

using StepObserver = std::function<void(const StepInfo&, const Params&)>;

/// Full training run. Snapshots and the training-log CSV go to out_dir when
/// it is non-empty. Deterministic for fixed (seed, config, data).
Checkpoint train(const ArchitectureSpec& arch, const Dataset& data, const TrainConfig& cfg,
                 const std::string& out_dir, const StepObserver& observer = nullptr,
                 std::ostream* progress = nullptr);

/// Top-1 accuracy of a checkpointed model over a dataset split.
struct EvalResult {
  double accuracy = 0.0;
  double mean_per_class_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<int> predictions;
};

EvalResult evaluate(const ArchitectureSpec& arch, const Params& params, const Dataset& data,
                    Split split, bool ten_crop = false);

/// Eval-mode forward of one preprocessed input (batch 1 tensor).
Tensor preprocessed_input(const Dataset& data, int index, int target);

}  // namespace convscope
