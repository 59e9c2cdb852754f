#include "convscope/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "convscope/checkpoint.hpp"
#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"
#include "convscope/imageops.hpp"

namespace convscope {

namespace fs = std::filesystem;

void TrainConfig::check() const {
  // lr == 0 is allowed: it expresses a frozen run (parameters stay put)
  if (lr < 0.0) throw InvalidArgumentError("lr must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0)
    throw InvalidArgumentError("momentum must be in [0, 1)");
  if (batch < 1) throw InvalidArgumentError("batch must be >= 1");
  if (max_epochs < 0) throw InvalidArgumentError("max_epochs must be >= 0");
  if (rms_radius <= 0.0) throw InvalidArgumentError("rms_radius must be positive");
  if (anneal_factor <= 0.0 || anneal_factor > 1.0)
    throw InvalidArgumentError("anneal_factor must be in (0, 1]");
  if (anneal_patience < 1) throw InvalidArgumentError("anneal_patience must be >= 1");
  if (dropout_rate >= 1.0) throw InvalidArgumentError("dropout rate must be < 1");
}

std::vector<Tensor> preprocess(const Tensor& image, int target, int crop,
                               const Tensor& mean, PreprocessMode mode) {
  const Extent4& s = image.shape();
  if (s.c != 3) throw InputError("preprocess expects a 3-channel image");
  if (s.h < 1 || s.w < 1) throw InputError("image must be at least 1x1");
  if (crop > target) throw InvalidArgumentError("crop size exceeds resize target");
  if (!(mean.shape() == Extent4{1, 3, target, target}))
    throw ShapeError("mean image must be (1,3,target,target)");

  Tensor base = resize_smaller_to(image, target);
  for (int64_t i = 0; i < base.size(); ++i) base.data()[i] -= mean.data()[i];

  int64_t off = target - crop;
  if (mode == PreprocessMode::EvalSingle)
    return {convscope::crop(base, off / 2, off / 2, crop, crop)};

  // four corners + center, each with and without horizontal flip
  const int64_t ys[5] = {0, 0, off, off, off / 2};
  const int64_t xs[5] = {0, off, 0, off, off / 2};
  std::vector<Tensor> crops;
  crops.reserve(10);
  for (int i = 0; i < 5; ++i) {
    Tensor c = convscope::crop(base, ys[i], xs[i], crop, crop);
    crops.push_back(c);
    crops.push_back(hflip(c));
  }
  return crops;
}

void sgd_step(Params& params, const Grads& grads, OptimizerState& state,
              const TrainConfig& cfg) {
  if (state.velocity.size() != params.layers.size())
    throw ShapeError("optimizer state does not mirror the parameters");
  for (size_t li = 0; li < params.layers.size(); ++li) {
    if (li >= grads.layers.size() || !grads.present[li]) continue;
    LayerParams& p = params.layers[li];
    LayerParams& v = state.velocity[li];
    const LayerParams& g = grads.layers[li];
    if (!p.weights.same_shape(g.weights) || p.bias.size() != g.bias.size())
      throw ShapeError("gradient shapes do not mirror the parameters");
    for (int64_t i = 0; i < p.weights.size(); ++i) {
      double vel = cfg.momentum * v.weights.data()[i] - state.lr * g.weights.data()[i];
      v.weights.data()[i] = vel;
      p.weights.data()[i] += vel;
    }
    for (size_t i = 0; i < p.bias.size(); ++i) {
      double vel = cfg.momentum * v.bias[i] - state.lr * g.bias[i];
      v.bias[i] = vel;
      p.bias[i] += vel;
    }
  }
}

double filter_slice_rms(const Tensor& filters, int64_t out_channel) {
  const Extent4& s = filters.shape();
  int64_t per = s.c * s.h * s.w;
  const double* p = filters.data() + out_channel * per;
  double acc = 0.0;
  for (int64_t i = 0; i < per; ++i) acc += p[i] * p[i];
  return std::sqrt(acc / static_cast<double>(per));
}

void rms_renormalize(Tensor& filters, double radius) {
  if (radius <= 0.0) throw InvalidArgumentError("rms radius must be positive");
  const Extent4& s = filters.shape();
  int64_t per = s.c * s.h * s.w;
  for (int64_t o = 0; o < s.n; ++o) {
    double rms = filter_slice_rms(filters, o);
    if (rms > radius) {
      double scale = radius / rms;
      double* p = filters.data() + o * per;
      for (int64_t i = 0; i < per; ++i) p[i] *= scale;
    }
  }
}

void rms_renormalize_conv_layers(const ArchitectureSpec& arch, Params& params,
                                 double radius) {
  for (size_t li = 0; li < arch.layers.size(); ++li)
    if (arch.layers[li].kind == LayerKind::Conv)
      rms_renormalize(params.layers[li].weights, radius);
}

void anneal(OptimizerState& state, const std::vector<double>& val_error_history,
            const TrainConfig& cfg) {
  if (val_error_history.empty())
    throw InvalidArgumentError("anneal needs a non-empty validation history");
  double latest = val_error_history.back();
  if (state.best_val_err < 0.0 || latest < state.best_val_err - cfg.anneal_min_improve) {
    state.best_val_err = latest;
    state.epochs_since_improvement = 0;
    return;
  }
  ++state.epochs_since_improvement;
  if (state.epochs_since_improvement >= cfg.anneal_patience) {
    state.lr *= cfg.anneal_factor;
    state.epochs_since_improvement = 0;
  }
}

namespace {

ArchitectureSpec apply_dropout_override(ArchitectureSpec arch, double rate) {
  if (rate >= 0.0)
    for (LayerDesc& d : arch.layers)
      if (d.kind == LayerKind::Dropout) d.rate = rate;
  return arch;
}

OptimizerState make_state(const Params& params, double lr) {
  OptimizerState st;
  st.lr = lr;
  st.velocity.resize(params.layers.size());
  for (size_t i = 0; i < params.layers.size(); ++i) {
    if (params.layers[i].empty()) continue;
    st.velocity[i].weights = Tensor(params.layers[i].weights.shape(), 0.0);
    st.velocity[i].bias.assign(params.layers[i].bias.size(), 0.0);
  }
  return st;
}

void abort_on_nonfinite(const ActivationRecord& rec, const ArchitectureSpec& arch,
                        double loss) {
  if (std::isfinite(loss)) return;
  for (size_t i = 0; i < rec.outputs.size(); ++i)
    if (!all_finite(rec.outputs[i]))
      throw NumericError("non-finite loss; first bad activation at layer " +
                         std::to_string(i) + " (" +
                         layer_kind_name(arch.layers[i].kind) + ")");
  throw NumericError("non-finite loss with finite activations (bad labels or logits)");
}

double validation_error(const ArchitectureSpec& arch, const Params& params,
                        const Dataset& data, const std::vector<int>& val_indices,
                        int target, int batch) {
  if (val_indices.empty()) return 0.0;
  const Tensor& mean = data.mean(target);
  int64_t wrong = 0;
  for (size_t start = 0; start < val_indices.size(); start += static_cast<size_t>(batch)) {
    size_t stop = std::min(val_indices.size(), start + static_cast<size_t>(batch));
    Extent4 bs{static_cast<int64_t>(stop - start), arch.input.c, arch.input.h, arch.input.w};
    Tensor in(bs);
    std::vector<int> labels;
    for (size_t i = start; i < stop; ++i) {
      int idx = val_indices[i];
      Tensor one = preprocess(data.image(idx), target, static_cast<int>(arch.input.h), mean,
                              PreprocessMode::EvalSingle)[0];
      std::copy(one.data(), one.data() + one.size(),
                in.data() + static_cast<int64_t>(i - start) * one.size());
      labels.push_back(data.entries()[static_cast<size_t>(idx)].label);
    }
    ActivationRecord rec = net_forward(arch, params, in, Mode::Eval);
    auto probs = probabilities(rec);
    for (size_t i = 0; i < probs.size(); ++i) {
      int argmax = 0;
      for (size_t c = 1; c < probs[i].size(); ++c)
        if (probs[i][c] > probs[i][static_cast<size_t>(argmax)]) argmax = static_cast<int>(c);
      if (argmax != labels[i]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(val_indices.size());
}

}  // namespace

Checkpoint train(const ArchitectureSpec& arch_in, const Dataset& data,
                 const TrainConfig& cfg, const std::string& out_dir,
                 const StepObserver& observer, std::ostream* progress) {
  cfg.check();
  ArchitectureSpec arch = apply_dropout_override(arch_in, cfg.dropout_rate);
  validate_arch(arch);
  const LayerDesc& classifier = arch.layers.back();
  for (const DatasetEntry& e : data.entries())
    if (e.label >= classifier.classes)
      throw InputError("dataset label " + std::to_string(e.label) +
                       " exceeds classifier classes " + std::to_string(classifier.classes));

  const int crop = static_cast<int>(arch.input.h);
  const int target = cfg.target > 0 ? cfg.target : crop;
  const Tensor& mean = data.mean(target);

  Rng rng(cfg.seed);
  Params params = init_params(arch, cfg.weight_init_std, rng);
  rms_renormalize_conv_layers(arch, params, cfg.rms_radius);
  OptimizerState state = make_state(params, cfg.lr);

  std::vector<int> train_idx = data.indices_of(Split::Train);
  std::vector<int> val_idx = data.indices_of(Split::Val);
  if (train_idx.empty()) throw InputError("dataset has no training images");

  if (!out_dir.empty()) fs::create_directories(out_dir);
  std::ostringstream log_csv;
  log_csv << "epoch,train_loss,train_err,val_err,lr\n";

  std::vector<double> val_history;
  int global_step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    double epoch_err = 0.0;
    int batches = 0;
    for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t stop = std::min(train_idx.size(), start + static_cast<size_t>(cfg.batch));
      int64_t bn = static_cast<int64_t>(stop - start);
      Tensor in({bn, arch.input.c, arch.input.h, arch.input.w});
      std::vector<int> labels(static_cast<size_t>(bn));
      for (int64_t b = 0; b < bn; ++b) {
        int idx = train_idx[start + static_cast<size_t>(b)];
        std::vector<Tensor> crops = preprocess(data.image(idx), target, crop, mean,
                                               PreprocessMode::Train);
        size_t pick = cfg.augment_crops ? rng.uniform_index(crops.size()) : 8;  // 8 = center
        const Tensor& one = crops[pick];
        std::copy(one.data(), one.data() + one.size(), in.data() + b * one.size());
        labels[static_cast<size_t>(b)] = data.entries()[static_cast<size_t>(idx)].label;
      }
      ActivationRecord rec = net_forward(arch, params, in, Mode::Train, &rng);
      BatchLoss bl = batch_loss(rec, labels);
      abort_on_nonfinite(rec, arch, bl.loss);
      Grads grads = net_backward(arch, params, rec, bl.grad_logits);
      sgd_step(params, grads, state, cfg);
      rms_renormalize_conv_layers(arch, params, cfg.rms_radius);
      epoch_loss += bl.loss;
      epoch_err += bl.error_rate;
      ++batches;
      ++global_step;
      if (observer) observer({epoch, global_step, bl.loss, bl.error_rate}, params);
    }
    epoch_loss /= std::max(1, batches);
    epoch_err /= std::max(1, batches);

    double val_err = validation_error(arch, params, data, val_idx, target, cfg.batch);
    val_history.push_back(val_err);
    anneal(state, val_history, cfg);

    log_csv << epoch << "," << epoch_loss << "," << epoch_err << "," << val_err << ","
            << state.lr << "\n";
    if (progress)
      (*progress) << "epoch " << epoch << "/" << cfg.max_epochs << " loss " << epoch_loss
                  << " train_err " << epoch_err << " val_err " << val_err << " lr "
                  << state.lr << "\n";

    if (!out_dir.empty() &&
        std::find(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end(), epoch) !=
            cfg.snapshot_epochs.end()) {
      Checkpoint snap{arch, params, state, epoch, cfg.seed, rng.state()};
      save_checkpoint(snap, (fs::path(out_dir) / ("snapshot_epoch_" + std::to_string(epoch) +
                                                  ".ckpt")).string());
    }
  }

  Checkpoint final{arch, params, state, cfg.max_epochs, cfg.seed, rng.state()};
  if (!out_dir.empty()) {
    atomic_write_file((fs::path(out_dir) / "train_log.csv").string(), log_csv.str());
    save_checkpoint(final, (fs::path(out_dir) / "model.ckpt").string());
  }
  return final;
}

EvalResult evaluate(const ArchitectureSpec& arch, const Params& params, const Dataset& data,
                    Split split, bool ten_crop) {
  std::vector<int> idx = data.indices_of(split);
  if (idx.empty()) throw InputError("split has no images");
  const int crop = static_cast<int>(arch.input.h);
  const Tensor& mean = data.mean(crop);
  EvalResult r;
  r.predictions.resize(idx.size());
  std::vector<int64_t> per_class_total(static_cast<size_t>(data.class_count()), 0);
  std::vector<int64_t> per_class_right(static_cast<size_t>(data.class_count()), 0);

  for (size_t i = 0; i < idx.size(); ++i) {
    const DatasetEntry& e = data.entries()[static_cast<size_t>(idx[i])];
    std::vector<Tensor> crops =
        preprocess(data.image(idx[i]), crop, crop, mean,
                   ten_crop ? PreprocessMode::EvalTenCrop : PreprocessMode::EvalSingle);
    std::vector<double> mean_probs;
    for (const Tensor& one : crops) {
      ActivationRecord rec = net_forward(arch, params, one, Mode::Eval);
      auto probs = probabilities(rec)[0];
      if (mean_probs.empty()) mean_probs.assign(probs.size(), 0.0);
      for (size_t c = 0; c < probs.size(); ++c) mean_probs[c] += probs[c];
    }
    int argmax = 0;
    for (size_t c = 1; c < mean_probs.size(); ++c)
      if (mean_probs[c] > mean_probs[static_cast<size_t>(argmax)]) argmax = static_cast<int>(c);
    r.predictions[i] = argmax;
    ++per_class_total[static_cast<size_t>(e.label)];
    if (argmax == e.label) ++per_class_right[static_cast<size_t>(e.label)];
  }

  int64_t right = 0;
  double pc_sum = 0.0;
  int pc_n = 0;
  r.per_class_accuracy.assign(static_cast<size_t>(data.class_count()), 0.0);
  for (int c = 0; c < data.class_count(); ++c) {
    right += per_class_right[static_cast<size_t>(c)];
    if (per_class_total[static_cast<size_t>(c)] > 0) {
      r.per_class_accuracy[static_cast<size_t>(c)] =
          static_cast<double>(per_class_right[static_cast<size_t>(c)]) /
          static_cast<double>(per_class_total[static_cast<size_t>(c)]);
      pc_sum += r.per_class_accuracy[static_cast<size_t>(c)];
      ++pc_n;
    }
  }
  r.accuracy = static_cast<double>(right) / static_cast<double>(idx.size());
  r.mean_per_class_accuracy = pc_n > 0 ? pc_sum / pc_n : 0.0;
  return r;
}

Tensor preprocessed_input(const Dataset& data, int index, int target) {
  const Tensor& mean = data.mean(target);
  return preprocess(data.image(index), target, target, mean, PreprocessMode::EvalSingle)[0];
}

}  // namespace convscope
