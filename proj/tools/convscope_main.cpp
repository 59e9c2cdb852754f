// convscope command-line front end. All functionality lives behind the C API
// in libconvscope; this binary only maps flags onto run options.

#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <string>
#include <vector>

#include "convscope.h"

namespace {

struct BoundOption {
  CLI::Option* option = nullptr;
  std::string key;
  std::string* value = nullptr;
  bool is_flag = false;
};

// One subcommand: its CLI11 app plus the option-to-config-key bindings.
class Sub {
 public:
  Sub(CLI::App& app, const std::string& name, const std::string& desc)
      : app_(app.add_subcommand(name, desc)), name_(name) {
    config_opt_ = app_->add_option("--config", config_path_,
                                   "config file (INI sections or a run manifest.json)");
  }

  void opt(const std::string& flag, const std::string& key, const std::string& help) {
    storage_.emplace_back();
    bound_.push_back({app_->add_option(flag, storage_.back(), help), key,
                      &storage_.back(), false});
  }

  void flag(const std::string& flag_name, const std::string& key, const std::string& help) {
    storage_.emplace_back();
    bound_.push_back({app_->add_flag(flag_name, storage_.back(), help), key,
                      &storage_.back(), true});
  }

  bool parsed() const { return app_->parsed(); }
  const std::string& name() const { return name_; }

  int execute() const {
    convscope_run* run = nullptr;
    convscope_status st = convscope_run_new(name_.c_str(), &run);
    if (st != CONVSCOPE_OK) {
      std::fprintf(stderr, "error[%s]: %s\n", convscope_status_name(st),
                   convscope_last_error());
      return 1;
    }
    int rc = 0;
    // explicit flags first so they win over config-file values
    for (const BoundOption& b : bound_) {
      if (b.option->count() == 0) continue;
      const char* value = b.is_flag ? "true" : b.value->c_str();
      st = convscope_run_set(run, b.key.c_str(), value);
      if (st != CONVSCOPE_OK) break;
    }
    if (st == CONVSCOPE_OK && config_opt_->count() > 0)
      st = convscope_run_load_config(run, config_path_.c_str());
    if (st == CONVSCOPE_OK) st = convscope_run_execute(run);
    if (st != CONVSCOPE_OK) {
      std::fprintf(stderr, "error[%s]: %s\n", convscope_status_name(st),
                   convscope_last_error());
      rc = 1;
    }
    convscope_run_free(run);
    return rc;
  }

 private:
  CLI::App* app_;
  std::string name_;
  CLI::Option* config_opt_;
  std::string config_path_;
  std::deque<std::string> storage_;
  std::vector<BoundOption> bound_;
};

void add_common(Sub& s) {
  s.opt("--out", "out", "output directory (default: <subcommand>_out)");
  s.opt("--threads", "threads", "worker threads (default: hardware)");
  s.opt("--seed", "seed", "rng seed");
}

void add_model_data(Sub& s) {
  s.opt("--checkpoint", "checkpoint", "model checkpoint file");
  s.opt("--data", "data", "dataset root (contains manifest.json)");
  s.opt("--split", "split", "dataset split: train|val|test (default test)");
}

void add_train_flags(Sub& s) {
  s.opt("--epochs", "epochs", "training epochs");
  s.opt("--batch", "batch", "mini-batch size (default 128)");
  s.opt("--lr", "lr", "initial learning rate (default 1e-2)");
  s.opt("--momentum", "momentum", "momentum (default 0.9)");
  s.opt("--dropout", "dropout", "override every dropout layer's rate");
  s.opt("--weight-init-std", "weight_init_std", "weight init stddev (default 1e-2)");
  s.opt("--rms-radius", "rms_radius", "conv filter rms radius (default 0.1)");
  s.opt("--anneal-factor", "anneal_factor", "lr multiplier on plateau (default 0.1)");
  s.opt("--anneal-patience", "anneal_patience", "plateau epochs before annealing");
  s.opt("--snapshots", "snapshots", "comma-separated snapshot epochs");
  s.opt("--target", "target", "preprocess resize target (default: input size)");
  s.flag("--no-augment", "no_augment", "disable crop/flip augmentation");
  s.flag("--quiet", "quiet", "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convscope: convnet training with deconvnet visualization, occlusion, "
               "correspondence, invariance, and transfer probes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", convscope_version());

  std::vector<Sub> subs;
  subs.reserve(10);

  {
    Sub& s = subs.emplace_back(app, "synth", "generate a synthetic desk-scale dataset");
    s.opt("--kind", "kind", "shapes10 | quadrants | parts");
    s.opt("--train", "train", "training images (default 5000)");
    s.opt("--val", "val", "validation images (default 500)");
    s.opt("--test", "test", "test images (default 1000)");
    s.opt("--size", "size", "image side in px (default 32)");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "train", "train a model from an architecture file");
    s.opt("--arch", "arch", "architecture text file");
    s.opt("--data", "data", "dataset root");
    add_train_flags(s);
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "eval", "evaluate a checkpoint on a dataset split");
    add_model_data(s);
    s.flag("--tencrop", "tencrop", "average probabilities over the 10-crop set");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "viz",
                               "project the top-k activations of feature maps to pixel "
                               "space and render grids");
    add_model_data(s);
    s.opt("--layer", "layer", "layer index or stage name (default top-conv)");
    s.opt("--maps", "maps", "number of randomly chosen maps (default 16)");
    s.opt("--map-seed", "map_seed", "seed for the random map subset");
    s.opt("--topk", "topk", "activations per map (default 9)");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "evolve",
                               "project the same units across epoch snapshots");
    s.opt("--snapshots-dir", "snapshots_dir", "directory with snapshot_epoch_*.ckpt");
    s.opt("--data", "data", "dataset root");
    s.opt("--split", "split", "dataset split (default test)");
    s.opt("--layer", "layer", "layer index or stage name (default top-conv)");
    s.opt("--maps", "maps", "number of randomly chosen maps (default 8)");
    s.opt("--map-seed", "map_seed", "seed for the random map subset");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "occlude",
                               "occlusion sensitivity maps (probability, activation, label)");
    add_model_data(s);
    s.opt("--count", "count", "number of images to sweep (default 3)");
    s.opt("--images", "images", "explicit image indices, comma-separated");
    s.opt("--layer", "layer", "feature layer for the activation map");
    s.opt("--map", "map", "feature map (default: strongest on the clean image)");
    s.opt("--occ-size", "occ_size", "occluder side in px (default: 25% of input)");
    s.opt("--occ-stride", "occ_stride", "occluder step in px (default 4)");
    s.opt("--fill", "fill", "occluder value in preprocessed space (default 0)");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "correspond",
                               "part-correspondence sign-consistency scores");
    add_model_data(s);
    s.opt("--parts", "parts", "landmark names, comma-separated (default 'part')");
    s.opt("--layer", "layer", "feature layer (default top-conv)");
    s.opt("--count", "count", "images per set (default 5)");
    s.opt("--images", "images", "explicit image indices, comma-separated");
    s.opt("--trials", "trials", "random-region baseline trials (default 100)");
    s.opt("--fill", "fill", "occluder value (default 0)");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "invariance",
                               "feature distances and true-class probability under "
                               "translation, scaling, or rotation");
    add_model_data(s);
    s.opt("--transform", "transform", "translate | scale | rotate");
    s.opt("--sweep", "sweep", "comma-separated sweep values (must include identity)");
    s.opt("--layers", "layers", "layers to measure, comma-separated");
    s.opt("--count", "count", "number of images (default 5)");
    s.opt("--resample", "resample", "bilinear | nearest");
    s.opt("--fill", "fill", "out-of-frame fill (default 0 = dataset mean)");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "transfer",
                               "frozen-feature heads per layer, Caltech-style per-class "
                               "accuracy, training-set size sweeps");
    s.opt("--checkpoint", "checkpoint", "model checkpoint file");
    s.opt("--data", "data", "dataset root");
    s.opt("--head", "head", "softmax | svm (default softmax)");
    s.opt("--layers", "layers", "stages to probe (default: all feature stages)");
    s.opt("--counts", "counts", "per-class training counts, e.g. 15,30");
    s.opt("--folds", "folds", "folds per count (default 5)");
    s.opt("--head-epochs", "head_epochs", "head training epochs (default 40)");
    s.opt("--head-lr", "head_lr", "head learning rate (default 0.05)");
    s.opt("--svm-c", "svm_c", "svm slack weight C (default 1.0)");
    s.opt("--train-limit", "train_limit", "cap on training examples (default all)");
    s.opt("--test-limit", "test_limit", "cap on test examples (default all)");
    s.flag("--save-features", "save_features", "persist feature matrices");
    add_common(s);
  }
  {
    Sub& s = subs.emplace_back(app, "ablate",
                               "edit an architecture (remove/resize layers), optionally "
                               "retrain from scratch");
    s.opt("--arch", "arch", "architecture text file");
    s.opt("--edits", "edits", "comma-separated remove:L / resize:L=SIZE edits");
    s.opt("--data", "data", "dataset root (retrains when set with --epochs)");
    add_train_flags(s);
    add_common(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the error and usage hint
    return 2;
  }

  for (const Sub& s : subs)
    if (s.parsed()) return s.execute();
  return 2;
}
