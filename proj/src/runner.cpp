#include "convscope/runner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "convscope/arch_text.hpp"
#include "convscope/checkpoint.hpp"
#include "convscope/dataset.hpp"
#include "convscope/deconvnet.hpp"
#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"
#include "convscope/parallel.hpp"
#include "convscope/probes.hpp"
#include "convscope/runner.hpp"
#include "convscope/synth.hpp"
#include "convscope/trainer.hpp"
#include "convscope/transfer.hpp"

#ifndef CONVSCOPE_GIT_DESCRIBE
#define CONVSCOPE_GIT_DESCRIBE "unknown"
#endif

namespace convscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Accumulates output paths and extra report fields for the manifest.
class RunContext {
 public:
  RunContext(std::string command, const Config& cfg, std::string out_dir)
      : command_(std::move(command)), cfg_(cfg), out_dir_(std::move(out_dir)) {
    fs::create_directories(out_dir_);
  }

  std::string path(const std::string& name) {
    std::string p = (fs::path(out_dir_) / name).string();
    outputs_.push_back(p);
    return p;
  }

  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  const std::string& dir() const { return out_dir_; }

  void write_manifest() {
    json m;
    m["command"] = command_;
    json cfg_json = json::object();
    for (const auto& [k, v] : cfg_.values()) cfg_json[k] = v;
    m["config"] = cfg_json;
    m["seed"] = cfg_.get_int64("seed", 0);
    m["git_describe"] = CONVSCOPE_GIT_DESCRIBE;
    m["outputs"] = outputs_;
    m["finished_unix_time"] = static_cast<int64_t>(std::time(nullptr));
    for (auto& [k, v] : extra_.items()) m[k] = v;
    // run_manifest.json, not manifest.json: synth runs write their dataset
    // manifest into the same directory
    atomic_write_file((fs::path(out_dir_) / "run_manifest.json").string(), m.dump(1));
  }

 private:
  std::string command_;
  Config cfg_;
  std::string out_dir_;
  std::vector<std::string> outputs_;
  json extra_ = json::object();
};

struct LoadedModel {
  Checkpoint ck;
  uint64_t file_hash = 0;
};

LoadedModel load_model(const Config& cfg) {
  std::string path = cfg.get_string("checkpoint");
  LoadedModel m{load_checkpoint(path), checkpoint_file_hash(path)};
  return m;
}

/// Accepts a raw layer index, a stage name (conv2, fc6), `input`, or
/// `top-conv`.
int resolve_layer(const ArchitectureSpec& arch, const std::string& spec) {
  if (spec == "input") return -1;
  if (spec == "top-conv") return top_conv_stage(arch).layer;
  for (const StagePoint& sp : feature_stages(arch))
    if (sp.name == spec) return sp.layer;
  try {
    size_t pos = 0;
    int v = std::stoi(spec, &pos);
    if (pos == spec.size() && v >= 0 && static_cast<size_t>(v) < arch.layers.size())
      return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("cannot resolve layer '" + spec + "' (use an index or a stage name)");
}

std::vector<int> sample_indices(const Dataset& data, Split split, int count, Rng& rng) {
  std::vector<int> idx = data.indices_of(split);
  if (idx.empty()) throw InputError("split has no images");
  if (count <= 0 || count >= static_cast<int>(idx.size())) return idx;
  rng.shuffle(idx);
  idx.resize(static_cast<size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

json hit_json(const Dataset& data, const TopHit& hit, int layer, int map) {
  return json{{"image", data.entries()[static_cast<size_t>(hit.image_index)].file},
              {"image_index", hit.image_index},
              {"layer", layer},
              {"map", map},
              {"coord", {hit.row, hit.col}},
              {"activation", hit.value}};
}

void run_synth(const Config& cfg, RunContext& ctx) {
  SynthSpec spec;
  spec.kind = cfg.get_string("kind", "shapes10");
  spec.train = cfg.get_int("train", 5000);
  spec.val = cfg.get_int("val", 500);
  spec.test = cfg.get_int("test", 1000);
  spec.size = cfg.get_int("size", 32);
  spec.seed = static_cast<uint64_t>(cfg.get_int64("seed", 1));
  generate_synthetic_dataset(spec, ctx.dir());
  ctx.note("dataset_kind", spec.kind);
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.lr = cfg.get_double("lr", tc.lr);
  tc.momentum = cfg.get_double("momentum", tc.momentum);
  tc.batch = cfg.get_int("batch", tc.batch);
  tc.dropout_rate = cfg.get_double("dropout", tc.dropout_rate);
  tc.weight_init_std = cfg.get_double("weight_init_std", tc.weight_init_std);
  tc.rms_radius = cfg.get_double("rms_radius", tc.rms_radius);
  tc.anneal_factor = cfg.get_double("anneal_factor", tc.anneal_factor);
  tc.anneal_patience = cfg.get_int("anneal_patience", tc.anneal_patience);
  tc.max_epochs = cfg.get_int("epochs", tc.max_epochs);
  tc.seed = static_cast<uint64_t>(cfg.get_int64("seed", 0));
  tc.snapshot_epochs = cfg.get_int_list("snapshots", {1, 2, 5, 10, 20, 30, 40, 64});
  tc.target = cfg.get_int("target", 0);
  tc.augment_crops = cfg.get_bool("augment", !cfg.get_bool("no_augment", false));
  return tc;
}

void run_train(const Config& cfg, RunContext& ctx) {
  ArchitectureSpec arch = load_arch(cfg.get_string("arch"));
  Dataset data = Dataset::load(cfg.get_string("data"));
  TrainConfig tc = train_config_from(cfg);
  bool quiet = cfg.get_bool("quiet", false);
  Checkpoint ck = train(arch, data, tc, ctx.dir(), nullptr, quiet ? nullptr : &std::cerr);
  ctx.path("model.ckpt");
  ctx.path("train_log.csv");
  EvalResult test = evaluate(ck.arch, ck.params, data, Split::Test);
  ctx.note("test_accuracy", test.accuracy);
  ctx.note("checkpoint_hash", checkpoint_file_hash((fs::path(ctx.dir()) / "model.ckpt").string()));
}

void run_eval(const Config& cfg, RunContext& ctx) {
  LoadedModel m = load_model(cfg);
  Dataset data = Dataset::load(cfg.get_string("data"));
  Split split = split_from_name(cfg.get_string("split", "test"));
  bool ten_crop = cfg.get_bool("tencrop", false);
  data.require_all_classes(split);
  EvalResult r = evaluate(m.ck.arch, m.ck.params, data, split, ten_crop);
  std::ostringstream os;
  os << "class,name,accuracy\n";
  for (size_t c = 0; c < r.per_class_accuracy.size(); ++c)
    os << c << "," << data.classes()[c] << "," << r.per_class_accuracy[c] << "\n";
  atomic_write_file(ctx.path("eval_per_class.csv"), os.str());
  ctx.note("split", split_name(split));
  ctx.note("accuracy", r.accuracy);
  ctx.note("mean_per_class_accuracy", r.mean_per_class_accuracy);
  ctx.note("ten_crop", ten_crop);
  std::cout << "accuracy " << r.accuracy << " per-class " << r.mean_per_class_accuracy
            << "\n";
}

std::vector<int> pick_maps(const ArchitectureSpec& arch, int layer, int want,
                           uint64_t map_seed) {
  std::vector<Extent4> shapes = infer_shapes(arch);
  int64_t channels = shapes[static_cast<size_t>(layer)].c;
  std::vector<int> all(static_cast<size_t>(channels));
  for (int64_t i = 0; i < channels; ++i) all[static_cast<size_t>(i)] = static_cast<int>(i);
  if (want <= 0 || want >= channels) return all;
  Rng rng(map_seed);
  rng.shuffle(all);
  all.resize(static_cast<size_t>(want));
  std::sort(all.begin(), all.end());
  return all;
}

void run_viz(const Config& cfg, RunContext& ctx) {
  LoadedModel m = load_model(cfg);
  Dataset data = Dataset::load(cfg.get_string("data"));
  Split split = split_from_name(cfg.get_string("split", "test"));
  int layer = resolve_layer(m.ck.arch, cfg.get_string("layer", "top-conv"));
  if (layer < 0) throw ConfigError("viz needs a network layer, not 'input'");
  int k = cfg.get_int("topk", 9);
  std::vector<int> maps = pick_maps(m.ck.arch, layer, cfg.get_int("maps", 16),
                                    static_cast<uint64_t>(cfg.get_int64("map_seed", 0)));

  std::vector<TopKResult> tops = top_k_scan(data, split, m.ck.arch, m.ck.params, layer,
                                            maps, k);
  const int target = static_cast<int>(m.ck.arch.input.h);
  int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k)))));
  int rows = (k + cols - 1) / cols;

  std::ostringstream index;
  // forward records are reused across maps via a small cache
  std::map<int, ActivationRecord> records;
  auto record_of = [&](int image_index) -> const ActivationRecord& {
    auto it = records.find(image_index);
    if (it != records.end()) return it->second;
    if (records.size() > 32) records.clear();
    Tensor in = preprocessed_input(data, image_index, target);
    return records.emplace(image_index, net_forward(m.ck.arch, m.ck.params, in, Mode::Eval))
        .first->second;
  };

  for (size_t mi = 0; mi < maps.size(); ++mi) {
    std::vector<ProjectionResult> projections;
    std::vector<Tensor> patches;
    char file[64];
    std::snprintf(file, sizeof(file), "viz_layer%d_map%03d.png", layer, maps[mi]);
    for (const TopHit& hit : tops[mi].hits) {
      ActivationSelection sel{layer, maps[mi], static_cast<int>(hit.row),
                              static_cast<int>(hit.col), KeepPolicy::SingleActivation};
      ProjectionResult proj = project(m.ck.arch, m.ck.params, record_of(hit.image_index), sel);
      proj.image_index = hit.image_index;
      projections.push_back(std::move(proj));
      patches.push_back(data.resized(hit.image_index, target));
      json line = hit_json(data, hit, layer, maps[mi]);
      line["grid"] = file;
      line["cell"] = projections.size() - 1;
      index << line.dump() << "\n";
    }
    if (!projections.empty())
      render_grid(projections, patches, rows, cols, ctx.path(file));
  }
  atomic_write_file(ctx.path("index.jsonl"), index.str());
  ctx.note("layer", layer);
  ctx.note("maps", maps);
}

void run_evolve(const Config& cfg, RunContext& ctx) {
  std::string snap_dir = cfg.get_string("snapshots_dir");
  Dataset data = Dataset::load(cfg.get_string("data"));
  Split split = split_from_name(cfg.get_string("split", "test"));

  // collect snapshot_epoch_N.ckpt files in epoch order
  std::vector<std::pair<int, std::string>> snaps;
  for (const auto& entry : fs::directory_iterator(snap_dir)) {
    std::string name = entry.path().filename().string();
    int epoch;
    if (std::sscanf(name.c_str(), "snapshot_epoch_%d.ckpt", &epoch) == 1)
      snaps.emplace_back(epoch, entry.path().string());
  }
  if (snaps.empty()) throw InputError("no snapshot_epoch_*.ckpt files in " + snap_dir);
  std::sort(snaps.begin(), snaps.end());

  Checkpoint first = load_checkpoint(snaps[0].second);
  int layer = resolve_layer(first.arch, cfg.get_string("layer", "top-conv"));
  std::vector<int> maps = pick_maps(first.arch, layer, cfg.get_int("maps", 8),
                                    static_cast<uint64_t>(cfg.get_int64("map_seed", 0)));
  const int target = static_cast<int>(first.arch.input.h);

  // per map, one projection per epoch: the strongest activation at that epoch
  std::vector<std::vector<ProjectionResult>> cells(maps.size());
  std::vector<std::vector<Tensor>> patch_cells(maps.size());
  std::ostringstream index;
  for (const auto& [epoch, path] : snaps) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.arch == first.arch))
      throw InputError("snapshot architectures differ within " + snap_dir);
    std::vector<TopKResult> tops = top_k_scan(data, split, ck.arch, ck.params, layer, maps, 1);
    for (size_t mi = 0; mi < maps.size(); ++mi) {
      if (tops[mi].hits.empty()) continue;
      const TopHit& hit = tops[mi].hits[0];
      Tensor in = preprocessed_input(data, hit.image_index, target);
      ActivationRecord rec = net_forward(ck.arch, ck.params, in, Mode::Eval);
      ActivationSelection sel{layer, maps[mi], static_cast<int>(hit.row),
                              static_cast<int>(hit.col), KeepPolicy::SingleActivation};
      ProjectionResult proj = project(ck.arch, ck.params, rec, sel);
      proj.image_index = hit.image_index;
      cells[mi].push_back(std::move(proj));
      patch_cells[mi].push_back(data.resized(hit.image_index, target));
      json line = hit_json(data, hit, layer, maps[mi]);
      line["epoch"] = epoch;
      index << line.dump() << "\n";
    }
  }
  for (size_t mi = 0; mi < maps.size(); ++mi) {
    if (cells[mi].empty()) continue;
    char file[64];
    std::snprintf(file, sizeof(file), "evolution_layer%d_map%03d.png", layer, maps[mi]);
    render_grid(cells[mi], patch_cells[mi], 1, static_cast<int>(cells[mi].size()),
                ctx.path(file));
  }
  atomic_write_file(ctx.path("index.jsonl"), index.str());
  json epochs = json::array();
  for (const auto& [epoch, path] : snaps) epochs.push_back(epoch);
  ctx.note("epochs", epochs);
}

void run_occlude(const Config& cfg, RunContext& ctx) {
  LoadedModel m = load_model(cfg);
  Dataset data = Dataset::load(cfg.get_string("data"));
  Split split = split_from_name(cfg.get_string("split", "test"));
  Rng rng(static_cast<uint64_t>(cfg.get_int64("seed", 0)));
  std::vector<int> images = cfg.has("images")
                                ? cfg.get_int_list("images", {})
                                : sample_indices(data, split, cfg.get_int("count", 3), rng);
  OcclusionOptions opt;
  opt.size = cfg.get_int("occ_size", 0);
  opt.stride = cfg.get_int("occ_stride", 4);
  opt.fill = cfg.get_double("fill", 0.0);
  if (cfg.has("layer")) opt.layer = resolve_layer(m.ck.arch, cfg.get_string("layer"));
  opt.map = cfg.get_int("map", -1);

  const int target = static_cast<int>(m.ck.arch.input.h);
  json reports = json::array();
  for (int idx : images) {
    const DatasetEntry& e = data.entries()[static_cast<size_t>(idx)];
    Tensor in = preprocessed_input(data, idx, target);
    OcclusionReport rep = occlusion_sweep(m.ck.arch, m.ck.params, in, e.label, opt);
    std::string stem = "occlusion_" + std::to_string(idx);
    write_occlusion_csv(rep, ctx.path(stem + ".csv"));
    write_occlusion_pngs(rep, ctx.path(stem + "_prob.png"), ctx.path(stem + "_act.png"),
                         ctx.path(stem + "_label.png"), ctx.path(stem + "_legend.json"),
                         data.classes());
    reports.push_back({{"image", e.file},
                       {"image_index", idx},
                       {"label", e.label},
                       {"layer", rep.layer},
                       {"map", rep.map},
                       {"baseline_prob", rep.baseline_prob},
                       {"baseline_act", rep.baseline_act},
                       {"baseline_label", rep.baseline_label}});
  }
  ctx.note("reports", reports);
}

void run_correspond(const Config& cfg, RunContext& ctx) {
  LoadedModel m = load_model(cfg);
  Dataset data = Dataset::load(cfg.get_string("data"));
  Split split = split_from_name(cfg.get_string("split", "test"));
  std::string parts_spec = cfg.get_string("parts", "part");
  int layer = resolve_layer(m.ck.arch, cfg.get_string("layer", "top-conv"));
  int count = cfg.get_int("count", 5);
  int trials = cfg.get_int("trials", 100);
  double fill = cfg.get_double("fill", 0.0);
  uint64_t seed = static_cast<uint64_t>(cfg.get_int64("seed", 0));

  std::vector<std::string> parts;
  std::istringstream ps(parts_spec);
  std::string part;
  while (std::getline(ps, part, ',')) parts.push_back(part);

  Rng rng(seed);
  std::vector<int> images = cfg.has("images")
                                ? cfg.get_int_list("images", {})
                                : sample_indices(data, split, count, rng);
  const int target = static_cast<int>(m.ck.arch.input.h);
  std::vector<Tensor> inputs;
  for (int idx : images) inputs.push_back(preprocessed_input(data, idx, target));

  std::ostringstream csv;
  csv << "kind,part_or_trial,layer,delta_mean,delta_std,pairs\n";
  json summary = json::array();

  std::optional<Rect> rect0 = data.landmark(images[0], parts[0]);
  for (const std::string& p : parts) {
    std::vector<std::vector<double>> eps;
    for (size_t i = 0; i < images.size(); ++i) {
      Tensor occluded = occlude_part(data, images[i], inputs[i], p, fill);
      eps.push_back(feature_difference(m.ck.arch, m.ck.params, inputs[i], occluded, layer));
    }
    CorrespondenceResult r = correspondence_score(eps);
    csv << "part," << p << "," << layer << "," << r.mean << "," << r.stddev << ","
        << r.pairs << "\n";
    summary.push_back({{"part", p}, {"layer", layer}, {"delta_mean", r.mean},
                       {"delta_std", r.stddev}});
  }

  // random-region baseline: same occluder size, independent position per image
  if (!rect0) throw InputError("no landmark '" + parts[0] + "' on the first image");
  int64_t rh = rect0->h, rw = rect0->w;
  const Extent4& in_shape = inputs[0].shape();
  double random_mean = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::vector<double>> eps;
    for (size_t i = 0; i < images.size(); ++i) {
      Rect r{static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(in_shape.h - rh + 1))),
             static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(in_shape.w - rw + 1))),
             rh, rw};
      Tensor occluded = occlude_rect(inputs[i], r, fill);
      eps.push_back(feature_difference(m.ck.arch, m.ck.params, inputs[i], occluded, layer));
    }
    CorrespondenceResult r = correspondence_score(eps);
    random_mean += r.mean;
    csv << "random," << t << "," << layer << "," << r.mean << "," << r.stddev << ","
        << r.pairs << "\n";
  }
  if (trials > 0) random_mean /= trials;
  atomic_write_file(ctx.path("correspondence.csv"), csv.str());
  ctx.note("parts", summary);
  ctx.note("random_delta_mean", random_mean);
  ctx.note("layer", layer);
}

void run_invariance(const Config& cfg, RunContext& ctx) {
  LoadedModel m = load_model(cfg);
  Dataset data = Dataset::load(cfg.get_string("data"));
  Split split = split_from_name(cfg.get_string("split", "test"));
  Rng rng(static_cast<uint64_t>(cfg.get_int64("seed", 0)));
  std::vector<int> images = sample_indices(data, split, cfg.get_int("count", 5), rng);

  InvarianceOptions opt;
  opt.kind = transform_from_name(cfg.get_string("transform", "translate"));
  switch (opt.kind) {
    case TransformKind::VerticalTranslate:
      opt.sweep = cfg.get_double_list("sweep", {-8, -6, -4, -2, 0, 2, 4, 6, 8});
      break;
    case TransformKind::Scale:
      opt.sweep = cfg.get_double_list("sweep", {0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3});
      break;
    case TransformKind::Rotate:
      opt.sweep = cfg.get_double_list("sweep", {0, 30, 60, 90, 120, 150, 180, 210, 240,
                                                270, 300, 330, 360});
      break;
  }
  opt.resample = cfg.get_string("resample", "bilinear") == "nearest" ? Resample::Nearest
                                                                     : Resample::Bilinear;
  opt.fill = cfg.get_double("fill", 0.0);

  std::vector<StagePoint> stages = feature_stages(m.ck.arch);
  if (cfg.has("layers")) {
    opt.layers.clear();
    std::istringstream ls(cfg.get_string("layers"));
    std::string one;
    while (std::getline(ls, one, ',')) opt.layers.push_back(resolve_layer(m.ck.arch, one));
  } else {
    // first and last feature stages, the paper's layer-1 / layer-7 pairing
    opt.layers = {stages.front().layer, stages.back().layer};
  }

  const int target = static_cast<int>(m.ck.arch.input.h);
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  for (int idx : images) {
    inputs.push_back(preprocessed_input(data, idx, target));
    labels.push_back(data.entries()[static_cast<size_t>(idx)].label);
  }
  std::vector<InvarianceCurve> curves =
      invariance_sweep(m.ck.arch, m.ck.params, inputs, labels, opt);
  for (InvarianceCurve& c : curves)
    c.image_index = images[static_cast<size_t>(c.image_index)];
  write_invariance_csv(curves, opt.layers,
                       ctx.path(std::string("invariance_") + transform_name(opt.kind) +
                                ".csv"));
  ctx.note("transform", transform_name(opt.kind));
  ctx.note("layers", opt.layers);
}

void run_transfer(const Config& cfg, RunContext& ctx) {
  LoadedModel m = load_model(cfg);
  Dataset data = Dataset::load(cfg.get_string("data"));
  data.require_all_classes(Split::Test);
  HeadConfig hc;
  hc.kind = head_from_name(cfg.get_string("head", "softmax"));
  hc.epochs = cfg.get_int("head_epochs", hc.epochs);
  hc.lr = cfg.get_double("head_lr", hc.lr);
  hc.svm_c = cfg.get_double("svm_c", hc.svm_c);
  hc.seed = static_cast<uint64_t>(cfg.get_int64("seed", 0));
  hc.classes = data.class_count();
  int folds = cfg.get_int("folds", 5);
  std::vector<int> counts = cfg.get_int_list("counts", {});
  int limit_train = cfg.get_int("train_limit", 0);
  int limit_test = cfg.get_int("test_limit", 0);
  bool save_feats = cfg.get_bool("save_features", false);

  std::vector<StagePoint> stages;
  if (cfg.has("layers")) {
    std::istringstream ls(cfg.get_string("layers"));
    std::string one;
    while (std::getline(ls, one, ',')) {
      int layer = resolve_layer(m.ck.arch, one);
      stages.push_back({layer, one});
    }
  } else {
    stages = feature_stages(m.ck.arch);
  }

  Rng rng(hc.seed);
  std::vector<int> train_idx = sample_indices(data, Split::Train, limit_train, rng);
  std::vector<int> test_idx = sample_indices(data, Split::Test, limit_test, rng);

  std::ostringstream csv;
  csv << "stage,layer,head,per_class_count,mean_per_class_accuracy,stddev\n";
  json table = json::array();
  for (const StagePoint& sp : stages) {
    FeatureMatrix train_f = extract_features(data, train_idx, m.ck.arch, m.ck.params,
                                             sp.layer, m.file_hash);
    FeatureMatrix test_f = extract_features(data, test_idx, m.ck.arch, m.ck.params,
                                            sp.layer, m.file_hash);
    if (save_feats) {
      save_features(train_f, ctx.path("features_" + sp.name + "_train.bin"));
      save_features(test_f, ctx.path("features_" + sp.name + "_test.bin"));
    }
    if (counts.empty()) {
      HeadModel head = train_head(train_f, hc);
      PerClassResult res = evaluate_per_class(head, test_f);
      csv << sp.name << "," << sp.layer << "," << head_name(hc.kind) << ",all,"
          << res.mean_accuracy << ",0\n";
      table.push_back({{"stage", sp.name},
                       {"layer", sp.layer},
                       {"head", head_name(hc.kind)},
                       {"count", "all"},
                       {"accuracy", res.mean_accuracy}});
    } else {
      std::vector<SweepPoint> points = size_sweep(train_f, test_f, counts, folds, hc);
      for (const SweepPoint& p : points) {
        csv << sp.name << "," << sp.layer << "," << head_name(hc.kind) << ","
            << p.per_class_count << "," << p.mean_accuracy << "," << p.stddev << "\n";
        table.push_back({{"stage", sp.name},
                         {"layer", sp.layer},
                         {"head", head_name(hc.kind)},
                         {"count", p.per_class_count},
                         {"accuracy", p.mean_accuracy},
                         {"stddev", p.stddev}});
      }
    }
  }
  atomic_write_file(ctx.path("transfer_summary.csv"), csv.str());
  ctx.note("table", table);
}

void run_ablate(const Config& cfg, RunContext& ctx) {
  ArchitectureSpec arch = load_arch(cfg.get_string("arch"));
  std::vector<std::string> specs;
  std::istringstream es(cfg.get_string("edits", ""));
  std::string one;
  while (std::getline(es, one, ',')) specs.push_back(one);
  ArchitectureSpec edited = ablate(arch, parse_edits(specs));
  save_arch(edited, ctx.path("ablated.arch"));
  ctx.note("param_count_before", param_count(arch));
  ctx.note("param_count_after", param_count(edited));

  if (cfg.has("data") && cfg.get_int("epochs", 0) > 0) {
    // train the revised architecture from scratch, as the ablation protocol asks
    Dataset data = Dataset::load(cfg.get_string("data"));
    TrainConfig tc = train_config_from(cfg);
    Checkpoint ck = train(edited, data, tc, ctx.dir(), nullptr,
                          cfg.get_bool("quiet", false) ? nullptr : &std::cerr);
    ctx.path("model.ckpt");
    ctx.path("train_log.csv");
    EvalResult test = evaluate(ck.arch, ck.params, data, Split::Test);
    ctx.note("test_accuracy", test.accuracy);
  }
}

const std::map<std::string, void (*)(const Config&, RunContext&)>& command_table() {
  static const std::map<std::string, void (*)(const Config&, RunContext&)> table = {
      {"synth", run_synth},       {"train", run_train},
      {"eval", run_eval},         {"viz", run_viz},
      {"evolve", run_evolve},     {"occlude", run_occlude},
      {"correspond", run_correspond}, {"invariance", run_invariance},
      {"transfer", run_transfer}, {"ablate", run_ablate},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : command_table()) v.push_back(name);
    return v;
  }();
  return names;
}

void run_subcommand(const std::string& name, const Config& cfg) {
  auto it = command_table().find(name);
  if (it == command_table().end())
    throw ConfigError("unknown subcommand '" + name + "'");
  if (cfg.has("threads")) set_thread_count(cfg.get_int("threads", 0));
  RunContext ctx(name, cfg, cfg.get_string("out", name + "_out"));
  it->second(cfg, ctx);
  ctx.write_manifest();
}

}  // namespace convscope
