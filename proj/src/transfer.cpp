#include "convscope/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"
#include "convscope/layers.hpp"
#include "convscope/trainer.hpp"

namespace convscope {

FeatureMatrix extract_features(const Dataset& data, const std::vector<int>& indices,
                               const ArchitectureSpec& arch, const Params& params,
                               int layer, uint64_t checkpoint_hash) {
  if (indices.empty()) throw InputError("extract_features: no examples");
  if (layer >= static_cast<int>(arch.layers.size()))
    throw InvalidArgumentError("extract_features: layer index out of range");
  const int target = static_cast<int>(arch.input.h);
  FeatureMatrix m;
  m.layer = layer;
  m.checkpoint_hash = checkpoint_hash;
  m.rows = static_cast<int64_t>(indices.size());
  for (int idx : indices) {
    Tensor in = preprocessed_input(data, idx, target);
    const Tensor* feat = &in;
    ActivationRecord rec;
    if (layer >= 0) {
      rec = net_forward(arch, params, in, Mode::Eval);
      feat = &rec.output_of(layer);
    }
    if (m.cols == 0) {
      m.cols = feat->size();
      m.data.reserve(static_cast<size_t>(m.rows * m.cols));
    }
    if (feat->size() != m.cols) throw InternalError("inconsistent feature width");
    for (int64_t i = 0; i < feat->size(); ++i)
      m.data.push_back(static_cast<float>(feat->data()[i]));
    m.labels.push_back(data.entries()[static_cast<size_t>(idx)].label);
    m.indices.push_back(idx);
  }
  for (float v : m.data)
    if (!std::isfinite(v)) throw NumericError("extract_features produced non-finite values");
  return m;
}

namespace {
constexpr char kFeatMagic[8] = {'C', 'S', 'F', 'E', 'A', 'T', '0', '1'};
}

void save_features(const FeatureMatrix& m, const std::string& path) {
  std::string bytes;
  bytes.append(kFeatMagic, 8);
  auto put64 = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto put32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put64(static_cast<uint64_t>(m.rows));
  put64(static_cast<uint64_t>(m.cols));
  put32(static_cast<uint32_t>(m.layer));
  put64(m.checkpoint_hash);
  for (float v : m.data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put32(bits);
  }
  for (int v : m.labels) put32(static_cast<uint32_t>(v));
  for (int v : m.indices) put32(static_cast<uint32_t>(v));
  atomic_write_file(path, bytes);
}

FeatureMatrix load_features(const std::string& path) {
  std::string bytes = read_file(path);
  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size()) throw FormatError("truncated feature file: " + path);
  };
  need(8);
  if (std::memcmp(bytes.data(), kFeatMagic, 8) != 0)
    throw FormatError("not a feature-matrix file: " + path);
  pos = 8;
  auto get64 = [&]() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return v;
  };
  auto get32 = [&]() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
    return v;
  };
  FeatureMatrix m;
  m.rows = static_cast<int64_t>(get64());
  m.cols = static_cast<int64_t>(get64());
  m.layer = static_cast<int>(get32());
  m.checkpoint_hash = get64();
  m.data.resize(static_cast<size_t>(m.rows * m.cols));
  for (float& v : m.data) {
    uint32_t bits = get32();
    std::memcpy(&v, &bits, 4);
  }
  m.labels.resize(static_cast<size_t>(m.rows));
  for (int& v : m.labels) v = static_cast<int>(get32());
  m.indices.resize(static_cast<size_t>(m.rows));
  for (int& v : m.indices) v = static_cast<int>(get32());
  return m;
}

HeadKind head_from_name(const std::string& name) {
  if (name == "softmax") return HeadKind::Softmax;
  if (name == "svm" || name == "linear-svm") return HeadKind::LinearSvm;
  throw ConfigError("unknown head kind '" + name + "'");
}

const char* head_name(HeadKind k) {
  return k == HeadKind::Softmax ? "softmax" : "svm";
}

namespace {

int infer_classes(const FeatureMatrix& feats, const HeadConfig& cfg) {
  std::set<int> distinct(feats.labels.begin(), feats.labels.end());
  if (distinct.size() < 2)
    throw InputError("head training needs at least two classes (degenerate problem)");
  int classes = cfg.classes;
  int max_label = *distinct.rbegin();
  if (classes == 0) classes = max_label + 1;
  if (max_label >= classes)
    throw InputError("label " + std::to_string(max_label) + " exceeds class count");
  return classes;
}

}  // namespace

HeadModel train_head(const FeatureMatrix& feats, const HeadConfig& cfg) {
  if (feats.rows < 1) throw InputError("train_head: empty feature matrix");
  const int classes = infer_classes(feats, cfg);
  const int64_t dim = feats.cols;

  HeadModel head;
  head.kind = cfg.kind;
  head.classes = classes;
  head.weights = Tensor({classes, dim, 1, 1}, 0.0);
  head.bias.assign(static_cast<size_t>(classes), 0.0);

  if (cfg.standardize) {
    head.feat_mean.assign(static_cast<size_t>(dim), 0.0);
    head.feat_scale.assign(static_cast<size_t>(dim), 1.0);
    for (int64_t r = 0; r < feats.rows; ++r)
      for (int64_t c = 0; c < dim; ++c)
        head.feat_mean[static_cast<size_t>(c)] += feats.at(r, c);
    for (double& v : head.feat_mean) v /= static_cast<double>(feats.rows);
    std::vector<double> var(static_cast<size_t>(dim), 0.0);
    for (int64_t r = 0; r < feats.rows; ++r)
      for (int64_t c = 0; c < dim; ++c) {
        double d = feats.at(r, c) - head.feat_mean[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] += d * d;
      }
    for (int64_t c = 0; c < dim; ++c)
      head.feat_scale[static_cast<size_t>(c)] =
          1.0 / std::sqrt(var[static_cast<size_t>(c)] / static_cast<double>(feats.rows) + 1e-8);
  }

  auto standardized = [&](int64_t r, int64_t c) -> double {
    double v = feats.at(r, c);
    if (!head.feat_mean.empty())
      v = (v - head.feat_mean[static_cast<size_t>(c)]) * head.feat_scale[static_cast<size_t>(c)];
    return v;
  };

  Rng rng(cfg.seed);
  std::vector<int64_t> order(static_cast<size_t>(feats.rows));
  for (int64_t i = 0; i < feats.rows; ++i) order[static_cast<size_t>(i)] = i;

  const double lambda =
      cfg.kind == HeadKind::LinearSvm
          ? 1.0 / (cfg.svm_c * static_cast<double>(feats.rows))
          : 0.0;

  std::vector<double> scores(static_cast<size_t>(classes));
  std::vector<double> grad_row(static_cast<size_t>(classes));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    // step size decays on a 1/(1+t) schedule for stable convergence
    double lr = cfg.lr / (1.0 + 0.1 * static_cast<double>(epoch));
    for (int64_t r : order) {
      int label = feats.labels[static_cast<size_t>(r)];
      for (int c = 0; c < classes; ++c) {
        double acc = head.bias[static_cast<size_t>(c)];
        const double* w = head.weights.data() + static_cast<int64_t>(c) * dim;
        for (int64_t d = 0; d < dim; ++d) acc += w[d] * standardized(r, d);
        scores[static_cast<size_t>(c)] = acc;
      }
      if (cfg.kind == HeadKind::Softmax) {
        SoftmaxXent sx = softmax_xent(scores, label);
        grad_row = sx.grad_logits;
      } else {
        // one-vs-rest hinge: for each class, y = +-1, grad = -y when margin unmet
        for (int c = 0; c < classes; ++c) {
          double y = c == label ? 1.0 : -1.0;
          grad_row[static_cast<size_t>(c)] =
              y * scores[static_cast<size_t>(c)] < 1.0 ? -y : 0.0;
        }
      }
      for (int c = 0; c < classes; ++c) {
        double g = grad_row[static_cast<size_t>(c)];
        double* w = head.weights.data() + static_cast<int64_t>(c) * dim;
        if (lambda > 0.0) {
          double shrink = 1.0 - lr * lambda;
          for (int64_t d = 0; d < dim; ++d) w[d] *= shrink;
        }
        if (g != 0.0) {
          for (int64_t d = 0; d < dim; ++d) w[d] -= lr * g * standardized(r, d);
          head.bias[static_cast<size_t>(c)] -= lr * g;
        }
      }
    }
  }
  return head;
}

std::vector<double> head_scores(const HeadModel& head, const float* row, int64_t cols) {
  if (cols != head.weights.shape().c)
    throw ShapeError("head_scores: feature width mismatch");
  std::vector<double> scores(static_cast<size_t>(head.classes));
  for (int c = 0; c < head.classes; ++c) {
    double acc = head.bias[static_cast<size_t>(c)];
    const double* w = head.weights.data() + static_cast<int64_t>(c) * cols;
    for (int64_t d = 0; d < cols; ++d) {
      double v = row[d];
      if (!head.feat_mean.empty())
        v = (v - head.feat_mean[static_cast<size_t>(d)]) * head.feat_scale[static_cast<size_t>(d)];
      acc += w[d] * v;
    }
    scores[static_cast<size_t>(c)] = acc;
  }
  return scores;
}

std::vector<int> head_predict(const HeadModel& head, const FeatureMatrix& feats) {
  std::vector<int> out(static_cast<size_t>(feats.rows));
  for (int64_t r = 0; r < feats.rows; ++r) {
    std::vector<double> s =
        head_scores(head, feats.data.data() + r * feats.cols, feats.cols);
    int best = 0;
    for (size_t c = 1; c < s.size(); ++c)
      if (s[c] > s[static_cast<size_t>(best)]) best = static_cast<int>(c);
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

PerClassResult evaluate_per_class(const HeadModel& head, const FeatureMatrix& feats) {
  std::vector<int> preds = head_predict(head, feats);
  std::vector<int64_t> total(static_cast<size_t>(head.classes), 0);
  std::vector<int64_t> right(static_cast<size_t>(head.classes), 0);
  for (int64_t r = 0; r < feats.rows; ++r) {
    int label = feats.labels[static_cast<size_t>(r)];
    if (label < 0 || label >= head.classes)
      throw InputError("evaluation label out of range");
    ++total[static_cast<size_t>(label)];
    if (preds[static_cast<size_t>(r)] == label) ++right[static_cast<size_t>(label)];
  }
  PerClassResult res;
  res.per_class.resize(static_cast<size_t>(head.classes));
  for (int c = 0; c < head.classes; ++c) {
    if (total[static_cast<size_t>(c)] == 0)
      throw InputError("evaluation set has no examples of class " + std::to_string(c));
    res.per_class[static_cast<size_t>(c)] =
        static_cast<double>(right[static_cast<size_t>(c)]) /
        static_cast<double>(total[static_cast<size_t>(c)]);
    res.mean_accuracy += res.per_class[static_cast<size_t>(c)];
  }
  res.mean_accuracy /= static_cast<double>(head.classes);
  return res;
}

namespace {

FeatureMatrix select_rows(const FeatureMatrix& src, const std::vector<int64_t>& rows) {
  FeatureMatrix out;
  out.rows = static_cast<int64_t>(rows.size());
  out.cols = src.cols;
  out.layer = src.layer;
  out.checkpoint_hash = src.checkpoint_hash;
  out.data.reserve(static_cast<size_t>(out.rows * out.cols));
  for (int64_t r : rows) {
    const float* p = src.data.data() + r * src.cols;
    out.data.insert(out.data.end(), p, p + src.cols);
    out.labels.push_back(src.labels[static_cast<size_t>(r)]);
    out.indices.push_back(src.indices[static_cast<size_t>(r)]);
  }
  return out;
}

}  // namespace

std::vector<SweepPoint> size_sweep(const FeatureMatrix& train_feats,
                                   const FeatureMatrix& test_feats,
                                   const std::vector<int>& per_class_counts, int folds,
                                   const HeadConfig& cfg) {
  if (folds < 1) throw InvalidArgumentError("size_sweep: folds must be >= 1");
  std::map<int, std::vector<int64_t>> by_class;
  for (int64_t r = 0; r < train_feats.rows; ++r)
    by_class[train_feats.labels[static_cast<size_t>(r)]].push_back(r);

  std::vector<SweepPoint> points;
  for (int count : per_class_counts) {
    if (count < 1) throw InvalidArgumentError("size_sweep: counts must be >= 1");
    for (const auto& [cls, rows] : by_class)
      if (static_cast<size_t>(count) > rows.size())
        throw InputError("size_sweep: class " + std::to_string(cls) + " has only " +
                         std::to_string(rows.size()) + " examples, need " +
                         std::to_string(count));
    SweepPoint point;
    point.per_class_count = count;
    for (int fold = 0; fold < folds; ++fold) {
      Rng rng(cfg.seed + 1315423911ull * static_cast<uint64_t>(fold) +
              2654435761ull * static_cast<uint64_t>(count));
      std::vector<int64_t> chosen;
      for (const auto& [cls, rows] : by_class) {
        std::vector<int64_t> shuffled = rows;
        rng.shuffle(shuffled);
        chosen.insert(chosen.end(), shuffled.begin(), shuffled.begin() + count);
      }
      std::sort(chosen.begin(), chosen.end());
      FeatureMatrix sample = select_rows(train_feats, chosen);
      HeadConfig fold_cfg = cfg;
      fold_cfg.seed = cfg.seed + static_cast<uint64_t>(fold) * 7919u;
      HeadModel head = train_head(sample, fold_cfg);
      point.fold_accuracy.push_back(evaluate_per_class(head, test_feats).mean_accuracy);
    }
    for (double a : point.fold_accuracy) point.mean_accuracy += a;
    point.mean_accuracy /= static_cast<double>(folds);
    double var = 0.0;
    for (double a : point.fold_accuracy)
      var += (a - point.mean_accuracy) * (a - point.mean_accuracy);
    point.stddev = std::sqrt(var / static_cast<double>(folds));
    points.push_back(std::move(point));
  }
  return points;
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path) {
  std::ostringstream os;
  os << "per_class_count,mean_per_class_accuracy,stddev,folds\n";
  for (const SweepPoint& p : points)
    os << p.per_class_count << "," << p.mean_accuracy << "," << p.stddev << ","
       << p.fold_accuracy.size() << "\n";
  atomic_write_file(path, os.str());
}

ArchitectureSpec ablate(const ArchitectureSpec& arch, const std::vector<ArchEdit>& edits) {
  ArchitectureSpec out = arch;
  // apply removals from the back so indices stay meaningful
  std::vector<ArchEdit> removals;
  for (const ArchEdit& e : edits) {
    if (e.layer < 0 || static_cast<size_t>(e.layer) >= arch.layers.size())
      throw InvalidArgumentError("ablate: layer index " + std::to_string(e.layer) +
                                 " out of range");
    if (e.kind == ArchEdit::Kind::Resize) {
      LayerDesc& d = out.layers[static_cast<size_t>(e.layer)];
      if (e.new_size < 1) throw InvalidArgumentError("ablate: resize needs a positive size");
      if (d.kind == LayerKind::Conv)
        d.out_channels = e.new_size;
      else if (d.kind == LayerKind::FullyConnected)
        d.units = e.new_size;
      else
        throw InvalidArgumentError("ablate: layer " + std::to_string(e.layer) +
                                   " (" + layer_kind_name(d.kind) + ") is not resizable");
    } else {
      if (out.layers[static_cast<size_t>(e.layer)].kind == LayerKind::SoftmaxClassifier)
        throw InvalidArgumentError("ablate: the classifier cannot be removed");
      removals.push_back(e);
    }
  }
  std::sort(removals.begin(), removals.end(),
            [](const ArchEdit& a, const ArchEdit& b) { return a.layer > b.layer; });
  for (const ArchEdit& e : removals)
    out.layers.erase(out.layers.begin() + e.layer);
  validate_arch(out);  // throws ShapeError naming the broken junction
  return out;
}

std::vector<ArchEdit> parse_edits(const std::vector<std::string>& specs) {
  std::vector<ArchEdit> edits;
  for (const std::string& s : specs) {
    ArchEdit e;
    if (s.rfind("remove:", 0) == 0) {
      e.kind = ArchEdit::Kind::RemoveLayer;
      e.layer = std::stoi(s.substr(7));
    } else if (s.rfind("resize:", 0) == 0) {
      std::string body = s.substr(7);
      size_t eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError("bad edit spec '" + s + "' (want resize:LAYER=SIZE)");
      e.kind = ArchEdit::Kind::Resize;
      e.layer = std::stoi(body.substr(0, eq));
      e.new_size = std::stoi(body.substr(eq + 1));
    } else {
      throw ConfigError("bad edit spec '" + s + "' (want remove:LAYER or resize:LAYER=SIZE)");
    }
    edits.push_back(e);
  }
  return edits;
}

}  // namespace convscope
