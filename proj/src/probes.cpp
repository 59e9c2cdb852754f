#include "convscope/probes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"

namespace convscope {

namespace {

std::vector<double> flat_layer(const ActivationRecord& rec, int layer) {
  const Tensor& t = rec.output_of(layer);
  return std::vector<double>(t.data(), t.data() + t.size());
}

int argmax_of(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace

OcclusionReport occlusion_sweep(const ArchitectureSpec& arch, const Params& params,
                                const Tensor& input, int label,
                                const OcclusionOptions& opt) {
  const Extent4& s = input.shape();
  if (s.n != 1) throw InvalidArgumentError("occlusion_sweep expects a batch-1 input");
  if (opt.stride < 1) throw InvalidArgumentError("occluder stride must be >= 1");
  int size = opt.size > 0 ? opt.size : std::max<int>(1, static_cast<int>(s.h) / 4);
  if (size > s.h || size > s.w)
    throw InvalidArgumentError("occluder larger than the input");

  OcclusionReport rep;
  rep.occ_size = size;
  rep.occ_stride = opt.stride;
  rep.fill = opt.fill;
  rep.layer = opt.layer >= 0 ? opt.layer : top_conv_stage(arch).layer;

  // baseline pass resolves the strongest map when asked
  ActivationRecord clean = net_forward(arch, params, input, Mode::Eval);
  const Tensor& feat = clean.output_of(rep.layer);
  rep.map = opt.map;
  if (rep.map < 0) {
    Tensor sums = reduce_sum(feat, Axes::hw());
    int best = 0;
    for (int64_t c = 1; c < sums.shape().c; ++c)
      if (sums.at(0, c, 0, 0) > sums.at(0, best, 0, 0)) best = static_cast<int>(c);
    rep.map = best;
  }
  if (rep.map >= feat.shape().c)
    throw InvalidArgumentError("occlusion: feature map index out of range");
  std::vector<double> clean_probs = probabilities(clean)[0];
  if (label < 0 || static_cast<size_t>(label) >= clean_probs.size())
    throw InvalidArgumentError("occlusion: label out of range");
  rep.baseline_prob = clean_probs[static_cast<size_t>(label)];
  rep.baseline_label = argmax_of(clean_probs);
  rep.baseline_act = 0.0;
  for (int64_t y = 0; y < feat.shape().h; ++y)
    for (int64_t x = 0; x < feat.shape().w; ++x)
      rep.baseline_act += feat.at(0, rep.map, y, x);

  // occluder top-left grid: multiples of stride, plus the flush-right/bottom
  // position so the sweep always reaches the far border
  auto positions = [&](int64_t extent) {
    std::vector<int64_t> pos;
    for (int64_t p = 0; p + size <= extent; p += opt.stride) pos.push_back(p);
    if (pos.empty() || pos.back() != extent - size) pos.push_back(extent - size);
    return pos;
  };
  std::vector<int64_t> ys = positions(s.h);
  std::vector<int64_t> xs = positions(s.w);
  rep.grid_h = static_cast<int>(ys.size());
  rep.grid_w = static_cast<int>(xs.size());

  for (int64_t y0 : ys)
    for (int64_t x0 : xs) {
      Tensor occluded = paste_rect(input, y0, x0, size, size, opt.fill);
      ActivationRecord rec = net_forward(arch, params, occluded, Mode::Eval);
      std::vector<double> probs = probabilities(rec)[0];
      const Tensor& f = rec.output_of(rep.layer);
      double act = 0.0;
      for (int64_t fy = 0; fy < f.shape().h; ++fy)
        for (int64_t fx = 0; fx < f.shape().w; ++fx) act += f.at(0, rep.map, fy, fx);
      rep.prob_map.push_back(probs[static_cast<size_t>(label)]);
      rep.act_map.push_back(act);
      rep.label_map.push_back(argmax_of(probs));
      rep.pos_y.push_back(y0);
      rep.pos_x.push_back(x0);
    }
  return rep;
}

std::vector<double> feature_difference(const ArchitectureSpec& arch, const Params& params,
                                       const Tensor& input, const Tensor& occluded,
                                       int layer) {
  if (!input.same_shape(occluded))
    throw ShapeError("feature_difference: inputs must share a shape");
  ActivationRecord a = net_forward(arch, params, input, Mode::Eval);
  ActivationRecord b = net_forward(arch, params, occluded, Mode::Eval);
  std::vector<double> fa = flat_layer(a, layer);
  std::vector<double> fb = flat_layer(b, layer);
  for (size_t i = 0; i < fa.size(); ++i) fa[i] -= fb[i];
  return fa;
}

CorrespondenceResult correspondence_score(const std::vector<std::vector<double>>& eps_list,
                                          double sign_tau) {
  if (eps_list.size() < 2)
    throw InvalidArgumentError("correspondence_score needs at least two vectors");
  const size_t dim = eps_list[0].size();
  if (dim == 0) throw InvalidArgumentError("correspondence_score: empty vectors");
  for (const auto& v : eps_list)
    if (v.size() != dim)
      throw ShapeError("correspondence_score: vectors must have equal length");

  auto sign3 = [&](double v) -> int {
    if (v > sign_tau) return 1;
    if (v < -sign_tau) return -1;
    return 0;
  };
  std::vector<std::vector<int>> signs(eps_list.size(), std::vector<int>(dim));
  for (size_t i = 0; i < eps_list.size(); ++i)
    for (size_t d = 0; d < dim; ++d) signs[i][d] = sign3(eps_list[i][d]);

  std::vector<double> pair_scores;
  for (size_t i = 0; i < signs.size(); ++i)
    for (size_t j = i + 1; j < signs.size(); ++j) {
      int64_t differing = 0;
      for (size_t d = 0; d < dim; ++d)
        if (signs[i][d] != signs[j][d]) ++differing;
      pair_scores.push_back(static_cast<double>(differing) / static_cast<double>(dim));
    }

  CorrespondenceResult r;
  r.pairs = static_cast<int>(pair_scores.size());
  for (double v : pair_scores) r.mean += v;
  r.mean /= static_cast<double>(pair_scores.size());
  double var = 0.0;
  for (double v : pair_scores) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(pair_scores.size()));
  return r;
}

Tensor occlude_rect(const Tensor& image, const Rect& rect, double fill) {
  const Extent4& s = image.shape();
  if (rect.y < 0 || rect.x < 0 || rect.h < 0 || rect.w < 0 || rect.y + rect.h > s.h ||
      rect.x + rect.w > s.w)
    throw InvalidArgumentError("occlusion rectangle out of bounds");
  if (rect.h == 0 || rect.w == 0) return image;  // zero-area: identity
  return paste_rect(image, rect.y, rect.x, rect.h, rect.w, fill);
}

Tensor occlude_part(const Dataset& data, int index, const Tensor& preprocessed,
                    const std::string& part, double fill) {
  std::optional<Rect> rect = data.landmark(index, part);
  if (!rect)
    throw InputError("no landmark '" + part + "' annotated for image " +
                     data.entries()[static_cast<size_t>(index)].file);
  return occlude_rect(preprocessed, *rect, fill);
}

TransformKind transform_from_name(const std::string& name) {
  if (name == "translate" || name == "vertical-translate") return TransformKind::VerticalTranslate;
  if (name == "scale") return TransformKind::Scale;
  if (name == "rotate") return TransformKind::Rotate;
  throw ConfigError("unknown transform '" + name + "'");
}

const char* transform_name(TransformKind t) {
  switch (t) {
    case TransformKind::VerticalTranslate: return "translate";
    case TransformKind::Scale: return "scale";
    case TransformKind::Rotate: return "rotate";
  }
  return "?";
}

Tensor apply_transform(const Tensor& input, TransformKind kind, double value,
                       Resample resample, double fill) {
  switch (kind) {
    case TransformKind::VerticalTranslate:
      return translate_image(input, static_cast<int64_t>(std::llround(value)), 0, fill);
    case TransformKind::Scale:
      if (!(value > 0.0)) throw InvalidArgumentError("scale ratio must be positive");
      return scale_image(input, value, fill, resample);
    case TransformKind::Rotate:
      return rotate_image(input, value, fill, resample);
  }
  throw InternalError("unhandled transform kind");
}

std::vector<InvarianceCurve> invariance_sweep(const ArchitectureSpec& arch,
                                              const Params& params,
                                              const std::vector<Tensor>& inputs,
                                              const std::vector<int>& labels,
                                              const InvarianceOptions& opt) {
  if (inputs.size() != labels.size())
    throw InvalidArgumentError("invariance_sweep: inputs and labels differ in count");
  if (opt.sweep.empty()) throw InvalidArgumentError("invariance_sweep: empty sweep");
  double identity = opt.kind == TransformKind::Scale ? 1.0 : 0.0;
  bool has_identity = false;
  for (double v : opt.sweep)
    if (v == identity) has_identity = true;
  if (!has_identity)
    throw InvalidArgumentError("invariance sweep must include the identity value");
  if (opt.kind == TransformKind::Scale)
    for (double v : opt.sweep)
      if (!(v > 0.0)) throw InvalidArgumentError("scale sweep values must be positive");

  std::vector<InvarianceCurve> curves;
  for (size_t i = 0; i < inputs.size(); ++i) {
    InvarianceCurve curve;
    curve.kind = opt.kind;
    curve.image_index = static_cast<int>(i);
    curve.sweep = opt.sweep;
    curve.distances.assign(opt.layers.size(), {});

    ActivationRecord ref = net_forward(arch, params, inputs[i], Mode::Eval);
    std::vector<std::vector<double>> ref_feats;
    for (int layer : opt.layers) ref_feats.push_back(flat_layer(ref, layer));

    for (double v : opt.sweep) {
      Tensor moved = apply_transform(inputs[i], opt.kind, v, opt.resample, opt.fill);
      ActivationRecord rec = net_forward(arch, params, moved, Mode::Eval);
      for (size_t li = 0; li < opt.layers.size(); ++li) {
        std::vector<double> f = flat_layer(rec, opt.layers[li]);
        double acc = 0.0;
        for (size_t d = 0; d < f.size(); ++d) {
          double diff = f[d] - ref_feats[li][d];
          acc += diff * diff;
        }
        curve.distances[li].push_back(std::sqrt(acc));
      }
      std::vector<double> probs = probabilities(rec)[0];
      curve.prob_true.push_back(probs[static_cast<size_t>(labels[i])]);
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

double feature_spread(const ArchitectureSpec& arch, const Params& params,
                      const std::vector<Tensor>& inputs, int layer) {
  if (inputs.empty()) throw InvalidArgumentError("feature_spread: no inputs");
  std::vector<std::vector<double>> feats;
  for (const Tensor& in : inputs) {
    ActivationRecord rec = net_forward(arch, params, in, Mode::Eval);
    feats.push_back(flat_layer(rec, layer));
  }
  size_t dim = feats[0].size();
  std::vector<double> centroid(dim, 0.0);
  for (const auto& f : feats)
    for (size_t d = 0; d < dim; ++d) centroid[d] += f[d];
  for (double& v : centroid) v /= static_cast<double>(feats.size());
  double acc = 0.0;
  for (const auto& f : feats) {
    double one = 0.0;
    for (size_t d = 0; d < dim; ++d) {
      double diff = f[d] - centroid[d];
      one += diff * diff;
    }
    acc += one;
  }
  return std::sqrt(acc / static_cast<double>(feats.size()));
}

void write_occlusion_csv(const OcclusionReport& rep, const std::string& path) {
  std::ostringstream os;
  os << "grid_row,grid_col,occ_y,occ_x,prob_true,act_sum,argmax_label\n";
  for (int gy = 0; gy < rep.grid_h; ++gy)
    for (int gx = 0; gx < rep.grid_w; ++gx) {
      size_t i = static_cast<size_t>(gy) * rep.grid_w + gx;
      os << gy << "," << gx << "," << rep.pos_y[i] << "," << rep.pos_x[i] << ","
         << rep.prob_map[i] << "," << rep.act_map[i] << "," << rep.label_map[i] << "\n";
    }
  atomic_write_file(path, os.str());
}

namespace {

Tensor render_heat(const std::vector<double>& values, int grid_h, int grid_w, int cell_px) {
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Tensor img({1, 3, grid_h * cell_px, grid_w * cell_px});
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      double t = hi - lo < 1e-15 ? 0.5 : (values[static_cast<size_t>(gy) * grid_w + gx] - lo) / (hi - lo);
      uint8_t rgb[3];
      heat_color(t, rgb);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cell_px; ++y)
          for (int x = 0; x < cell_px; ++x)
            img.at(0, c, gy * cell_px + y, gx * cell_px + x) = rgb[c];
    }
  return img;
}

}  // namespace

void write_occlusion_pngs(const OcclusionReport& rep, const std::string& prob_png,
                          const std::string& act_png, const std::string& label_png,
                          const std::string& legend_json,
                          const std::vector<std::string>& class_names, int cell_px) {
  save_image(render_heat(rep.prob_map, rep.grid_h, rep.grid_w, cell_px), prob_png);
  save_image(render_heat(rep.act_map, rep.grid_h, rep.grid_w, cell_px), act_png);

  Tensor label_img({1, 3, rep.grid_h * cell_px, rep.grid_w * cell_px});
  std::set<int> seen;
  for (int gy = 0; gy < rep.grid_h; ++gy)
    for (int gx = 0; gx < rep.grid_w; ++gx) {
      int label = rep.label_map[static_cast<size_t>(gy) * rep.grid_w + gx];
      seen.insert(label);
      uint8_t rgb[3];
      label_color(label, rgb);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cell_px; ++y)
          for (int x = 0; x < cell_px; ++x)
            label_img.at(0, c, gy * cell_px + y, gx * cell_px + x) = rgb[c];
    }
  save_image(label_img, label_png);

  nlohmann::json legend;
  for (int label : seen) {
    uint8_t rgb[3];
    label_color(label, rgb);
    nlohmann::json entry;
    entry["class"] = label;
    if (label >= 0 && static_cast<size_t>(label) < class_names.size())
      entry["name"] = class_names[static_cast<size_t>(label)];
    entry["rgb"] = {rgb[0], rgb[1], rgb[2]};
    legend.push_back(entry);
  }
  atomic_write_file(legend_json, legend.dump(1));
}

void write_invariance_csv(const std::vector<InvarianceCurve>& curves,
                          const std::vector<int>& layers, const std::string& path) {
  std::ostringstream os;
  os << "transform,image,value,prob_true";
  for (int layer : layers) os << ",dist_layer" << layer;
  os << "\n";
  for (const InvarianceCurve& c : curves)
    for (size_t si = 0; si < c.sweep.size(); ++si) {
      os << transform_name(c.kind) << "," << c.image_index << "," << c.sweep[si] << ","
         << c.prob_true[si];
      for (size_t li = 0; li < c.distances.size(); ++li) os << "," << c.distances[li][si];
      os << "\n";
    }
  atomic_write_file(path, os.str());
}

}  // namespace convscope
