#include "convscope/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <set>

#include "convscope/errors.hpp"
#include "convscope/image_io.hpp"
#include "convscope/imageops.hpp"

namespace convscope {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split name '" + name + "'");
}

uint64_t fnv1a64(const void* bytes, size_t len, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

Dataset Dataset::load(const std::string& root) {
  Dataset d;
  d.root_ = root;
  std::string manifest_path = (fs::path(root) / "manifest.json").string();
  std::string text = read_file(manifest_path);
  d.manifest_hash_ = fnv1a64(text.data(), text.size());

  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw FormatError(manifest_path + ": invalid JSON");
  if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].empty())
    throw FormatError(manifest_path + ": missing classes array");
  for (const auto& c : j["classes"]) d.classes_.push_back(c.get<std::string>());

  if (!j.contains("images") || !j["images"].is_array() || j["images"].empty())
    throw FormatError(manifest_path + ": missing images array");
  std::set<int> seen_labels;
  for (const auto& e : j["images"]) {
    DatasetEntry entry;
    entry.file = e.at("file").get<std::string>();
    entry.label = e.at("class").get<int>();
    entry.split = split_from_name(e.at("split").get<std::string>());
    if (entry.label < 0 || entry.label >= d.class_count())
      throw FormatError(manifest_path + ": class index " + std::to_string(entry.label) +
                        " out of range for " + entry.file);
    if (!fs::exists(fs::path(root) / entry.file))
      throw InputError(manifest_path + ": listed file does not exist: " + entry.file);
    seen_labels.insert(entry.label);
    d.entries_.push_back(std::move(entry));
  }
  // dense class indices from 0
  for (int c = 0; c < d.class_count(); ++c)
    if (!seen_labels.count(c))
      throw FormatError(manifest_path + ": class " + std::to_string(c) + " (" +
                        d.classes_[static_cast<size_t>(c)] + ") has no images");

  if (j.contains("landmarks")) {
    std::string lm_path = (fs::path(root) / j["landmarks"].get<std::string>()).string();
    json lm = json::parse(read_file(lm_path), nullptr, false);
    if (lm.is_discarded() || !lm.is_object())
      throw FormatError(lm_path + ": invalid landmark JSON");
    for (auto& [file, parts] : lm.items()) {
      for (auto& [part, rect] : parts.items()) {
        if (!rect.is_array() || rect.size() != 4)
          throw FormatError(lm_path + ": landmark '" + part + "' of " + file +
                            " must be [y, x, h, w]");
        d.landmarks_[file][part] =
            Rect{rect[0].get<int64_t>(), rect[1].get<int64_t>(), rect[2].get<int64_t>(),
                 rect[3].get<int64_t>()};
      }
    }
  }
  return d;
}

std::vector<int> Dataset::indices_of(Split split) const {
  std::vector<int> out;
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

const Tensor& Dataset::image(int index) const {
  auto it = image_cache_.find(index);
  if (it != image_cache_.end()) return it->second;
  const DatasetEntry& e = entries_.at(static_cast<size_t>(index));
  Tensor img = load_image((fs::path(root_) / e.file).string());
  return image_cache_.emplace(index, std::move(img)).first->second;
}

const Tensor& Dataset::resized(int index, int target) const {
  auto key = std::make_pair(index, target);
  auto it = resized_cache_.find(key);
  if (it != resized_cache_.end()) return it->second;
  Tensor r = resize_smaller_to(image(index), target);
  return resized_cache_.emplace(key, std::move(r)).first->second;
}

const Tensor& Dataset::mean(int target) const {
  auto it = mean_cache_.find(target);
  if (it != mean_cache_.end()) return it->second;
  char name[64];
  std::snprintf(name, sizeof(name), "mean_t%d_%016llx.bin", target,
                static_cast<unsigned long long>(manifest_hash_));
  std::string cache_path = (fs::path(root_) / name).string();
  if (fs::exists(cache_path)) {
    Tensor m = load_tensor(cache_path);
    if (m.shape() == Extent4{1, 3, target, target})
      return mean_cache_.emplace(target, std::move(m)).first->second;
  }
  Tensor m = compute_mean(*this, target);
  save_tensor(m, cache_path);
  return mean_cache_.emplace(target, std::move(m)).first->second;
}

std::optional<Rect> Dataset::landmark(int index, const std::string& part) const {
  const DatasetEntry& e = entries_.at(static_cast<size_t>(index));
  auto fit = landmarks_.find(e.file);
  if (fit == landmarks_.end()) return std::nullopt;
  auto pit = fit->second.find(part);
  if (pit == fit->second.end()) return std::nullopt;
  return pit->second;
}

void Dataset::validate_files() const {
  for (size_t i = 0; i < entries_.size(); ++i) (void)image(static_cast<int>(i));
}

void Dataset::require_all_classes(Split split) const {
  std::set<int> present;
  for (const DatasetEntry& e : entries_)
    if (e.split == split) present.insert(e.label);
  for (int c = 0; c < class_count(); ++c)
    if (!present.count(c))
      throw InputError("split '" + std::string(split_name(split)) + "' is missing class " +
                       std::to_string(c) + " (" + classes_[static_cast<size_t>(c)] + ")");
}

Tensor compute_mean(const Dataset& data, int target) {
  std::vector<int> train = data.indices_of(Split::Train);
  if (train.empty()) throw InputError("mean computation needs at least one training image");
  Tensor acc({1, 3, target, target}, 0.0);
  for (int idx : train) {
    const Tensor& img = data.resized(idx, target);
    for (int64_t i = 0; i < acc.size(); ++i) acc.data()[i] += img.data()[i];
  }
  for (int64_t i = 0; i < acc.size(); ++i)
    acc.data()[i] /= static_cast<double>(train.size());
  return acc;
}

}  // namespace convscope
