#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convscope/tensor.hpp"

namespace convscope {

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct DatasetEntry {
  std::string file;  // relative to the dataset root
  int label = 0;
  Split split = Split::Train;
};

struct Rect {
  int64_t y = 0, x = 0, h = 0, w = 0;
};

// Manifest-backed image dataset. The manifest.json at the root lists class
// names, image files with labels and split assignments, and optionally a
// landmark annotation file mapping image -> named rectangles:
//
//   { "classes": ["cat", ...],
//     "images": [{"file": "cat/i0.png", "class": 0, "split": "train"}, ...],
//     "landmarks": "landmarks.json" }
//
// Class indices must be dense from 0. Decoded and resized images are cached
// in memory; the per-pixel mean over the train split is cached on disk keyed
// by the manifest hash.
class Dataset {
 public:
  static Dataset load(const std::string& root);

  const std::string& root() const { return root_; }
  const std::vector<std::string>& classes() const { return classes_; }
  int class_count() const { return static_cast<int>(classes_.size()); }
  const std::vector<DatasetEntry>& entries() const { return entries_; }
  std::vector<int> indices_of(Split split) const;

  /// Decoded image, (1,3,h,w) in [0,255]. Cached.
  const Tensor& image(int index) const;

  /// Image resized so its smaller side is `target`, center-cropped square.
  const Tensor& resized(int index, int target) const;

  /// Per-pixel mean of the resized train split; cached at the dataset root.
  const Tensor& mean(int target) const;

  /// Named landmark rectangle for an image, if annotated.
  std::optional<Rect> landmark(int index, const std::string& part) const;

  uint64_t manifest_hash() const { return manifest_hash_; }

  /// Decodes every listed file, verifying the manifest invariant eagerly.
  void validate_files() const;

  /// Fails if `split` is missing any class (needed for per-class evaluation).
  void require_all_classes(Split split) const;

 private:
  std::string root_;
  std::vector<std::string> classes_;
  std::vector<DatasetEntry> entries_;
  std::map<std::string, std::map<std::string, Rect>> landmarks_;
  uint64_t manifest_hash_ = 0;

  mutable std::map<int, Tensor> image_cache_;
  mutable std::map<std::pair<int, int>, Tensor> resized_cache_;
  mutable std::map<int, Tensor> mean_cache_;
};

/// Streaming per-pixel mean over the train split at the given square size.
Tensor compute_mean(const Dataset& data, int target);

uint64_t fnv1a64(const void* bytes, size_t len, uint64_t seed = 1469598103934665603ull);

}  // namespace convscope
