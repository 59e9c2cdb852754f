#pragma once

#include <string>

#include "convscope/network.hpp"
#include "convscope/trainer.hpp"

namespace convscope {

// Self-contained training snapshot. The binary layout is little-endian:
// magic "CSCKPT01", then the architecture text block, epoch, rng seed and
// state, named parameter tensors (32-bit floats, documented rounding from the
// in-memory doubles), optimizer state, and a trailing FNV-1a content hash
// that is verified on load. Version mismatches are rejected, never guessed.
struct Checkpoint {
  ArchitectureSpec arch;
  Params params;
  OptimizerState opt;
  int epoch = 0;
  uint64_t seed = 0;
  std::string rng_state;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Content hash of a checkpoint file (the stored trailing hash).
uint64_t checkpoint_file_hash(const std::string& path);

}  // namespace convscope
