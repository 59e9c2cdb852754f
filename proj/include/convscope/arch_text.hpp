#pragma once

#include <string>

#include "convscope/network.hpp"

namespace convscope {

// Text form of an architecture, one layer per line, `kind key=value ...`.
// The first non-comment line declares the input geometry:
//
//   input c=3 h=224 w=224
//   conv out=96 k=7 stride=2 pad=1
//   relu
//   pool k=3 stride=2 ceil=true
//   lrn n=5 k=2 alpha=1e-4 beta=0.75
//   flatten
//   fc out=4096
//   dropout p=0.5
//   softmax classes=1000
//
// '#' starts a comment. parse(print(a)) == a for any valid spec.

ArchitectureSpec parse_arch_text(const std::string& text);
std::string print_arch_text(const ArchitectureSpec& arch);

ArchitectureSpec load_arch(const std::string& path);
void save_arch(const ArchitectureSpec& arch, const std::string& path);

}  // namespace convscope
