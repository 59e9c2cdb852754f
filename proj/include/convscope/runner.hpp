#pragma once

#include <string>
#include <vector>

#include "convscope/config.hpp"

namespace convscope {

// One entry point per CLI subcommand. Every run writes its outputs plus a
// manifest.json (final merged config, seed, build stamp, output paths) into
// the configured output directory; a manifest can be fed back via `config`
// to reproduce the run.
void run_subcommand(const std::string& name, const Config& cfg);

const std::vector<std::string>& subcommand_names();

}  // namespace convscope
