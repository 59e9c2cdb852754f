#include "convscope.h"

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "convscope/checkpoint.hpp"
#include "convscope/config.hpp"
#include "convscope/errors.hpp"
#include "convscope/network.hpp"
#include "convscope/parallel.hpp"
#include "convscope/runner.hpp"

namespace {

thread_local std::string t_last_error;

convscope_status status_of(convscope::ErrorCategory c) {
  using EC = convscope::ErrorCategory;
  switch (c) {
    case EC::InvalidArgument: return CONVSCOPE_ERR_INVALID_ARGUMENT;
    case EC::Shape: return CONVSCOPE_ERR_SHAPE;
    case EC::Config: return CONVSCOPE_ERR_CONFIG;
    case EC::Io: return CONVSCOPE_ERR_IO;
    case EC::Format: return CONVSCOPE_ERR_FORMAT;
    case EC::Integrity: return CONVSCOPE_ERR_INTEGRITY;
    case EC::Numeric: return CONVSCOPE_ERR_NUMERIC;
    case EC::Input: return CONVSCOPE_ERR_INPUT;
    case EC::Internal: return CONVSCOPE_ERR_INTERNAL;
  }
  return CONVSCOPE_ERR_INTERNAL;
}

template <typename Fn>
convscope_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return CONVSCOPE_OK;
  } catch (const convscope::Error& e) {
    t_last_error = e.what();
    return status_of(e.category());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return CONVSCOPE_ERR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown failure";
    return CONVSCOPE_ERR_INTERNAL;
  }
}

convscope_status fail_null_arg(const char* what) {
  t_last_error = std::string(what) + " must not be null";
  return CONVSCOPE_ERR_INVALID_ARGUMENT;
}

}  // namespace

struct convscope_run {
  std::string subcommand;
  convscope::Config config;
};

struct convscope_model {
  convscope::Checkpoint checkpoint;
};

extern "C" {

const char* convscope_status_name(convscope_status s) {
  switch (s) {
    case CONVSCOPE_OK: return "ok";
    case CONVSCOPE_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case CONVSCOPE_ERR_SHAPE: return "shape";
    case CONVSCOPE_ERR_CONFIG: return "config";
    case CONVSCOPE_ERR_IO: return "io";
    case CONVSCOPE_ERR_FORMAT: return "format";
    case CONVSCOPE_ERR_INTEGRITY: return "integrity";
    case CONVSCOPE_ERR_NUMERIC: return "numeric";
    case CONVSCOPE_ERR_INPUT: return "input";
    case CONVSCOPE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* convscope_last_error(void) { return t_last_error.c_str(); }

void convscope_set_threads(int n) { convscope::set_thread_count(n); }

const char* convscope_version(void) { return "convscope 1.0"; }

convscope_status convscope_run_new(const char* subcommand, convscope_run** out) {
  if (!subcommand) return fail_null_arg("subcommand");
  if (!out) return fail_null_arg("out");
  *out = nullptr;
  return guarded([&] {
    const auto& names = convscope::subcommand_names();
    if (std::find(names.begin(), names.end(), subcommand) == names.end())
      throw convscope::ConfigError("unknown subcommand '" + std::string(subcommand) + "'");
    *out = new convscope_run{subcommand, convscope::Config{}};
  });
}

convscope_status convscope_run_load_config(convscope_run* run, const char* path) {
  if (!run) return fail_null_arg("run");
  if (!path) return fail_null_arg("path");
  return guarded([&] {
    convscope::Config file = convscope::Config::from_file(path, run->subcommand);
    // file values fill gaps; explicitly set keys win
    for (const auto& [k, v] : file.values())
      if (!run->config.has(k)) run->config.set(k, v);
  });
}

convscope_status convscope_run_set(convscope_run* run, const char* key, const char* value) {
  if (!run) return fail_null_arg("run");
  if (!key || !value) return fail_null_arg("key/value");
  return guarded([&] { run->config.set(key, value); });
}

convscope_status convscope_run_execute(convscope_run* run) {
  if (!run) return fail_null_arg("run");
  return guarded([&] { convscope::run_subcommand(run->subcommand, run->config); });
}

void convscope_run_free(convscope_run* run) { delete run; }

const char* const* convscope_subcommands(void) {
  static const std::vector<const char*> names = [] {
    std::vector<const char*> v;
    for (const std::string& n : convscope::subcommand_names()) v.push_back(n.c_str());
    v.push_back(nullptr);
    return v;
  }();
  return names.data();
}

convscope_status convscope_model_load(const char* checkpoint_path, convscope_model** out) {
  if (!checkpoint_path) return fail_null_arg("checkpoint_path");
  if (!out) return fail_null_arg("out");
  *out = nullptr;
  return guarded([&] {
    *out = new convscope_model{convscope::load_checkpoint(checkpoint_path)};
  });
}

void convscope_model_free(convscope_model* model) { delete model; }

convscope_status convscope_model_input_shape(const convscope_model* model,
                                             int64_t* channels, int64_t* height,
                                             int64_t* width) {
  if (!model) return fail_null_arg("model");
  if (channels) *channels = model->checkpoint.arch.input.c;
  if (height) *height = model->checkpoint.arch.input.h;
  if (width) *width = model->checkpoint.arch.input.w;
  return CONVSCOPE_OK;
}

convscope_status convscope_model_class_count(const convscope_model* model, int* classes) {
  if (!model) return fail_null_arg("model");
  if (!classes) return fail_null_arg("classes");
  *classes = model->checkpoint.arch.layers.back().classes;
  return CONVSCOPE_OK;
}

convscope_status convscope_model_epoch(const convscope_model* model, int* epoch) {
  if (!model) return fail_null_arg("model");
  if (!epoch) return fail_null_arg("epoch");
  *epoch = model->checkpoint.epoch;
  return CONVSCOPE_OK;
}

convscope_status convscope_model_predict(const convscope_model* model, const double* chw,
                                         int64_t len, double* probs, int64_t probs_len) {
  if (!model) return fail_null_arg("model");
  if (!chw) return fail_null_arg("chw");
  if (!probs) return fail_null_arg("probs");
  return guarded([&] {
    const convscope::Checkpoint& ck = model->checkpoint;
    convscope::Extent4 want{1, ck.arch.input.c, ck.arch.input.h, ck.arch.input.w};
    if (len != want.count())
      throw convscope::ShapeError("input length " + std::to_string(len) +
                                  " does not match c*h*w = " + std::to_string(want.count()));
    int classes = ck.arch.layers.back().classes;
    if (probs_len < classes)
      throw convscope::ShapeError("probs buffer too small for " + std::to_string(classes) +
                                  " classes");
    convscope::Tensor in =
        convscope::Tensor::from_values(want, std::vector<double>(chw, chw + len));
    convscope::ActivationRecord rec =
        convscope::net_forward(ck.arch, ck.params, in, convscope::Mode::Eval);
    std::vector<double> p = convscope::probabilities(rec)[0];
    std::memcpy(probs, p.data(), sizeof(double) * p.size());
  });
}

}  // extern "C"
