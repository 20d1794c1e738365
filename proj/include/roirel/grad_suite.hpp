#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace roirel {

/// Finite-difference check of the whole detector on a tiny hand-made scene.
struct GradSuiteOptions {
  std::size_t proposals = 4;
  std::size_t feature_dim = 3;
  std::size_t size_embed_dim = 2;
  std::size_t model_dim = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 16;
  std::size_t head_hidden = 8;
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  /// Negative-control hook: scale the analytic gradient of this group
  /// ("all" for every group) by `bug_scale` before comparing.
  std::string inject_bug;
  double bug_scale = 2.0;

  /// Enforces the small-instance limits (N <= 4, D <= 16).
  void validate() const;
  static GradSuiteOptions from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct GradGroupResult {
  std::string group;
  std::size_t tensors = 0;
  std::size_t entries = 0;
  double worst_error = 0.0;
  std::string worst_tensor;
  bool passed = true;
};

struct StopGradientResult {
  std::string group;
  double max_abs_grad = 0.0;
  bool passed = true;  // gradient exactly zero
};

struct GradSuiteReport {
  std::vector<GradGroupResult> groups;
  std::vector<StopGradientResult> stop_gradient;
  double tolerance = 0.0;
  bool passed = true;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Group names: "prelim-head", "tokenizer", "relation-projection",
/// "encoder-layer<k>", "final-head". Stop-gradient groups: "decay-matrix",
/// "relation-inputs", "positional-encoding".
GradSuiteReport run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace roirel
