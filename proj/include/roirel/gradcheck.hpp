#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roirel/autodiff.hpp"

namespace roirel {

/// Builds a scalar loss on a fresh graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckEntry {
  std::string name;
  std::size_t entries = 0;
  double max_error = 0.0;  // relative, or absolute where |grad| < 1e-8
  double max_abs_analytic = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
};

/// Central-difference check of analytic gradients for `params`.
/// `corrupt_scale` multiplies the analytic gradient before comparison and
/// exists only as a negative-control hook.
GradCheckReport finite_diff_check(const LossBuilder& build, std::span<Parameter* const> params,
                                  double h = 1e-5, double tolerance = 1e-4,
                                  double corrupt_scale = 1.0);

/// Error metric used by finite_diff_check: relative, or absolute where
/// both gradients are below 1e-8.
double gradient_error(double analytic, double numeric);

}  // namespace roirel
