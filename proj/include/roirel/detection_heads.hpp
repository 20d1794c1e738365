#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roirel/geometry.hpp"
#include "roirel/layers.hpp"

namespace roirel {

/// Offsets of a box relative to a reference box.
struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
  double ta = 0.0;
};

BoxDelta encode_box(const OrientedBox& target, const OrientedBox& reference);
OrientedBox decode_box(const OrientedBox& reference, const BoxDelta& delta);

struct Detection {
  OrientedBox box;
  std::vector<double> logits;  // C + 1, background last
  double score = 0.0;          // max softmax probability
  int label = 0;               // argmax of logits

  bool is_background() const { return label + 1 == static_cast<int>(logits.size()); }
};

/// Builds a Detection from box and logits, filling score and label.
Detection make_detection(const OrientedBox& box, std::span<const double> logits);

struct HeadConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_classes = 8;  // foreground classes; logits have num_classes + 1
};

struct HeadParams {
  LinearLayer hidden;
  LinearLayer cls;
  LinearLayer reg;

  /// The regression branch starts at zero so initial decoded boxes equal the
  /// reference boxes.
  static HeadParams create(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                           const HeadConfig& config, Rng& rng);
};

struct HeadOutput {
  Var logits;  // N x (C + 1)
  Var deltas;  // N x 5
};

HeadOutput head_forward(Graph& g, Var features, const HeadParams& params);

BoxDelta delta_row(const Tensor& deltas, std::size_t row);

struct TargetAssignment {
  /// Class index, `background` for background, -1 for ignored.
  std::vector<int> labels;
  /// Matched ground-truth index or -1.
  std::vector<int> gt_index;
  std::vector<double> max_iou;
  int background = 0;

  bool is_foreground(std::size_t i) const { return gt_index[i] >= 0 && labels[i] != background; }
};

/// Foreground when the best IoU >= fg_threshold (ties to the lowest gt index),
/// background when it is < bg_threshold, ignored otherwise.
TargetAssignment assign_targets(std::span<const OrientedBox> proposals,
                                std::span<const OrientedBox> ground_truth,
                                std::span<const int> gt_classes, int num_classes,
                                double fg_threshold = 0.5, double bg_threshold = 0.5);

struct LossWeights {
  double prelim_cls = 1.0;
  double prelim_reg = 1.0;
  double final_cls = 1.0;
  double final_reg = 1.0;
};

struct LossBreakdown {
  Var total;
  double prelim_cls = 0.0;
  double prelim_reg = 0.0;
  double final_cls = 0.0;
  double final_reg = 0.0;
};

/// Regression targets for every foreground row, relative to `references`.
Tensor regression_targets(const TargetAssignment& targets, std::span<const OrientedBox> references,
                          std::span<const OrientedBox> ground_truth);

/// Two-phase loss. Without `final_out` only the preliminary terms enter.
/// `final_references` are the boxes the final deltas refine.
LossBreakdown detection_loss(const HeadOutput& prelim, const std::optional<HeadOutput>& final_out,
                             const TargetAssignment& targets,
                             std::span<const OrientedBox> proposals,
                             std::span<const OrientedBox> final_references,
                             std::span<const OrientedBox> ground_truth,
                             const LossWeights& weights);

}  // namespace roirel
