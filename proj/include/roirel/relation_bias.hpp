#pragma once

#include <cstddef>
#include <span>

#include "roirel/autodiff.hpp"
#include "roirel/geometry.hpp"

namespace roirel {

/// Channel order of the pairwise relation stack.
enum RelationChannel : std::size_t { kDx = 0, kDy, kDist, kDAlpha, kIoU, kArea, kRelationCount };

struct RelationOptions {
  /// Store the area channel as the raw ratio instead of its log.
  bool raw_area_ratio = false;
};

/// values[i][j][c] relates box i (first) to box j (second): dx = x_j - x_i,
/// dalpha = wrap(alpha_j - alpha_i), area = log(a_i / a_j).
struct RelationTensor {
  Tensor values;  // [N x N x 6]
  double extent = 1.0;
  bool raw_area_ratio = false;

  std::size_t count() const { return values.rank() == 3 ? values.dim(0) : 0; }
  double at(std::size_t i, std::size_t j, RelationChannel c) const { return values.at(i, j, c); }
  /// The IoU channel as an N x N matrix.
  Tensor iou_matrix() const;
};

/// dx, dy and dist are divided by `image_extent`.
RelationTensor pairwise_relations(std::span<const OrientedBox> boxes, double image_extent,
                                  RelationOptions options = {});

/// Per-pair affine map of the six channels to the N x N bias P. `relations`
/// is detached before use, so only the projection receives gradient.
Var aggregate_bias(Var relations, Var weight, Var bias);

/// Non-recorded evaluation of the same map.
Tensor aggregate_bias_value(const RelationTensor& relations, const Tensor& weight,
                            const Tensor& bias);

}  // namespace roirel
