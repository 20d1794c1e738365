#include "roirel/relation_bias.hpp"

#include <cmath>
#include <stdexcept>

namespace roirel {

Tensor RelationTensor::iou_matrix() const {
  const std::size_t n = count();
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = values.at(i, j, kIoU);
  return out;
}

RelationTensor pairwise_relations(std::span<const OrientedBox> boxes, double image_extent,
                                  RelationOptions options) {
  if (boxes.empty()) throw std::invalid_argument("pairwise_relations: no boxes");
  if (!(image_extent > 0.0)) throw std::invalid_argument("pairwise_relations: extent must be > 0");
  const std::size_t n = boxes.size();
  RelationTensor rel;
  rel.values = Tensor({n, n, kRelationCount}, 0.0);
  rel.extent = image_extent;
  rel.raw_area_ratio = options.raw_area_ratio;
  const double inv_extent = 1.0 / image_extent;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const OrientedBox& a = boxes[i];
      const OrientedBox& b = boxes[j];
      const double dx = (b.x() - a.x()) * inv_extent;
      const double dy = (b.y() - a.y()) * inv_extent;
      rel.values.at(i, j, kDx) = dx;
      rel.values.at(i, j, kDy) = dy;
      rel.values.at(i, j, kDist) = std::hypot(b.x() - a.x(), b.y() - a.y()) * inv_extent;
      rel.values.at(i, j, kDAlpha) = i == j ? 0.0 : wrap_angle(b.alpha() - a.alpha());
      if (i == j) {
        rel.values.at(i, j, kIoU) = 1.0;
      } else if (j < i) {
        rel.values.at(i, j, kIoU) = rel.values.at(j, i, kIoU);
      } else {
        rel.values.at(i, j, kIoU) = rotated_iou(a, b);
      }
      const double ratio = a.area() / b.area();
      rel.values.at(i, j, kArea) = options.raw_area_ratio ? ratio : std::log(ratio);
    }
  }
  return rel;
}

Var aggregate_bias(Var relations, Var weight, Var bias) {
  const Tensor& r = relations.value();
  if (r.rank() != 3 || r.dim(2) != kRelationCount) {
    throw std::invalid_argument("aggregate_bias: relations must be [N x N x 6], got " +
                                shape_string(r.shape()));
  }
  if (weight.value().size() != kRelationCount || bias.value().size() != 1) {
    throw std::invalid_argument("aggregate_bias: projection must map 6 -> 1, got weight " +
                                shape_string(weight.shape()));
  }
  const std::size_t n = r.dim(0);
  Var detached = ad::stop_gradient(relations);
  Var flat = ad::reshape(detached, {n * n, kRelationCount});
  Var w = ad::reshape(weight, {kRelationCount, 1});
  Var projected = ad::add_row(ad::matmul(flat, w), ad::reshape(bias, {1}));
  return ad::reshape(projected, {n, n});
}

Tensor aggregate_bias_value(const RelationTensor& relations, const Tensor& weight,
                            const Tensor& bias) {
  const std::size_t n = relations.count();
  Tensor out = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = bias[0];
      for (std::size_t c = 0; c < kRelationCount; ++c) acc += weight[c] * relations.values.at(i, j, c);
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace roirel
