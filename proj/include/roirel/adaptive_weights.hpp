#pragma once

#include <span>
#include <vector>

#include "roirel/geometry.hpp"
#include "roirel/tensor.hpp"

namespace roirel {

struct AdaptiveParams {
  double sigma = 4.0;
  /// IoU mask threshold; pairs with IoU >= delta are zeroed.
  double delta = 0.5;
  /// Global scale factor S, in scene units.
  double global_scale = 1.0;

  void validate() const;
};

/// How the density sum weights each term.
enum class DensityReading {
  /// rho_i = sum_j a_j exp(-(S / sqrt(a_j) * d_ij)^2 / sigma^2)
  kNeighborArea,
  /// rho_i = sum_j a_i exp(-(S / sqrt(a_i) * d_ij)^2 / sigma^2)
  kOwnArea,
};

struct AdaptiveOptions {
  DensityReading density_reading = DensityReading::kNeighborArea;
  /// Ablation: rho_bar fixed at 0.
  bool freeze_density = false;
  /// Ablation: eps_i = sqrt(S) for every box.
  bool fixed_eps = false;
  /// Ablation: keep overlapping pairs instead of zeroing them.
  bool overlap_mask = true;
};

struct DecayMatrix {
  Tensor values;  // A, [N x N]
  std::vector<double> eps;
  std::vector<double> rho;
  std::vector<double> rho_bar;
};

std::vector<double> local_density(std::span<const OrientedBox> boxes, double global_scale,
                                  double sigma,
                                  DensityReading reading = DensityReading::kNeighborArea);

/// tanh((rho - mean) / std) with population std; all zeros when std < 1e-12.
std::vector<double> normalize_density(std::span<const double> rho);

std::vector<double> scale_factor(std::span<const OrientedBox> boxes,
                                 std::span<const double> rho_bar, double global_scale);

/// A_ij = exp(-(eps_i d_ij)^2 / sigma^2) * 1{IoU_ij < delta}. `iou` is the
/// pairwise IoU matrix; when empty it is computed here.
Tensor decay_matrix(std::span<const OrientedBox> boxes, std::span<const double> eps,
                    const AdaptiveParams& params, const Tensor& iou = Tensor(),
                    bool overlap_mask = true);

/// Full chain: density, normalization, scale factor and decay.
DecayMatrix adaptive_weights(std::span<const OrientedBox> boxes, const AdaptiveParams& params,
                             const AdaptiveOptions& options = {}, const Tensor& iou = Tensor());

}  // namespace roirel
