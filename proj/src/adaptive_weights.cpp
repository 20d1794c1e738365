#include "roirel/adaptive_weights.hpp"

#include <cmath>
#include <stdexcept>

#include "roirel/errors.hpp"

namespace roirel {

void AdaptiveParams::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("adaptive.sigma must be > 0");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("adaptive.delta must be in (0, 1]");
  if (!(global_scale > 0.0)) throw ConfigError("adaptive.global_scale must be > 0");
}

std::vector<double> local_density(std::span<const OrientedBox> boxes, double global_scale,
                                  double sigma, DensityReading reading) {
  const std::size_t n = boxes.size();
  std::vector<double> rho(n, 0.0);
  const double inv_sigma2 = 1.0 / (sigma * sigma);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const OrientedBox& weighted = reading == DensityReading::kNeighborArea ? boxes[j] : boxes[i];
      const double area = weighted.area();
      const double z = global_scale / std::sqrt(area) * center_distance(boxes[i], boxes[j]);
      acc += area * std::exp(-z * z * inv_sigma2);
    }
    rho[i] = acc;
  }
  return rho;
}

std::vector<double> normalize_density(std::span<const double> rho) {
  const std::size_t n = rho.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  double mean = 0.0;
  for (double r : rho) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rho) var += (r - mean) * (r - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n));
  if (stddev < 1e-12) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh((rho[i] - mean) / stddev);
  return out;
}

std::vector<double> scale_factor(std::span<const OrientedBox> boxes,
                                 std::span<const double> rho_bar, double global_scale) {
  if (rho_bar.size() != boxes.size()) {
    throw std::invalid_argument("scale_factor: rho_bar size does not match boxes");
  }
  std::vector<double> eps(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    eps[i] = global_scale / std::sqrt(boxes[i].area()) * std::exp(rho_bar[i]);
  }
  return eps;
}

Tensor decay_matrix(std::span<const OrientedBox> boxes, std::span<const double> eps,
                    const AdaptiveParams& params, const Tensor& iou, bool overlap_mask) {
  const std::size_t n = boxes.size();
  if (eps.size() != n) throw std::invalid_argument("decay_matrix: eps size does not match boxes");
  const bool have_iou = iou.size() == n * n;
  Tensor a = Tensor::matrix(n, n);
  const double inv_sigma2 = 1.0 / (params.sigma * params.sigma);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (overlap_mask) {
        const double overlap =
            have_iou ? iou.at(i, j) : (i == j ? 1.0 : rotated_iou(boxes[i], boxes[j]));
        if (overlap >= params.delta) continue;
      }
      const double z = eps[i] * center_distance(boxes[i], boxes[j]);
      a.at(i, j) = std::exp(-z * z * inv_sigma2);
    }
  }
  return a;
}

DecayMatrix adaptive_weights(std::span<const OrientedBox> boxes, const AdaptiveParams& params,
                             const AdaptiveOptions& options, const Tensor& iou) {
  DecayMatrix out;
  out.rho = local_density(boxes, params.global_scale, params.sigma, options.density_reading);
  out.rho_bar = options.freeze_density ? std::vector<double>(boxes.size(), 0.0)
                                       : normalize_density(out.rho);
  if (options.fixed_eps) {
    out.eps.assign(boxes.size(), std::sqrt(params.global_scale));
  } else {
    out.eps = scale_factor(boxes, out.rho_bar, params.global_scale);
  }
  out.values = decay_matrix(boxes, out.eps, params, iou, options.overlap_mask);
  return out;
}

}  // namespace roirel
