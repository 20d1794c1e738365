#include "roirel/detection_heads.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace roirel {

BoxDelta encode_box(const OrientedBox& target, const OrientedBox& reference) {
  return {(target.x() - reference.x()) / reference.w(), (target.y() - reference.y()) / reference.h(),
          std::log(target.w() / reference.w()), std::log(target.h() / reference.h()),
          wrap_angle(target.alpha() - reference.alpha())};
}

OrientedBox decode_box(const OrientedBox& reference, const BoxDelta& delta) {
  // Clamp the log-size offsets so a wild early prediction cannot overflow.
  constexpr double kMaxLog = 4.0;
  const double tw = std::clamp(delta.tw, -kMaxLog, kMaxLog);
  const double th = std::clamp(delta.th, -kMaxLog, kMaxLog);
  return {reference.x() + delta.tx * reference.w(), reference.y() + delta.ty * reference.h(),
          reference.w() * std::exp(tw), reference.h() * std::exp(th),
          reference.alpha() + delta.ta};
}

Detection make_detection(const OrientedBox& box, std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("make_detection: empty logits");
  Detection d;
  d.box = box;
  d.logits.assign(logits.begin(), logits.end());
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  double total = 0.0;
  for (double z : logits) total += std::exp(z - logits[best]);
  d.label = static_cast<int>(best);
  d.score = 1.0 / total;
  return d;
}

HeadParams HeadParams::create(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                              const HeadConfig& config, Rng& rng) {
  HeadParams p;
  p.hidden = LinearLayer::create(store, prefix + ".hidden", in_dim, config.hidden_dim, rng);
  p.cls = LinearLayer::create(store, prefix + ".cls", config.hidden_dim, config.num_classes + 1, rng);
  p.reg = LinearLayer::create_zero(store, prefix + ".reg", config.hidden_dim, 5);
  return p;
}

HeadOutput head_forward(Graph& g, Var features, const HeadParams& params) {
  Var hidden = ad::gelu(params.hidden.apply(g, features));
  return {params.cls.apply(g, hidden), params.reg.apply(g, hidden)};
}

BoxDelta delta_row(const Tensor& deltas, std::size_t row) {
  return {deltas.at(row, 0), deltas.at(row, 1), deltas.at(row, 2), deltas.at(row, 3),
          deltas.at(row, 4)};
}

TargetAssignment assign_targets(std::span<const OrientedBox> proposals,
                                std::span<const OrientedBox> ground_truth,
                                std::span<const int> gt_classes, int num_classes,
                                double fg_threshold, double bg_threshold) {
  if (!(0.0 <= bg_threshold && bg_threshold <= fg_threshold && fg_threshold <= 1.0)) {
    throw std::invalid_argument("assign_targets: need 0 <= bg <= fg <= 1");
  }
  if (gt_classes.size() != ground_truth.size()) {
    throw std::invalid_argument("assign_targets: class list does not match ground truth");
  }
  TargetAssignment out;
  out.background = num_classes;
  const std::size_t n = proposals.size();
  out.labels.assign(n, num_classes);
  out.gt_index.assign(n, -1);
  out.max_iou.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < ground_truth.size(); ++j) {
      const double iou = rotated_iou(proposals[i], ground_truth[j]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(j);
      }
    }
    out.max_iou[i] = best_iou;
    if (best >= 0 && best_iou >= fg_threshold) {
      out.labels[i] = gt_classes[static_cast<std::size_t>(best)];
      out.gt_index[i] = best;
    } else if (best_iou < bg_threshold) {
      out.labels[i] = num_classes;
    } else {
      out.labels[i] = -1;
    }
  }
  return out;
}

Tensor regression_targets(const TargetAssignment& targets, std::span<const OrientedBox> references,
                          std::span<const OrientedBox> ground_truth) {
  const std::size_t n = references.size();
  Tensor out = Tensor::matrix(n, 5);
  for (std::size_t i = 0; i < n; ++i) {
    if (!targets.is_foreground(i)) continue;
    const BoxDelta d =
        encode_box(ground_truth[static_cast<std::size_t>(targets.gt_index[i])], references[i]);
    out.at(i, 0) = d.tx;
    out.at(i, 1) = d.ty;
    out.at(i, 2) = d.tw;
    out.at(i, 3) = d.th;
    out.at(i, 4) = d.ta;
  }
  return out;
}

LossBreakdown detection_loss(const HeadOutput& prelim, const std::optional<HeadOutput>& final_out,
                             const TargetAssignment& targets,
                             std::span<const OrientedBox> proposals,
                             std::span<const OrientedBox> final_references,
                             std::span<const OrientedBox> ground_truth,
                             const LossWeights& weights) {
  const std::size_t n = proposals.size();
  // std::vector<bool> has no contiguous storage.
  auto fg = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) fg[i] = targets.is_foreground(i);
  const std::span<const bool> fg_rows(fg.get(), n);

  std::vector<Var> terms;
  std::vector<double> coeffs;
  LossBreakdown out;
  Var pc = ad::cross_entropy(prelim.logits, targets.labels);
  Var pr = ad::smooth_l1(prelim.deltas, regression_targets(targets, proposals, ground_truth), fg_rows);
  out.prelim_cls = pc.value()[0];
  out.prelim_reg = pr.value()[0];
  terms.insert(terms.end(), {pc, pr});
  coeffs.insert(coeffs.end(), {weights.prelim_cls, weights.prelim_reg});
  if (final_out) {
    if (final_references.size() != n) {
      throw std::invalid_argument("detection_loss: final references do not match proposals");
    }
    Var fc = ad::cross_entropy(final_out->logits, targets.labels);
    Var fr = ad::smooth_l1(final_out->deltas,
                           regression_targets(targets, final_references, ground_truth), fg_rows);
    out.final_cls = fc.value()[0];
    out.final_reg = fr.value()[0];
    terms.insert(terms.end(), {fc, fr});
    coeffs.insert(coeffs.end(), {weights.final_cls, weights.final_reg});
  }
  out.total = ad::weighted_sum(terms, coeffs);
  return out;
}

}  // namespace roirel
