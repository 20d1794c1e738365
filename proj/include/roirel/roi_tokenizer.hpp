#pragma once

#include <span>
#include <vector>

#include "roirel/geometry.hpp"
#include "roirel/layers.hpp"

namespace roirel {

struct TokenizerConfig {
  std::size_t feature_dim = 64;
  /// Number of logits per proposal (object classes + background).
  std::size_t logit_dim = 9;
  std::size_t width_dim = 16;
  std::size_t height_dim = 16;
  /// Token width D; the concatenation is zero-padded up to it.
  std::size_t model_dim = 108;
  /// Feed log(w), log(h) to the size embeddings instead of raw sizes.
  bool log_size = true;

  std::size_t concat_dim() const { return feature_dim + logit_dim + width_dim + height_dim; }
  void validate() const;
};

/// 2D sinusoidal encoding of dimension `dim`: the first half encodes x and
/// the second half y, each as interleaved (sin, cos) pairs over frequencies
/// 10000^(-k / (dim/4)). Coordinates are scaled to [0, 2*pi] by `extent`.
std::vector<double> pos_encoding_2d(double x, double y, std::size_t dim, double extent);

struct TokenizerParams {
  LinearLayer embed_w;  // 1 -> width_dim
  LinearLayer embed_h;  // 1 -> height_dim

  static TokenizerParams create(ParameterStore& store, const TokenizerConfig& config, Rng& rng,
                                const std::string& prefix = "tokenizer");
};

/// Positional encodings for all boxes as an N x D constant block.
Tensor positional_block(std::span<const OrientedBox> boxes, std::size_t dim, double extent);

/// Token_i = (f_i ++ c_i ++ embed_w(w_i) ++ embed_h(h_i) ++ 0-pad) + pos(x_i, y_i).
/// `positional` (N x D) is detached before the addition; pass a leaf to
/// observe that no gradient reaches it.
Var build_tokens(Graph& g, Var features, Var logits, std::span<const OrientedBox> boxes,
                 const TokenizerParams& params, const TokenizerConfig& config, Var positional);

/// Convenience overload computing the positional block internally.
Var build_tokens(Graph& g, Var features, Var logits, std::span<const OrientedBox> boxes,
                 const TokenizerParams& params, const TokenizerConfig& config, double extent);

}  // namespace roirel
