#include "roirel/roi_tokenizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "roirel/errors.hpp"

namespace roirel {

void TokenizerConfig::validate() const {
  if (model_dim % 4 != 0) {
    throw ConfigError("model.model_dim must be divisible by 4 (got " + std::to_string(model_dim) +
                      ")");
  }
  if (concat_dim() > model_dim) {
    throw ConfigError("model.model_dim (" + std::to_string(model_dim) +
                      ") is smaller than the token concatenation (" +
                      std::to_string(concat_dim()) + ")");
  }
  if (feature_dim == 0 || logit_dim == 0 || width_dim == 0 || height_dim == 0) {
    throw ConfigError("tokenizer dimensions must be positive");
  }
}

std::vector<double> pos_encoding_2d(double x, double y, std::size_t dim, double extent) {
  if (dim == 0 || dim % 4 != 0) {
    throw ConfigError("pos_encoding_2d: dimension must be a positive multiple of 4");
  }
  if (!(extent > 0.0)) throw std::invalid_argument("pos_encoding_2d: extent must be > 0");
  const std::size_t pairs = dim / 4;
  std::vector<double> out(dim);
  const double coords[2] = {x / extent * 2.0 * std::numbers::pi,
                            y / extent * 2.0 * std::numbers::pi};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t k = 0; k < pairs; ++k) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(pairs));
      const double phase = coords[axis] * freq;
      out[axis * dim / 2 + 2 * k] = std::sin(phase);
      out[axis * dim / 2 + 2 * k + 1] = std::cos(phase);
    }
  }
  return out;
}

TokenizerParams TokenizerParams::create(ParameterStore& store, const TokenizerConfig& config,
                                        Rng& rng, const std::string& prefix) {
  TokenizerParams p;
  p.embed_w = LinearLayer::create(store, prefix + ".embed_w", 1, config.width_dim, rng);
  p.embed_h = LinearLayer::create(store, prefix + ".embed_h", 1, config.height_dim, rng);
  return p;
}

Tensor positional_block(std::span<const OrientedBox> boxes, std::size_t dim, double extent) {
  Tensor out = Tensor::matrix(boxes.size(), dim);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto pe = pos_encoding_2d(boxes[i].x(), boxes[i].y(), dim, extent);
    for (std::size_t c = 0; c < dim; ++c) out.at(i, c) = pe[c];
  }
  return out;
}

Var build_tokens(Graph& g, Var features, Var logits, std::span<const OrientedBox> boxes,
                 const TokenizerParams& params, const TokenizerConfig& config, Var positional) {
  const std::size_t n = boxes.size();
  if (features.value().rows() != n || logits.value().rows() != n ||
      positional.value().rows() != n) {
    throw std::invalid_argument("build_tokens: proposal count mismatch (features " +
                                shape_string(features.shape()) + ", logits " +
                                shape_string(logits.shape()) + ", boxes " + std::to_string(n) +
                                ")");
  }
  if (features.value().cols() != config.feature_dim || logits.value().cols() != config.logit_dim) {
    throw std::invalid_argument("build_tokens: feature/logit width mismatch (features " +
                                shape_string(features.shape()) + ", logits " +
                                shape_string(logits.shape()) + ")");
  }
  if (positional.value().cols() != config.model_dim) {
    throw std::invalid_argument("build_tokens: positional block width mismatch");
  }
  Tensor w_in = Tensor::matrix(n, 1);
  Tensor h_in = Tensor::matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    w_in.at(i, 0) = config.log_size ? std::log(boxes[i].w()) : boxes[i].w();
    h_in.at(i, 0) = config.log_size ? std::log(boxes[i].h()) : boxes[i].h();
  }
  Var w_embed = params.embed_w.apply(g, g.constant(std::move(w_in)));
  Var h_embed = params.embed_h.apply(g, g.constant(std::move(h_in)));
  std::vector<Var> parts{features, logits, w_embed, h_embed};
  const std::size_t pad = config.model_dim - config.concat_dim();
  if (pad > 0) parts.push_back(g.constant(Tensor::matrix(n, pad)));
  Var concat = ad::concat_cols(parts);
  return ad::add(concat, ad::stop_gradient(positional));
}

Var build_tokens(Graph& g, Var features, Var logits, std::span<const OrientedBox> boxes,
                 const TokenizerParams& params, const TokenizerConfig& config, double extent) {
  Var pos = g.constant(positional_block(boxes, config.model_dim, extent));
  return build_tokens(g, features, logits, boxes, params, config, pos);
}

}  // namespace roirel
