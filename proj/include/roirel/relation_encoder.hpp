#pragma once

#include <optional>
#include <string>
#include <vector>

#include "roirel/layers.hpp"

namespace roirel {

struct EncoderConfig {
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t model_dim = 108;
  /// 0 means 4 * model_dim.
  std::size_t ff_dim = 0;
  double dropout = 0.1;

  std::size_t hidden_dim() const { return ff_dim ? ff_dim : 4 * model_dim; }
  std::size_t head_dim() const { return model_dim / heads; }
  void validate() const;
};

struct EncoderLayerParams {
  LinearLayer query;
  LinearLayer key;
  LinearLayer value;
  LinearLayer output;
  LinearLayer relation;  // 6 -> 1, shared by all heads of the layer
  LinearLayer ff_in;
  LinearLayer ff_out;
  LayerNormLayer norm_attn;
  LayerNormLayer norm_ff;
};

std::vector<EncoderLayerParams> create_encoder(ParameterStore& store, const EncoderConfig& config,
                                               Rng& rng, const std::string& prefix = "encoder");

/// Per head: W_h = A o softmax(Q_h K_h^T / sqrt(d_k) + P), no renormalization;
/// output = concat_h(W_h V_h) projected by `output`. A missing `bias` means
/// P = 0 and a missing `decay` means A = 1. `decay` is detached: no gradient
/// ever reaches it.
Var modified_attention(Graph& g, Var tokens, std::optional<Var> bias, std::optional<Var> decay,
                       const EncoderLayerParams& layer, std::size_t heads,
                       std::vector<Tensor>* weights_out = nullptr);

enum class Mode { kTrain, kEval };

/// Pre-norm blocks: x += drop(Attn(LN(x))); x += drop(FF(LN(x))).
/// `biases` holds one optional P per layer (may be empty for none).
Var encoder_forward(Graph& g, Var tokens, const std::vector<std::optional<Var>>& biases,
                    std::optional<Var> decay, const EncoderConfig& config,
                    const std::vector<EncoderLayerParams>& layers, Rng& rng, Mode mode);

}  // namespace roirel
