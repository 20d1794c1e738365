#include "roirel/relation_encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "roirel/errors.hpp"
#include "roirel/relation_bias.hpp"

namespace roirel {

void EncoderConfig::validate() const {
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("model.encoder.heads must divide model_dim (" + std::to_string(model_dim) +
                      " / " + std::to_string(heads) + ")");
  }
  if (layers < 1) throw ConfigError("model.encoder.layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.encoder.dropout must be in [0, 1)");
}

std::vector<EncoderLayerParams> create_encoder(ParameterStore& store, const EncoderConfig& config,
                                               Rng& rng, const std::string& prefix) {
  config.validate();
  std::vector<EncoderLayerParams> layers;
  const std::size_t d = config.model_dim;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    EncoderLayerParams layer;
    layer.norm_attn = LayerNormLayer::create(store, p + ".norm_attn", d);
    layer.query = LinearLayer::create(store, p + ".query", d, d, rng);
    layer.key = LinearLayer::create(store, p + ".key", d, d, rng);
    layer.value = LinearLayer::create(store, p + ".value", d, d, rng);
    layer.output = LinearLayer::create(store, p + ".output", d, d, rng);
    layer.relation = LinearLayer::create_zero(store, p + ".relation", kRelationCount, 1);
    layer.norm_ff = LayerNormLayer::create(store, p + ".norm_ff", d);
    layer.ff_in = LinearLayer::create(store, p + ".ff_in", d, config.hidden_dim(), rng);
    layer.ff_out = LinearLayer::create(store, p + ".ff_out", config.hidden_dim(), d, rng);
    layers.push_back(layer);
  }
  return layers;
}

Var modified_attention(Graph& g, Var tokens, std::optional<Var> bias, std::optional<Var> decay,
                       const EncoderLayerParams& layer, std::size_t heads,
                       std::vector<Tensor>* weights_out) {
  const std::size_t n = tokens.value().rows();
  const std::size_t d = tokens.value().cols();
  if (heads == 0 || d % heads != 0) throw std::invalid_argument("modified_attention: bad head count");
  if (bias && (bias->value().rows() != n || bias->value().cols() != n)) {
    throw std::invalid_argument("modified_attention: bias must be N x N, got " +
                                shape_string(bias->shape()));
  }
  if (decay && (decay->value().rows() != n || decay->value().cols() != n)) {
    throw std::invalid_argument("modified_attention: decay must be N x N, got " +
                                shape_string(decay->shape()));
  }
  const std::size_t dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = layer.query.apply(g, tokens);
  Var k = layer.key.apply(g, tokens);
  Var v = layer.value.apply(g, tokens);
  std::optional<Var> a;
  if (decay) a = ad::stop_gradient(*decay);
  std::vector<Var> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * dk, (h + 1) * dk);
    Var kh = ad::slice_cols(k, h * dk, (h + 1) * dk);
    Var vh = ad::slice_cols(v, h * dk, (h + 1) * dk);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dk);
    Var weights = ad::softmax_rows(scores, bias);
    if (a) weights = ad::mul(weights, *a);
    if (weights_out) weights_out->push_back(weights.value());
    head_outputs.push_back(ad::matmul(weights, vh));
  }
  Var merged = heads == 1 ? head_outputs.front() : ad::concat_cols(head_outputs);
  return layer.output.apply(g, merged);
}

Var encoder_forward(Graph& g, Var tokens, const std::vector<std::optional<Var>>& biases,
                    std::optional<Var> decay, const EncoderConfig& config,
                    const std::vector<EncoderLayerParams>& layers, Rng& rng, Mode mode) {
  if (layers.size() != config.layers) {
    throw std::invalid_argument("encoder_forward: parameter layers do not match config");
  }
  if (!biases.empty() && biases.size() != layers.size()) {
    throw std::invalid_argument("encoder_forward: need one bias slot per layer");
  }
  const bool training = mode == Mode::kTrain && config.dropout > 0.0;
  Var x = tokens;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const EncoderLayerParams& layer = layers[l];
    const std::optional<Var> bias = biases.empty() ? std::nullopt : biases[l];
    Var attn = modified_attention(g, layer.norm_attn.apply(g, x), bias, decay, layer, config.heads);
    if (training) attn = ad::mul(attn, g.constant(dropout_mask(attn.shape(), config.dropout, rng, true)));
    x = ad::add(x, attn);
    Var ff = layer.ff_out.apply(g, ad::gelu(layer.ff_in.apply(g, layer.norm_ff.apply(g, x))));
    if (training) ff = ad::mul(ff, g.constant(dropout_mask(ff.shape(), config.dropout, rng, true)));
    x = ad::add(x, ff);
  }
  return x;
}

}  // namespace roirel
