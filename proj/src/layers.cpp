#include "roirel/layers.hpp"

namespace roirel {

LinearLayer LinearLayer::create(ParameterStore& store, const std::string& name, std::size_t in,
                                std::size_t out, Rng& rng, double gain) {
  LinearLayer l;
  l.weight = &store.add_uniform(name + ".weight", in, out, rng, gain);
  l.bias = &store.add_constant(name + ".bias", {out}, 0.0);
  return l;
}

LinearLayer LinearLayer::create_zero(ParameterStore& store, const std::string& name,
                                     std::size_t in, std::size_t out) {
  LinearLayer l;
  l.weight = &store.add(name + ".weight", Tensor::matrix(in, out));
  l.bias = &store.add_constant(name + ".bias", {out}, 0.0);
  return l;
}

Var LinearLayer::apply(Graph& g, Var x) const {
  return ad::linear(x, g.param(*weight), g.param(*bias));
}

LayerNormLayer LayerNormLayer::create(ParameterStore& store, const std::string& name,
                                      std::size_t dim) {
  LayerNormLayer l;
  l.gain = &store.add_constant(name + ".gain", {dim}, 1.0);
  l.shift = &store.add_constant(name + ".shift", {dim}, 0.0);
  return l;
}

Var LayerNormLayer::apply(Graph& g, Var x) const {
  return ad::layer_norm(x, g.param(*gain), g.param(*shift));
}

}  // namespace roirel
