#pragma once

#include <string>

#include "roirel/autodiff.hpp"

namespace roirel {

/// Affine layer, weight [in x out] and bias [out], owned by a ParameterStore.
struct LinearLayer {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static LinearLayer create(ParameterStore& store, const std::string& name, std::size_t in,
                            std::size_t out, Rng& rng, double gain = 1.0);
  static LinearLayer create_zero(ParameterStore& store, const std::string& name, std::size_t in,
                                 std::size_t out);

  std::size_t in_dim() const { return weight->value.rows(); }
  std::size_t out_dim() const { return weight->value.cols(); }
  Var apply(Graph& g, Var x) const;
};

struct LayerNormLayer {
  Parameter* gain = nullptr;
  Parameter* shift = nullptr;

  static LayerNormLayer create(ParameterStore& store, const std::string& name, std::size_t dim);
  Var apply(Graph& g, Var x) const;
};

}  // namespace roirel
