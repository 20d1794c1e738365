#pragma once

#include <deque>
#include <string>
#include <vector>

#include "roirel/rng.hpp"
#include "roirel/tensor.hpp"

namespace roirel {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable = true);
  /// Xavier-uniform weight of shape [fan_in x fan_out].
  Parameter& add_uniform(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                         double gain = 1.0);
  Parameter& add_constant(std::string name, std::vector<std::size_t> shape, double value);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }

  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

}  // namespace roirel
