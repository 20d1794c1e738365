#include "roirel/parameter.hpp"

#include <cmath>
#include <stdexcept>

namespace roirel {

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  return params_.emplace_back(std::move(name), std::move(value), trainable);
}

Parameter& ParameterStore::add_uniform(std::string name, std::size_t fan_in,
                                       std::size_t fan_out, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w = Tensor::matrix(fan_in, fan_out);
  for (double& v : w.storage()) v = rng.uniform(-limit, limit);
  return add(std::move(name), std::move(w));
}

Parameter& ParameterStore::add_constant(std::string name, std::vector<std::size_t> shape,
                                        double value) {
  return add(std::move(name), Tensor(std::move(shape), value));
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& ParameterStore::get(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + name);
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("unknown parameter: " + name);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace roirel
