#include "roirel/optim.hpp"

#include <cmath>

namespace roirel {

void AdamW::step(ParameterStore& params, double learning_rate, double weight_decay) {
  auto& all = params.all();
  if (m_.size() != all.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : all) {
      m_.emplace_back(p.value.shape(), 0.0);
      v_.emplace_back(p.value.shape(), 0.0);
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(settings_.beta1, t);
  const double bc2 = 1.0 - std::pow(settings_.beta2, t);
  for (std::size_t k = 0; k < all.size(); ++k) {
    Parameter& p = all[k];
    if (!p.trainable) continue;
    auto& value = p.value.storage();
    const auto& grad = p.grad.storage();
    auto& m = m_[k].storage();
    auto& v = v_[k].storage();
    const double decay = 1.0 - learning_rate * weight_decay;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * g;
      v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] = value[i] * decay - learning_rate * m_hat / (std::sqrt(v_hat) + settings_.eps);
    }
  }
}

}  // namespace roirel
