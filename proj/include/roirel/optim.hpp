#pragma once

#include <cstdint>
#include <vector>

#include "roirel/parameter.hpp"

namespace roirel {

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay and bias correction. Moment buffers are
/// keyed by registration order in the ParameterStore.
class AdamW {
 public:
  explicit AdamW(AdamWSettings settings = {}) : settings_(settings) {}

  void step(ParameterStore& params, double learning_rate, double weight_decay);
  std::uint64_t step_count() const { return steps_; }

 private:
  AdamWSettings settings_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace roirel
