#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "roirel/parameter.hpp"
#include "roirel/tensor.hpp"

namespace roirel {

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
};

/// Tape of primitive operations. Nodes are stored in creation order, which
/// is a topological order; backward() walks it in exact reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Differentiable input whose gradient can be read back after backward().
  Var leaf(Tensor value);
  /// Trainable parameter; backward() adds the node gradient into p.grad.
  /// Non-trainable parameters are recorded as constants.
  Var param(Parameter& p);

  /// Accumulates d(seed * loss)/dp into every parameter reachable from loss.
  /// Throws std::invalid_argument when loss is not a single scalar.
  void backward(Var loss, double seed = 1.0);

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  /// Output gradient of `id`; valid only inside its backward function.
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient accumulator of an input node, allocated on first use.
  Tensor& accum(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  Tensor empty_;
};

namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a[n x m] + bias[m] broadcast over rows.
Var add_row(Var a, Var bias);
Var linear(Var x, Var weight, Var bias);
Var reshape(Var a, std::vector<std::size_t> shape);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Row-wise softmax of (logits + additive_bias), stabilized by row max.
Var softmax_rows(Var logits, std::optional<Var> additive_bias = std::nullopt);
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);
Var gelu(Var x);
Var stop_gradient(Var a);
Var sum(Var a);
/// Mean cross-entropy against integer class targets; rows with a negative
/// target are ignored. Zero when every row is ignored.
Var cross_entropy(Var logits, std::span<const int> targets);
/// Smooth-L1 (transition 1.0) summed over columns, averaged over selected
/// rows. Zero (with zero gradient) when no row is selected.
Var smooth_l1(Var pred, const Tensor& target, std::span<const bool> rows);
/// sum_k coeffs[k] * terms[k] for scalar terms.
Var weighted_sum(std::span<const Var> terms, std::span<const double> coeffs);

}  // namespace ad

double gelu_value(double x);

/// Inverted-dropout mask: entries 0 or 1/(1-rate); all ones when !training.
Tensor dropout_mask(std::vector<std::size_t> shape, double rate, Rng& rng, bool training);

}  // namespace roirel
