#include "roirel/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace roirel {

const Tensor& Var::value() const { return graph->value(id); }
const Tensor& Var::grad() const { return graph->grad(id); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::grad(std::size_t id) const {
  const Tensor& g = nodes_[id].grad;
  return g.size() == nodes_[id].value.size() ? g : empty_;
}

Tensor& Graph::accum(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

void Graph::backward(Var loss, double seed) {
  if (loss.graph != this) throw std::invalid_argument("backward: loss from another graph");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(nodes_[loss.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  accum(loss.id)[0] = seed;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      auto& dst = n.param->grad.storage();
      const auto& src = n.grad.storage();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

namespace ad {

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  auto& d = dst.storage();
  const auto& s = src.storage();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  Tensor out = roirel::matmul(a.value(), b.value());
  return g.record(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const Tensor& dy = g.out_grad(self);
    if (g.requires_grad(ia)) add_into(g.accum(ia), roirel::matmul_nt(dy, g.value(ib)));
    if (g.requires_grad(ib)) add_into(g.accum(ib), matmul_tn(g.value(ia), dy));
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = *a.graph;
  Tensor out = roirel::matmul_nt(a.value(), b.value());
  return g.record(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const Tensor& dy = g.out_grad(self);
    if (g.requires_grad(ia)) add_into(g.accum(ia), roirel::matmul(dy, g.value(ib)));
    if (g.requires_grad(ib)) add_into(g.accum(ib), matmul_tn(dy, g.value(ia)));
  });
}

Var add(Var a, Var b) {
  check_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t in = g.input(self, k);
      if (g.requires_grad(in)) add_into(g.accum(in), g.out_grad(self));
    }
  });
}

Var sub(Var a, Var b) {
  check_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto& o = out.storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    if (g.requires_grad(ia)) add_into(g.accum(ia), g.out_grad(self));
    if (g.requires_grad(ib)) {
      auto& d = g.accum(ib).storage();
      const auto& s = g.out_grad(self).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto& o = out.storage();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.graph->record(std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const auto& dy = g.out_grad(self).storage();
    if (g.requires_grad(ia)) {
      auto& d = g.accum(ia).storage();
      const auto& other = g.value(ib).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
    }
    if (g.requires_grad(ib)) {
      auto& d = g.accum(ib).storage();
      const auto& other = g.value(ia).storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= s;
  return a.graph->record(std::move(out), {a.id}, [s](Graph& g, std::size_t self) {
    auto& d = g.accum(g.input(self, 0)).storage();
    const auto& dy = g.out_grad(self).storage();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * dy[i];
  });
}

Var add_row(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.size() != av.cols()) {
    throw std::invalid_argument("add_row: bias " + shape_string(bv.shape()) +
                                " does not match " + shape_string(av.shape()));
  }
  Tensor out = av;
  const std::size_t n = av.rows(), m = av.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) += bv[c];
  return a.graph->record(std::move(out), {a.id, bias.id}, [n, m](Graph& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const Tensor& dy = g.out_grad(self);
    if (g.requires_grad(ia)) add_into(g.accum(ia), dy);
    if (g.requires_grad(ib)) {
      Tensor& d = g.accum(ib);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) d[c] += dy[r * m + c];
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.cols() != wv.rows() || bias.value().size() != wv.cols()) {
    throw std::invalid_argument("linear: input " + shape_string(xv.shape()) + " weight " +
                                shape_string(wv.shape()) + " bias " +
                                shape_string(bias.value().shape()));
  }
  return add_row(matmul(x, weight), bias);
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph->record(std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    auto& d = g.accum(g.input(self, 0)).storage();
    const auto& dy = g.out_grad(self).storage();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Graph& g = *parts.front().graph;
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != n) {
      throw std::invalid_argument("concat_cols: row mismatch " +
                                  shape_string(parts.front().shape()) + " vs " +
                                  shape_string(p.shape()));
    }
    widths.push_back(p.value().cols());
    ids.push_back(p.id);
    total += widths.back();
  }
  Tensor out = Tensor::matrix(n, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out.at(r, off + c) = pv.at(r, c);
    off += widths[k];
  }
  return g.record(std::move(out), std::move(ids),
                  [widths, n, total](Graph& g, std::size_t self) {
                    const Tensor& dy = g.out_grad(self);
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < widths.size(); ++k) {
                      const std::size_t in = g.input(self, k);
                      if (g.requires_grad(in)) {
                        Tensor& d = g.accum(in);
                        for (std::size_t r = 0; r < n; ++r)
                          for (std::size_t c = 0; c < widths[k]; ++c)
                            d[r * widths[k] + c] += dy[r * total + off + c];
                      }
                      off += widths[k];
                    }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin > end || end > av.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds for " +
                                shape_string(av.shape()));
  }
  const std::size_t n = av.rows(), m = av.cols(), w = end - begin;
  Tensor out = Tensor::matrix(n, w);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = av.at(r, begin + c);
  return a.graph->record(std::move(out), {a.id}, [n, m, w, begin](Graph& g, std::size_t self) {
    Tensor& d = g.accum(g.input(self, 0));
    const Tensor& dy = g.out_grad(self);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) d[r * m + begin + c] += dy[r * w + c];
  });
}

Var softmax_rows(Var logits, std::optional<Var> additive_bias) {
  Var z = additive_bias ? add(logits, *additive_bias) : logits;
  const Tensor& zv = z.value();
  const std::size_t n = zv.rows(), m = zv.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = zv.at(r, 0);
    for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, zv.at(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double e = std::exp(zv.at(r, c) - mx);
      out.at(r, c) = e;
      total += e;
    }
    for (std::size_t c = 0; c < m; ++c) out.at(r, c) /= total;
  }
  return z.graph->record(std::move(out), {z.id}, [n, m](Graph& g, std::size_t self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.out_grad(self);
    Tensor& d = g.accum(g.input(self, 0));
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += dy[r * m + c] * y[r * m + c];
      for (std::size_t c = 0; c < m; ++c) d[r * m + c] += y[r * m + c] * (dy[r * m + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  if (m < 2) throw std::invalid_argument("layer_norm: need at least 2 columns");
  if (gain.value().size() != m || shift.value().size() != m) {
    throw std::invalid_argument("layer_norm: gain/shift do not match " +
                                shape_string(xv.shape()));
  }
  const Tensor& gv = gain.value();
  const Tensor& sv = shift.value();
  Tensor out = Tensor::matrix(n, m);
  Tensor xhat = Tensor::matrix(n, m);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean += xv.at(r, c);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double d = xv.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < m; ++c) {
      xhat.at(r, c) = (xv.at(r, c) - mean) * inv_std[r];
      out.at(r, c) = gv[c] * xhat.at(r, c) + sv[c];
    }
  }
  return x.graph->record(
      std::move(out), {x.id, gain.id, shift.id},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), n, m](Graph& g, std::size_t self) {
        const Tensor& dy = g.out_grad(self);
        const std::size_t ix = g.input(self, 0), ig = g.input(self, 1), is = g.input(self, 2);
        const Tensor& gv = g.value(ig);
        if (g.requires_grad(ig)) {
          Tensor& d = g.accum(ig);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) d[c] += dy[r * m + c] * xhat[r * m + c];
        }
        if (g.requires_grad(is)) {
          Tensor& d = g.accum(is);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) d[c] += dy[r * m + c];
        }
        if (g.requires_grad(ix)) {
          Tensor& d = g.accum(ix);
          const double inv_m = 1.0 / static_cast<double>(m);
          for (std::size_t r = 0; r < n; ++r) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
              const double dxh = dy[r * m + c] * gv[c];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[r * m + c];
            }
            mean_dxhat *= inv_m;
            mean_dxhat_xhat *= inv_m;
            for (std::size_t c = 0; c < m; ++c) {
              const double dxh = dy[r * m + c] * gv[c];
              d[r * m + c] +=
                  inv_std[r] * (dxh - mean_dxhat - xhat[r * m + c] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = gelu_value(v);
  return x.graph->record(std::move(out), {x.id}, [](Graph& g, std::size_t self) {
    const std::size_t in = g.input(self, 0);
    const auto& xv = g.value(in).storage();
    const auto& dy = g.out_grad(self).storage();
    auto& d = g.accum(in).storage();
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
      d[i] += dy[i] * (cdf + v * pdf);
    }
  });
}

Var stop_gradient(Var a) { return a.graph->constant(a.value()); }

Var sum(Var a) {
  const std::size_t n = a.value().size();
  return a.graph->record(Tensor::scalar(a.value().sum()), {a.id},
                         [n](Graph& g, std::size_t self) {
                           const double s = g.out_grad(self)[0];
                           auto& d = g.accum(g.input(self, 0)).storage();
                           for (std::size_t i = 0; i < n; ++i) d[i] += s;
                         });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), m = z.cols();
  if (targets.size() != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for logits " + shape_string(z.shape()));
  }
  Tensor probs = Tensor::matrix(n, m);
  double loss = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const int t = targets[r];
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= m) {
      throw std::invalid_argument("cross_entropy: target out of range");
    }
    ++counted;
    double mx = z.at(r, 0);
    for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, z.at(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) total += std::exp(z.at(r, c) - mx);
    const double log_total = std::log(total) + mx;
    loss += log_total - z.at(r, static_cast<std::size_t>(t));
    for (std::size_t c = 0; c < m; ++c) probs.at(r, c) = std::exp(z.at(r, c) - log_total);
  }
  const double inv_n = counted ? 1.0 / static_cast<double>(counted) : 0.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.graph->record(
      Tensor::scalar(loss * inv_n), {logits.id},
      [probs = std::move(probs), tgt = std::move(tgt), n, m, inv_n](Graph& g, std::size_t self) {
        const double s = g.out_grad(self)[0] * inv_n;
        Tensor& d = g.accum(g.input(self, 0));
        for (std::size_t r = 0; r < n; ++r) {
          if (tgt[r] < 0) continue;
          for (std::size_t c = 0; c < m; ++c) d[r * m + c] += s * probs[r * m + c];
          d[r * m + static_cast<std::size_t>(tgt[r])] -= s;
        }
      });
}

Var smooth_l1(Var pred, const Tensor& target, std::span<const bool> rows) {
  const Tensor& p = pred.value();
  check_same(p, target, "smooth_l1");
  const std::size_t n = p.rows(), m = p.cols();
  if (rows.size() != n) throw std::invalid_argument("smooth_l1: row mask size mismatch");
  std::size_t count = 0;
  for (bool b : rows) count += b;
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  Tensor dloss = Tensor::matrix(n, m);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!rows[r]) continue;
    for (std::size_t c = 0; c < m; ++c) {
      const double diff = p.at(r, c) - target.at(r, c);
      const double ad = std::abs(diff);
      if (ad < 1.0) {
        loss += 0.5 * diff * diff;
        dloss.at(r, c) = diff;
      } else {
        loss += ad - 0.5;
        dloss.at(r, c) = diff > 0 ? 1.0 : -1.0;
      }
    }
  }
  return pred.graph->record(Tensor::scalar(loss * inv), {pred.id},
                            [dloss = std::move(dloss), inv](Graph& g, std::size_t self) {
                              const double s = g.out_grad(self)[0] * inv;
                              auto& d = g.accum(g.input(self, 0)).storage();
                              const auto& dl = dloss.storage();
                              for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * dl[i];
                            });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> coeffs) {
  if (terms.empty() || terms.size() != coeffs.size()) {
    throw std::invalid_argument("weighted_sum: terms/coefficients mismatch");
  }
  double total = 0.0;
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].value().size() != 1) throw std::invalid_argument("weighted_sum: non-scalar term");
    total += coeffs[k] * terms[k].value()[0];
    ids.push_back(terms[k].id);
  }
  std::vector<double> c(coeffs.begin(), coeffs.end());
  return terms.front().graph->record(Tensor::scalar(total), std::move(ids),
                                     [c = std::move(c)](Graph& g, std::size_t self) {
                                       const double s = g.out_grad(self)[0];
                                       for (std::size_t k = 0; k < c.size(); ++k) {
                                         const std::size_t in = g.input(self, k);
                                         if (g.requires_grad(in) && c[k] != 0.0)
                                           g.accum(in)[0] += s * c[k];
                                       }
                                     });
}

}  // namespace ad

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

Tensor dropout_mask(std::vector<std::size_t> shape, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout_mask: rate must be in [0, 1)");
  }
  Tensor mask(std::move(shape), 1.0);
  if (!training || rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.storage()) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace roirel
