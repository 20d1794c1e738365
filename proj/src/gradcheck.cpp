#include "roirel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace roirel {

double gradient_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  const double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-8) return diff;
  return diff / denom;
}

GradCheckReport finite_diff_check(const LossBuilder& build, std::span<Parameter* const> params,
                                  double h, double tolerance, double corrupt_scale) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&build] {
    Graph g;
    return build(g).value()[0];
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    GradCheckEntry entry;
    entry.name = p.name;
    entry.entries = p.value.size();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = eval();
      p.value[i] = saved - h;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i] * corrupt_scale;
      entry.max_error = std::max(entry.max_error, gradient_error(a, numeric));
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
    }
    entry.passed = entry.max_error <= tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace roirel
