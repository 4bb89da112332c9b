#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "bas/graph.hpp"
#include "bas/tensor.hpp"

namespace bas {

// Central-difference gradient check. `build` assembles a scalar loss on a
// fresh graph from the given input nodes; the harness compares the analytic
// gradient against (f(x+eps) - f(x-eps)) / (2 eps) per coordinate.
//
// Components whose reference magnitude is below `abs_floor` are compared
// absolutely, everything else relatively. Returns the worst error either way.
struct GradCheckResult {
  double max_err = 0.0;
  size_t coords_checked = 0;
};

using LossBuilder = std::function<int(Graph<double>&, const std::vector<int>&)>;

inline double eval_loss(const LossBuilder& build, const std::vector<TensorD>& inputs) {
  Graph<double> g;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const auto& t : inputs) ids.push_back(g.input(t, false));
  int loss = build(g, ids);
  return g.value(loss).data[0];
}

inline GradCheckResult finite_diff_check(const LossBuilder& build, std::vector<TensorD> inputs,
                                         double eps, double abs_floor = 1e-4) {
  GradCheckResult res;

  std::vector<TensorD> analytic;
  {
    Graph<double> g;
    std::vector<int> ids;
    for (const auto& t : inputs) ids.push_back(g.input(t, true));
    int loss = build(g, ids);
    g.backward(loss);
    for (int id : ids) analytic.push_back(g.grad(id));
  }

  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    for (size_t i = 0; i < inputs[ti].numel(); ++i) {
      const double orig = inputs[ti].data[i];
      inputs[ti].data[i] = orig + eps;
      const double fp = eval_loss(build, inputs);
      inputs[ti].data[i] = orig - eps;
      const double fm = eval_loss(build, inputs);
      inputs[ti].data[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = analytic[ti].data[i];
      const double mag = std::max(std::fabs(fd), std::fabs(an));
      const double err = mag < abs_floor ? std::fabs(fd - an) : std::fabs(fd - an) / mag;
      res.max_err = std::max(res.max_err, err);
      ++res.coords_checked;
    }
  }
  return res;
}

}  // namespace bas
