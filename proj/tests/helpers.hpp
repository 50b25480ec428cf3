#pragma once

#include <functional>
#include <random>

#include "advreg/gradcheck.hpp"
#include "advreg/graph.hpp"
#include "advreg/tensor.hpp"

namespace advreg::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Largest coordinate-wise relative error between analytic and central
// differences, over coordinates where either is larger than `floor`.
inline double worst_gradient_error(const std::function<Var(Graph&, const Var&)>& build, const Tensor& point,
                                   double h = 1e-5, double floor = 1e-6) {
  Graph g;
  Var x = g.input(point, true);
  const Tensor analytic = g.backward(build(g, x)).of(x);
  const Tensor numeric = finite_difference_gradient(
      [&](const Tensor& p) {
        Graph fg(false);
        return build(fg, fg.constant(p)).value().item();
      },
      point, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (std::abs(analytic[i]) > floor || std::abs(numeric[i]) > floor) {
      worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    }
  }
  return worst;
}

}  // namespace advreg::testing
