#pragma once

#include <functional>

#include "advreg/tensor.hpp"

namespace advreg {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
// Independent of the graph machinery; used to check analytic gradients.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& point, double h);

// |a - b| / max(|a|, |b|), and 0 when both are 0.
double relative_error(double a, double b);

}  // namespace advreg
