#include "advreg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advreg/errors.hpp"

namespace advreg {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& point, double h) {
  if (!(h > 0.0)) throw Error("finite difference step must be positive");
  Tensor grad = Tensor::zeros_like(point);
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double up = f(probe);
    probe[i] = point[i] - h;
    const double down = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite function value at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace advreg
