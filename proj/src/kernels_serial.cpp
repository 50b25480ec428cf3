#include "advreg/kernels.hpp"

namespace advreg::kernels::reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
      c[i * n + j] += sum;
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
      c[i * n + j] += sum;
    }
  }
}

namespace {

// Visits every (output pixel, input tap) pair that lands inside the image.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  const auto pad = static_cast<long>(g.kernel / 2);
  const auto h = static_cast<long>(g.height);
  const auto w = static_cast<long>(g.width);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          const std::size_t out_idx = ((n * g.out_channels + co) * g.height + static_cast<std::size_t>(y)) * g.width +
                                      static_cast<std::size_t>(x);
          for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::size_t ky = 0; ky < g.kernel; ++ky) {
              const long yy = y + static_cast<long>(ky) - pad;
              if (yy < 0 || yy >= h) continue;
              for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const long xx = x + static_cast<long>(kx) - pad;
                if (xx < 0 || xx >= w) continue;
                const std::size_t in_idx = ((n * g.in_channels + ci) * g.height + static_cast<std::size_t>(yy)) *
                                               g.width +
                                           static_cast<std::size_t>(xx);
                const std::size_t w_idx = ((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx;
                fn(out_idx, in_idx, w_idx);
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  for (std::size_t i = 0; i < g.output_size(); ++i) output[i] = 0.0;
  for_each_tap(g, [&](std::size_t o, std::size_t in, std::size_t w) { output[o] += input[in] * weight[w]; });
}

void conv2d_backward_input_acc(const ConvGeometry& g, std::span<const double> grad_output,
                               std::span<const double> weight, std::span<double> grad_input) {
  for_each_tap(g, [&](std::size_t o, std::size_t in, std::size_t w) { grad_input[in] += grad_output[o] * weight[w]; });
}

void conv2d_backward_weight_acc(const ConvGeometry& g, std::span<const double> input,
                                std::span<const double> grad_output, std::span<double> grad_weight) {
  for_each_tap(g, [&](std::size_t o, std::size_t in, std::size_t w) { grad_weight[w] += grad_output[o] * input[in]; });
}

void max_pool_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                      std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  for (std::size_t p = 0; p < g.planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (p * g.height + y * g.window) * g.width + x * g.window;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            const std::size_t idx = (p * g.height + y * g.window + dy) * g.width + x * g.window + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t out = (p * oh + y) * ow + x;
        output[out] = input[best];
        argmax[out] = best;
      }
    }
  }
}

}  // namespace advreg::kernels::reference
