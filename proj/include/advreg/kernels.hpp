#pragma once

// Dense numeric kernels behind the differentiable ops.
//
// Two implementations with identical signatures:
//   advreg::kernels             OpenMP-parallel, im2col + blocked GEMM
//   advreg::kernels::reference  serial, direct loops; kept as the test oracle
//
// All matrices are row-major. Functions suffixed `_acc` accumulate into the
// output; the others overwrite it. Parallel kernels partition output elements
// across threads so every element is summed in a fixed order: results do not
// depend on the thread count.

#include <cstddef>
#include <span>

namespace advreg::kernels {

// NCHW convolution with a square odd kernel, stride 1 and zero "same" padding.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 3;

  std::size_t input_size() const { return batch * in_channels * height * width; }
  std::size_t output_size() const { return batch * out_channels * height * width; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

// Non-overlapping max pooling over `planes` independent HxW planes.
struct PoolGeometry {
  std::size_t planes = 1;
  std::size_t height = 2;
  std::size_t width = 2;
  std::size_t window = 2;

  std::size_t out_height() const { return height / window; }
  std::size_t out_width() const { return width / window; }
  std::size_t output_size() const { return planes * out_height() * out_width(); }
};

// c[m,n] = a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[m,n] += a[m,k] * b[n,k]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
// c[m,n] += a[k,m]^T * b[k,n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output);
void conv2d_backward_input_acc(const ConvGeometry& g, std::span<const double> grad_output,
                               std::span<const double> weight, std::span<double> grad_input);
void conv2d_backward_weight_acc(const ConvGeometry& g, std::span<const double> input,
                                std::span<const double> grad_output, std::span<double> grad_weight);

// `argmax` receives, per output element, the flat input index of the winner
// (first maximum in row-major window order).
void max_pool_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                      std::span<std::size_t> argmax);

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output);
void conv2d_backward_input_acc(const ConvGeometry& g, std::span<const double> grad_output,
                               std::span<const double> weight, std::span<double> grad_input);
void conv2d_backward_weight_acc(const ConvGeometry& g, std::span<const double> input,
                                std::span<const double> grad_output, std::span<double> grad_weight);

void max_pool_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                      std::span<std::size_t> argmax);

}  // namespace reference

}  // namespace advreg::kernels
