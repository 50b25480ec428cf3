#include <algorithm>
#include <vector>

#include "advreg/kernels.hpp"

namespace advreg::kernels {

namespace {

constexpr std::size_t kRowBlock = 32;
constexpr std::size_t kColBlock = 256;

long blocks(std::size_t extent, std::size_t block) { return static_cast<long>((extent + block - 1) / block); }

double dot(const double* x, const double* y, std::size_t len) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= len; p += 4) {
    s0 += x[p] * y[p];
    s1 += x[p + 1] * y[p + 1];
    s2 += x[p + 2] * y[p + 2];
    s3 += x[p + 3] * y[p + 3];
  }
  for (; p < len; ++p) s0 += x[p] * y[p];
  return (s0 + s1) + (s2 + s3);
}

// col[r, n*HW + s], r = (ci*K + ky)*K + kx, s = y*W + x.
void im2col(const ConvGeometry& g, std::span<const double> input, std::vector<double>& col) {
  const std::size_t hw = g.height * g.width;
  const std::size_t cols = g.batch * hw;
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  col.assign(rows * cols, 0.0);
  const long pad = static_cast<long>(g.kernel / 2);
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < static_cast<long>(rows); ++r) {
    const std::size_t kx = static_cast<std::size_t>(r) % g.kernel;
    const std::size_t ky = (static_cast<std::size_t>(r) / g.kernel) % g.kernel;
    const std::size_t ci = static_cast<std::size_t>(r) / (g.kernel * g.kernel);
    const long dy = static_cast<long>(ky) - pad;
    const long dx = static_cast<long>(kx) - pad;
    const long x_lo = std::max(0L, -dx);
    const long x_hi = std::min(w, w - dx);
    double* dst_row = col.data() + static_cast<std::size_t>(r) * cols;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* plane = input.data() + (n * g.in_channels + ci) * hw;
      double* dst = dst_row + n * hw;
      for (long y = 0; y < h; ++y) {
        const long yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        const double* src = plane + yy * w;
        double* out = dst + y * w;
        for (long x = x_lo; x < x_hi; ++x) out[x] = src[x + dx];
      }
    }
  }
}

// Reorders NCHW grad_output into [Cout, N*HW].
void channels_first(const ConvGeometry& g, std::span<const double> nchw, std::vector<double>& out) {
  const std::size_t hw = g.height * g.width;
  out.resize(g.out_channels * g.batch * hw);
#pragma omp parallel for schedule(static)
  for (long co = 0; co < static_cast<long>(g.out_channels); ++co) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* src = nchw.data() + (n * g.out_channels + static_cast<std::size_t>(co)) * hw;
      std::copy(src, src + hw, out.data() + (static_cast<std::size_t>(co) * g.batch + n) * hw);
    }
  }
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const long row_blocks = blocks(m, kRowBlock);
  const long col_blocks = blocks(n, kColBlock);
#pragma omp parallel for collapse(2) schedule(static)
  for (long ib = 0; ib < row_blocks; ++ib) {
    for (long jb = 0; jb < col_blocks; ++jb) {
      const std::size_t i0 = static_cast<std::size_t>(ib) * kRowBlock;
      const std::size_t i1 = std::min(m, i0 + kRowBlock);
      const std::size_t j0 = static_cast<std::size_t>(jb) * kColBlock;
      const std::size_t len = std::min(n, j0 + kColBlock) - j0;
      for (std::size_t i = i0; i < i1; ++i) {
        double* crow = c.data() + i * n + j0;
        std::fill(crow, crow + len, 0.0);
        const double* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = arow[p];
          const double* brow = b.data() + p * n + j0;
          for (std::size_t j = 0; j < len; ++j) crow[j] += aip * brow[j];
        }
      }
    }
  }
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for collapse(2) schedule(static)
  for (long i = 0; i < static_cast<long>(m); ++i) {
    for (long j = 0; j < static_cast<long>(n); ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      c[ui * n + uj] += dot(a.data() + ui * k, b.data() + uj * k, k);
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const long row_blocks = blocks(m, kRowBlock);
  const long col_blocks = blocks(n, kColBlock);
#pragma omp parallel for collapse(2) schedule(static)
  for (long ib = 0; ib < row_blocks; ++ib) {
    for (long jb = 0; jb < col_blocks; ++jb) {
      const std::size_t i0 = static_cast<std::size_t>(ib) * kRowBlock;
      const std::size_t i1 = std::min(m, i0 + kRowBlock);
      const std::size_t j0 = static_cast<std::size_t>(jb) * kColBlock;
      const std::size_t len = std::min(n, j0 + kColBlock) - j0;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b.data() + p * n + j0;
        for (std::size_t i = i0; i < i1; ++i) {
          const double api = a[p * m + i];
          if (api == 0.0) continue;
          double* crow = c.data() + i * n + j0;
          for (std::size_t j = 0; j < len; ++j) crow[j] += api * brow[j];
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  thread_local std::vector<double> col;
  thread_local std::vector<double> out_cf_buf;
  // worker threads must see the caller's buffer, not their own thread_local
  std::vector<double>& out_cf = out_cf_buf;
  const std::size_t hw = g.height * g.width;
  const std::size_t cols = g.batch * hw;
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  im2col(g, input, col);
  out_cf.resize(g.out_channels * cols);
  matmul(weight, col, out_cf, g.out_channels, rows, cols);
#pragma omp parallel for schedule(static)
  for (long n = 0; n < static_cast<long>(g.batch); ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const double* src = out_cf.data() + co * cols + static_cast<std::size_t>(n) * hw;
      std::copy(src, src + hw, output.data() + (static_cast<std::size_t>(n) * g.out_channels + co) * hw);
    }
  }
}

void conv2d_backward_input_acc(const ConvGeometry& g, std::span<const double> grad_output,
                               std::span<const double> weight, std::span<double> grad_input) {
  thread_local std::vector<double> gy;
  thread_local std::vector<double> dcol_buf;
  std::vector<double>& dcol = dcol_buf;
  const std::size_t hw = g.height * g.width;
  const std::size_t cols = g.batch * hw;
  const std::size_t kk = g.kernel * g.kernel;
  const std::size_t rows = g.in_channels * kk;
  channels_first(g, grad_output, gy);
  dcol.assign(rows * cols, 0.0);
  matmul_tn_acc(weight, gy, dcol, rows, g.out_channels, cols);

  const long pad = static_cast<long>(g.kernel / 2);
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
#pragma omp parallel for collapse(2) schedule(static)
  for (long n = 0; n < static_cast<long>(g.batch); ++n) {
    for (long ci = 0; ci < static_cast<long>(g.in_channels); ++ci) {
      double* plane = grad_input.data() + (static_cast<std::size_t>(n) * g.in_channels + static_cast<std::size_t>(ci)) * hw;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const std::size_t r = (static_cast<std::size_t>(ci) * g.kernel + ky) * g.kernel + kx;
          const double* src = dcol.data() + r * cols + static_cast<std::size_t>(n) * hw;
          const long dy = static_cast<long>(ky) - pad;
          const long dx = static_cast<long>(kx) - pad;
          const long x_lo = std::max(0L, -dx);
          const long x_hi = std::min(w, w - dx);
          for (long y = 0; y < h; ++y) {
            const long yy = y + dy;
            if (yy < 0 || yy >= h) continue;
            double* dst = plane + yy * w;
            const double* s = src + y * w;
            for (long x = x_lo; x < x_hi; ++x) dst[x + dx] += s[x];
          }
        }
      }
    }
  }
}

void conv2d_backward_weight_acc(const ConvGeometry& g, std::span<const double> input,
                                std::span<const double> grad_output, std::span<double> grad_weight) {
  thread_local std::vector<double> col;
  thread_local std::vector<double> gy;
  const std::size_t cols = g.batch * g.height * g.width;
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  im2col(g, input, col);
  channels_first(g, grad_output, gy);
  matmul_nt_acc(gy, col, grad_weight, g.out_channels, cols, rows);
}

void max_pool_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                      std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
#pragma omp parallel for schedule(static)
  for (long p = 0; p < static_cast<long>(g.planes); ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * g.height * g.width;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + y * g.window * g.width + x * g.window;
        for (std::size_t dy = 0; dy < g.window; ++dy) {
          const std::size_t row = base + (y * g.window + dy) * g.width + x * g.window;
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            if (input[row + dx] > input[best]) best = row + dx;
          }
        }
        const std::size_t out = (static_cast<std::size_t>(p) * oh + y) * ow + x;
        output[out] = input[best];
        argmax[out] = best;
      }
    }
  }
}

}  // namespace advreg::kernels
