#include "advreg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advreg/errors.hpp"
#include "advreg/kernels.hpp"

namespace advreg::ops {

namespace {

void require(bool ok, const std::string& op, const std::string& detail) {
  if (!ok) throw ShapeError(op + ": " + detail);
}

void require_same(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shapes " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) + " differ");
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  require(x.value().rank() == rank, op,
          "expected rank " + std::to_string(rank) + ", got shape " + shape_to_string(x.shape()));
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul",
          "inner extents of " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()) + " differ");
  Tensor out(Shape{m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.graph().record("matmul", std::move(out), {a, b}, [m, k, n](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) {
      kernels::matmul_nt_acc(ctx.grad_output.data(), ctx.inputs[1]->data(), ctx.input_grads[0]->data(), m, n, k);
    }
    if (ctx.input_grads[1]) {
      kernels::matmul_tn_acc(ctx.inputs[0]->data(), ctx.grad_output.data(), ctx.input_grads[1]->data(), k, m, n);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return a.graph().record("add", a.value() + b.value(), {a, b}, [](const BackwardContext& ctx) {
    accumulate(ctx.input_grads[0], ctx.grad_output);
    accumulate(ctx.input_grads[1], ctx.grad_output);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  return a.graph().record("sub", a.value() - b.value(), {a, b}, [](const BackwardContext& ctx) {
    accumulate(ctx.input_grads[0], ctx.grad_output);
    if (Tensor* gb = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= ctx.grad_output[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.graph().record("mul", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output;
    if (Tensor* ga = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[i] * (*ctx.inputs[1])[i];
    }
    if (Tensor* gb = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g[i] * (*ctx.inputs[0])[i];
    }
  });
}

Var square(const Var& x) { return mul(x, x); }

Var scale(const Var& x, double factor) {
  return x.graph().record("scale", factor * x.value(), {x}, [factor](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grads[0];
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += factor * ctx.grad_output[i];
  });
}

Var scale_by(const Var& x, const Var& s) {
  require(s.value().size() == 1, "scale_by", "factor must hold one element, got " + shape_to_string(s.shape()));
  const double factor = s.value()[0];
  return x.graph().record("scale_by", factor * x.value(), {x, s}, [](const BackwardContext& ctx) {
    const double f = (*ctx.inputs[1])[0];
    const Tensor& g = ctx.grad_output;
    if (Tensor* gx = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += f * g[i];
    }
    if (Tensor* gs = ctx.input_grads[1]) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * (*ctx.inputs[0])[i];
      (*gs)[0] += acc;
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const Shape& xs = x.shape();
  require(xs.size() >= 2, "add_bias", "input needs a batch and a channel axis, got " + shape_to_string(xs));
  require(bias.value().rank() == 1 && bias.shape()[0] == xs[1], "add_bias",
          "bias " + shape_to_string(bias.shape()) + " does not match axis 1 of " + shape_to_string(xs));
  const std::size_t channels = xs[1];
  const std::size_t inner = shape_size(xs) / (xs[0] * channels == 0 ? 1 : xs[0] * channels);
  Tensor out = x.value();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[(i / inner) % channels];
  return x.graph().record("add_bias", std::move(out), {x, bias}, [channels, inner](const BackwardContext& ctx) {
    accumulate(ctx.input_grads[0], ctx.grad_output);
    if (Tensor* gb = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < ctx.grad_output.size(); ++i) (*gb)[(i / inner) % channels] += ctx.grad_output[i];
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.graph().record("relu", std::move(out), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grads[0];
    for (std::size_t i = 0; i < gx->size(); ++i) {
      if (ctx.output[i] > 0.0) (*gx)[i] += ctx.grad_output[i];
    }
  });
}

Var conv2d(const Var& x, const Var& weight) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require(ws[1] == xs[1], "conv2d",
          "weight " + shape_to_string(ws) + " expects " + std::to_string(ws[1]) + " input channels, input is " +
              shape_to_string(xs));
  require(ws[2] == ws[3] && ws[2] % 2 == 1, "conv2d", "kernel must be square and odd, got " + shape_to_string(ws));
  const kernels::ConvGeometry g{xs[0], xs[1], ws[0], xs[2], xs[3], ws[2]};
  Tensor out(Shape{g.batch, g.out_channels, g.height, g.width});
  kernels::conv2d_forward(g, x.value().data(), weight.value().data(), out.data());
  return x.graph().record("conv2d", std::move(out), {x, weight}, [g](const BackwardContext& ctx) {
    if (ctx.input_grads[0]) {
      kernels::conv2d_backward_input_acc(g, ctx.grad_output.data(), ctx.inputs[1]->data(),
                                         ctx.input_grads[0]->data());
    }
    if (ctx.input_grads[1]) {
      kernels::conv2d_backward_weight_acc(g, ctx.inputs[0]->data(), ctx.grad_output.data(),
                                          ctx.input_grads[1]->data());
    }
  });
}

Var max_pool2d(const Var& x, std::size_t window) {
  require_rank(x, 4, "max_pool2d");
  const Shape& xs = x.shape();
  require(window >= 1 && xs[2] >= window && xs[3] >= window, "max_pool2d",
          "window " + std::to_string(window) + " does not fit " + shape_to_string(xs));
  const kernels::PoolGeometry g{xs[0] * xs[1], xs[2], xs[3], window};
  Tensor out(Shape{xs[0], xs[1], g.out_height(), g.out_width()});
  std::vector<std::size_t> argmax(g.output_size());
  kernels::max_pool_forward(g, x.value().data(), out.data(), argmax);
  return x.graph().record("max_pool2d", std::move(out), {x},
                          [argmax = std::move(argmax)](const BackwardContext& ctx) {
                            Tensor* gx = ctx.input_grads[0];
                            for (std::size_t i = 0; i < argmax.size(); ++i) (*gx)[argmax[i]] += ctx.grad_output[i];
                          });
}

Var reshape(const Var& x, Shape shape) {
  require(shape_size(shape) == x.value().size(), "reshape",
          "cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  return x.graph().record("reshape", x.value().reshaped(std::move(shape)), {x},
                          [](const BackwardContext& ctx) { accumulate(ctx.input_grads[0], ctx.grad_output); });
}

Var flatten(const Var& x) {
  require(x.value().rank() >= 1, "flatten", "needs a batch axis");
  const std::size_t rows = x.shape()[0];
  return reshape(x, Shape{rows, rows == 0 ? 0 : x.value().size() / rows});
}

namespace {

// Row-wise log-sum-exp shifted by the row max.
Tensor log_softmax_values(const Tensor& x) {
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out = x;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    const double top = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - top);
    const double lse = top + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) row[c] -= lse;
  }
  return out;
}

void require_logits(const Var& x, const char* op) {
  require_rank(x, 2, op);
  require(x.shape()[1] >= 1, op, "needs at least one class");
}

}  // namespace

Var softmax(const Var& x) {
  require_logits(x, "softmax");
  Tensor out = log_softmax_values(x.value());
  for (double& v : out.data()) v = std::exp(v);
  const std::size_t cols = x.shape()[1];
  return x.graph().record("softmax", std::move(out), {x}, [cols](const BackwardContext& ctx) {
    const Tensor& s = ctx.output;
    const Tensor& g = ctx.grad_output;
    Tensor* gx = ctx.input_grads[0];
    for (std::size_t r = 0; r < s.size() / cols; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * s[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) (*gx)[r * cols + c] += s[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Var log_softmax(const Var& x) {
  require_logits(x, "log_softmax");
  const std::size_t cols = x.shape()[1];
  return x.graph().record("log_softmax", log_softmax_values(x.value()), {x}, [cols](const BackwardContext& ctx) {
    const Tensor& ls = ctx.output;
    const Tensor& g = ctx.grad_output;
    Tensor* gx = ctx.input_grads[0];
    for (std::size_t r = 0; r < ls.size() / cols; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        (*gx)[r * cols + c] += g[r * cols + c] - std::exp(ls[r * cols + c]) * total;
      }
    }
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.graph().record("sum", Tensor::scalar(total), {x}, [](const BackwardContext& ctx) {
    const double g = ctx.grad_output[0];
    for (double& v : ctx.input_grads[0]->data()) v += g;
  });
}

Var mean(const Var& x) {
  require(x.value().size() > 0, "mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var l2_norm(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v * v;
  return x.graph().record("l2_norm", Tensor::scalar(std::sqrt(total)), {x}, [](const BackwardContext& ctx) {
    const double norm = ctx.output[0];
    if (norm == 0.0) return;
    const double g = ctx.grad_output[0] / norm;
    Tensor* gx = ctx.input_grads[0];
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g * (*ctx.inputs[0])[i];
  });
}

Var concat_rows(const Var& a, const Var& b) {
  const std::size_t split = a.value().size();
  return a.graph().record("concat_rows", advreg::concat_rows(a.value(), b.value()), {a, b},
                          [split](const BackwardContext& ctx) {
                            const Tensor& g = ctx.grad_output;
                            if (Tensor* ga = ctx.input_grads[0]) {
                              for (std::size_t i = 0; i < split; ++i) (*ga)[i] += g[i];
                            }
                            if (Tensor* gb = ctx.input_grads[1]) {
                              for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g[split + i];
                            }
                          });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  Tensor out = x.value().slice_rows(begin, end);
  const std::size_t offset = end == begin ? 0 : begin * (out.size() / (end - begin));
  return x.graph().record("slice_rows", std::move(out), {x}, [offset](const BackwardContext& ctx) {
    Tensor* gx = ctx.input_grads[0];
    for (std::size_t i = 0; i < ctx.grad_output.size(); ++i) (*gx)[offset + i] += ctx.grad_output[i];
  });
}

}  // namespace advreg::ops
