#pragma once

// Differentiable primitives. Each op computes its value eagerly and, when the
// graph is recording and an operand requires a gradient, registers its
// backward rule. Shape violations throw ShapeError.

#include <cstddef>

#include "advreg/graph.hpp"

namespace advreg::ops {

// (m,k) x (k,n) -> (m,n)
Var matmul(const Var& a, const Var& b);

// Elementwise on equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var square(const Var& x);

Var scale(const Var& x, double factor);
// x * s for a single-element s.
Var scale_by(const Var& x, const Var& s);

// Adds bias (n) along axis 1 of x: (B,n) or (B,n,H,W).
Var add_bias(const Var& x, const Var& bias);

Var relu(const Var& x);

// x (B,Cin,H,W), weight (Cout,Cin,K,K), K odd: stride 1, zero same-padding.
Var conv2d(const Var& x, const Var& weight);

// Non-overlapping window x window max pooling on (B,C,H,W); trailing rows and
// columns that do not fill a window are dropped.
Var max_pool2d(const Var& x, std::size_t window);

Var reshape(const Var& x, Shape shape);
// (B, ...) -> (B, prod(...))
Var flatten(const Var& x);

// Row-wise over the last axis of a (B,C) tensor.
Var softmax(const Var& x);
Var log_softmax(const Var& x);

// Scalar reductions over all elements.
Var sum(const Var& x);
Var mean(const Var& x);
// sqrt(sum(x^2)); the gradient at x = 0 is taken as 0.
Var l2_norm(const Var& x);

Var concat_rows(const Var& a, const Var& b);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);

}  // namespace advreg::ops
