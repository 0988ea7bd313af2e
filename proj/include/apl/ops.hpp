#pragma once

#include <vector>

#include "apl/tape.hpp"

namespace apl {

// Op vocabulary over 2-D arrays. Axis 0 runs down the rows, axis 1 along the
// columns; reductions and softmax/layer_norm follow that convention.
// Shape violations throw Error naming the op and both shapes.

Var matmul(Var a, Var b);

// Elementwise add; b may also be 1xN (row broadcast, e.g. biases) or 1x1.
Var add(Var a, Var b);

// Elementwise product, same shapes.
Var multiply(Var a, Var b);

// Multiply by a compile-time constant scalar.
Var scale(Var a, double c);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

// Stable softmax along the given axis; outputs are in (0,1) and sum to 1.
Var softmax(Var a, int axis);

// Per-row normalization to zero mean, unit variance. No affine term.
Var layer_norm(Var a, double eps);

// Concatenate along axis 0 (stack rows) or 1 (widen columns).
Var concat(const std::vector<Var>& xs, int axis);

// Rectangular slice [r0, r0+rows) x [c0, c0+cols).
Var slice(Var a, int r0, int c0, int rows, int cols);

Var transpose(Var a);

// Replicate a 1xN row m times.
Var tile_rows(Var a, int m);

// Rows of `table` selected by index; gradients scatter-add into the table.
Var embedding_lookup(Var table, const std::vector<int>& indices);

Var reduce_sum(Var a, int axis);
Var reduce_mean(Var a, int axis);

// softmax(q k^T / sqrt(d_k)) v for single-head inputs q:(n x d_k),
// k:(m x d_k), v:(m x d_v).
Var scaled_dot_product_attention(Var q, Var k, Var v);

// Mean negative log-likelihood over the batch; probabilities are clamped to
// >= 1e-12 before the logarithm. logits: (B x N), labels: B class indices.
Var cross_entropy_with_logits(Var logits, const std::vector<int>& labels);

constexpr double kProbClamp = 1e-12;

// Plain-value helpers (no graph) used by the controller and eval paths.
Mat softmax_rows(const Mat& logits);

}  // namespace apl
