#pragma once

#include "gala/tape.hpp"

#include <vector>

namespace gala {
namespace ops {

// Elementwise, same shape unless noted.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);
Var abs_value(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var exp_elem(Var a);

// Linear algebra on 2-D tensors.
Var matmul(Var a, Var b);
Var transpose(Var a);
// x + row-broadcast bias; x is R×C, bias is 1×C.
Var add_rowvec(Var x, Var bias);

// Per-last-axis standardization then affine. gamma/beta are 1×d.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Numerically stable rowwise softmax (max subtraction).
Var softmax_rows(Var x);

// Reductions.
Var sum_all(Var a);      // -> 1x1
Var mean_all(Var a);     // -> 1x1
Var mean_rows(Var x);    // R×C -> 1×C

// Shape plumbing.
Var reshape(Var x, std::vector<int> shape);
Var repeat_rows(Var x, int k);                 // R×C -> (R*k)×C, each row k times
Var gather_rows(Var x, std::vector<int> idx);  // -> |idx|×C
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var slice_cols(Var x, int c0, int c1);         // half-open [c0, c1)

// Unit-normalize each row. Rows with norm < zero_eps become zero rows with
// zero gradient when strict is false, and raise numeric_error when true.
Var rows_normalize(Var x, double zero_eps = 1e-12, bool strict = false);

// Separable same-size blur with zero padding. img holds C channels per pixel
// as an (H*W)×C tensor; kernel is normalized 1-D taps.
Var blur2d(Var img, int height, int width, const std::vector<double>& kernel);

// Weighted cross entropy over rows of logits. When exclude_target is set the
// partition omits the target column (used only by the nonstandard
// contrastive-denominator variant).
Var cross_entropy_rows(Var logits, const std::vector<int>& targets,
                       const std::vector<double>& row_weights, bool exclude_target = false);

// Mean over rows of -sum_k p*ln(p), with 0*ln(0) := 0.
Var entropy_rows(Var probs);

// Affine layer helper: x·W + bias.
Var affine(Var x, Var weight, Var bias);

} // namespace ops
} // namespace gala
