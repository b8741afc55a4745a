#pragma once

#include <random>

#include "cladnet/tape.hpp"

namespace cladnet {

// Differentiable primitives. Every function validates shapes up front and
// records a backward closure on the tape of its inputs. Scalars travel as
// shape {1} tensors.

// Elementwise, same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var mul_scalar(Var a, double c);
Var add_scalar(Var a, double c);

// Broadcast over a [r x c] matrix: rowvec is [1 x c], colvec is [r x 1].
Var add_rowvec(Var m, Var v);
Var mul_rowvec(Var m, Var v);
Var div_rowvec(Var m, Var v);
Var add_colvec(Var m, Var v);
Var mul_colvec(Var m, Var v);
Var div_colvec(Var m, Var v);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var relu(Var a);
Var sqrt_eps(Var a, double eps);  // sqrt(a + eps), expects a + eps >= 0

// Row-stochastic softmax with row-max subtraction.
Var softmax_rows(Var m);
Var log_softmax_rows(Var m);

// Normalizes each row to zero mean / unit variance (biased variance,
// eps-guarded), then applies gain and bias ([1 x c] each).
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

// x: [c_in x len], kernels: [c_out x c_in x k]. Zero padding on both ends.
Var conv1d(Var x, Var kernels, std::size_t stride = 1, std::size_t padding = 0);
Var avg_pool1d(Var x, std::size_t window, std::size_t stride);

Var sum(Var a);               // scalar
Var row_sums(Var m);          // [r x 1]
Var col_sums(Var m);          // [1 x c]

Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var stack_rows(const std::vector<Var>& rows);  // k rows of [1 x c] -> [k x c]

// Composites built from the primitives above.
Var square(Var a);
Var mean_all(Var a);
Var mean_rows(Var m);  // [1 x c], mean over rows
Var mean_cols(Var m);  // [r x 1], mean over cols

// Inverted dropout: scales surviving entries by 1/(1-rate). Identity when
// rate == 0 or train == false.
Var dropout(Var a, double rate, bool train, std::mt19937_64& rng);

// Non-tape helpers shared with forward-only paths.
Tensor softmax_rows_value(const Tensor& m);
Tensor positional_encoding(std::size_t len, std::size_t d_model);

}  // namespace cladnet
