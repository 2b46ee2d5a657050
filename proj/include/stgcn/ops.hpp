#pragma once

#include <cstddef>
#include <vector>

#include "stgcn/tape.hpp"

// Differentiable operations. Every op validates shapes (DimensionError),
// rejects non-finite results (NumericalError) and records a backward rule
// on the tape that owns its inputs.

namespace stgcn::ops {

/// [m x k] * [k x n] -> [m x n]. Zero entries of `a` are skipped, so dense
/// adjacency constants cost roughly their number of edges.
Var matmul(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// [m x n] + [n] broadcast over rows.
Var add_row(Var a, Var bias);
Var scale(Var a, float factor);
Var mul(Var a, Var b);

Var relu(Var x);
Var sigmoid(Var x);

/// Reduces one axis by averaging; the result drops that axis.
Var mean_axis(Var x, std::size_t axis);
/// Scalar sum of all entries.
Var sum(Var x);

Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Entries [begin, end) along `axis`.
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);
/// Appends zero entries along axis 0 up to `length`.
Var pad_axis0(Var x, std::size_t length);

/// Valid strided convolution along axis 0.
///
/// x is [T x d_in] or [T x N x d_in] (N independent tracks sharing the
/// kernel); kernel is [k x d_in x d_out]. Output extent along axis 0 is
/// floor((T - k) / stride) + 1.
Var conv1d_temporal(Var x, Var kernel, std::size_t stride);

/// Transposed counterpart of conv1d_temporal. Output extent along axis 0 is
/// (T - 1) * stride + k.
Var deconv1d_temporal(Var x, Var kernel, std::size_t stride);

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride);
std::size_t deconv_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

}  // namespace stgcn::ops
