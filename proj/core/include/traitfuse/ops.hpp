#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "traitfuse/tape.hpp"

/// Differentiable kernels. Every function records one node on the tape of its
/// first argument and throws DimensionError naming the offending shapes.
namespace traitfuse {

enum class Activation { relu, sigmoid, tanh };

/// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
/// Elementwise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);

Var activation(const Var& x, Activation kind);
inline Var relu(const Var& x) { return activation(x, Activation::relu); }
inline Var sigmoid(const Var& x) { return activation(x, Activation::sigmoid); }
inline Var tanh(const Var& x) { return activation(x, Activation::tanh); }

/// Max-subtracted softmax along one axis.
Var softmax(const Var& x, std::size_t axis);

/// Max pooling over the trailing kernel.size() axes; leading axes pass
/// through. Gradient goes to the first maximum in each window.
Var pool_max(const Var& x, std::span<const std::size_t> kernel, std::span<const std::size_t> stride);

/// Valid cross-correlation. x is (C, spatial...), kernels (K, C, window...),
/// bias (K). Output is (K, floor((in - window)/stride) + 1, ...).
Var convolve(const Var& x, const Var& kernels, const Var& bias, std::size_t stride, std::size_t spatial_rank);

/// x [..., in] times w [in, out] plus b [out].
Var linear(const Var& x, const Var& w, const Var& b);

/// Inverted dropout; identity when !training or p == 0.
Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng);

Var concat(std::span<const Var> xs, std::size_t axis);
/// Appends vector v to the channel axis (axis 0) at every position of x.
Var broadcast_concat(const Var& x, const Var& v);

Var reshape(const Var& x, Shape shape);
/// Rank-2 transpose.
Var transpose(const Var& x);

/// Mean squared difference over all elements; scalar result.
Var mse(const Var& pred, const Var& target);
Var sum(const Var& x);
Var mean(const Var& x);

/// Normalizes the last axis, then applies per-feature gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Median along axis 0 of a rank-2 tensor. With an even count the two middle
/// values are averaged; ties resolve by original row order.
Var median_rows(const Var& x);

}  // namespace traitfuse
