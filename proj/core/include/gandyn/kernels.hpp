#pragma once

// Numeric kernels behind the graph primitives. Every function writes into
// `out`, resizing it as needed, so evaluators can reuse buffers across runs.

#include <cstddef>

#include "gandyn/tensor.hpp"

namespace gandyn::kernels {

/// Numerically stable log(1 + e^x).
double softplus(double x) noexcept;
/// Logistic sigmoid 1 / (1 + e^-x), stable for large |x|.
double sigmoid(double x) noexcept;

/// True when `from` broadcasts to `to` under right-aligned rules.
bool broadcastable(const Shape& from, const Shape& to);

void broadcast_to(const Tensor& in, const Shape& shape, Tensor& out);
/// Adjoint of broadcast_to: sums `in` down to `shape`.
void sum_to(const Tensor& in, const Shape& shape, Tensor& out);

/// [m, k] x [k, n] -> [m, n].
void matmul(const Tensor& a, const Tensor& b, Tensor& out);
void transpose(const Tensor& a, Tensor& out);

struct ConvGeometry {
  std::size_t groups = 1;
  std::size_t padding = 0;
};

/// Stride-1 grouped cross-correlation. x [n, cin, h, w], weight [cout, cin/g, kh, kw].
void conv2d(const Tensor& x, const Tensor& weight, ConvGeometry geo, Tensor& out);
/// Adjoint of conv2d in its input: maps an output-shaped tensor back to `input_shape`.
void conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, ConvGeometry geo,
                       const Shape& input_shape, Tensor& out);
/// Adjoint of conv2d in its weight.
void conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, ConvGeometry geo,
                        const Shape& weight_shape, Tensor& out);

/// Half-pixel-centred bilinear resampling of [n, c, h, w] to [n, c, out_h, out_w],
/// replicating edge pixels outside the source grid.
void resample(const Tensor& x, std::size_t out_h, std::size_t out_w, Tensor& out);
/// Transpose of resample: maps a resampled-shaped tensor back to `input_shape`.
void resample_adjoint(const Tensor& grad_out, const Shape& input_shape, Tensor& out);

}  // namespace gandyn::kernels
