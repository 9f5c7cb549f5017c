#pragma once

#include "pd/tape.hpp"
#include "pd/tensor.hpp"

// Differentiable tensor operations. Every op validates shapes, computes the
// forward value, and (when any input is on a tape) records a node whose
// backward accumulates into the inputs' gradient buffers. Ops never mutate
// their inputs.
namespace pd {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> add(const Tensor<T>& a, T b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, T b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// scale_by_constant
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> abs(const Tensor<T>& a);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> elu(const Tensor<T>& a);

enum class Reduce { all, spatial };

// Arithmetic mean, over every element (scalar output) or over the spatial
// extents only (output [N,C,1,1]). Backward spreads grad/count uniformly.
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, Reduce over = Reduce::all);

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a);

// Cross-correlation with bias, zero padding. kernel is [Cout,Cin,k,k] with k
// odd; bias holds Cout values.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias, int stride, int padding);

// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> nn_upsample2x(const Tensor<T>& input);

// Nearest-neighbour 2x upsampling followed by a stride-1 same-padding conv;
// output spatial extents are exactly double the input's.
template <typename T>
Tensor<T> upsample2x_conv(const Tensor<T>& input, const Tensor<T>& kernel,
                          const Tensor<T>& bias);

// Samples each row of `source` at per-pixel horizontal coordinates x_coords
// ([N,1,H,W], broadcast over channels). Coordinates are clamped to
// [0, W-1]; output(x,y) = (1-a)*src(floor(xc),y) + a*src(floor(xc)+1,y).
// Differentiable w.r.t. both source and x_coords.
template <typename T>
Tensor<T> horizontal_bilinear_sample(const Tensor<T>& source,
                                     const Tensor<T>& x_coords);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Contiguous channel slice [first, first+count), [N,C,H,W] -> [N,count,H,W].
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int first, int count);

// 2x2 area-average downsampling; spatial extents must be even.
template <typename T>
Tensor<T> avgpool2x(const Tensor<T>& input);

// Mean over the channel extent, [N,C,H,W] -> [N,1,H,W].
template <typename T>
Tensor<T> channel_mean(const Tensor<T>& input);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, T b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, T b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return scale(a, s); }

}  // namespace pd
