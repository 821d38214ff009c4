#pragma once

#include "reenact/nn/autograd.hpp"

#include <array>

namespace reenact::nn {

// Convolutions. Weights are [out, in, k, k] for conv2d and [in, out, k, k]
// for the transposed (fractionally strided) variant. Bias may be undefined.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad);
template <typename S>
Var<S> conv_transpose2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad,
                        int output_pad);
// x is flattened per sample; w is [out, in, 1, 1]. Result is [N, out, 1, 1].
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b);

template <typename S>
Var<S> relu(const Var<S>& x);
template <typename S>
Var<S> leaky_relu(const Var<S>& x, S slope);
template <typename S>
Var<S> sigmoid(const Var<S>& x);
template <typename S>
Var<S> tanh(const Var<S>& x);

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> scale(const Var<S>& x, S factor);
template <typename S>
Var<S> add_scalar(const Var<S>& x, S value);
// m has a single channel and is broadcast over the channels of x.
template <typename S>
Var<S> mul_channels(const Var<S>& x, const Var<S>& m);

template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& xs);
template <typename S>
Var<S> slice_channels(const Var<S>& x, int first, int count);
// Batch entries by index, in the given order.
template <typename S>
Var<S> select_batch(const Var<S>& x, const std::vector<int>& indices);
template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape);
// [N, F, 1, 1] -> [N, F, h, w]
template <typename S>
Var<S> broadcast_spatial(const Var<S>& v, int h, int w);

template <typename S>
Var<S> avg_pool2(const Var<S>& x);
template <typename S>
Var<S> upsample_nearest2(const Var<S>& x);
template <typename S>
Var<S> resize_nearest(const Var<S>& x, int h, int w);
template <typename S>
Var<S> crop(const Var<S>& x, int y0, int x0, int h, int w);
// Bilinear resampling of one box (x0, y0, x1, y1) per sample to out_h x out_w.
template <typename S>
Var<S> crop_resize(const Var<S>& x, const std::vector<std::array<float, 4>>& boxes, int out_h, int out_w);

template <typename S>
struct RunningStats {
  Tensor<S> mean;
  Tensor<S> var;
};
template <typename S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, RunningStats<S>& running,
                  bool training, S momentum = S(0.1), S eps = S(1e-5));
// Per-sample, per-channel normalization. gamma/beta may be undefined.
template <typename S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps = S(1e-5));

template <typename S>
Var<S> sum(const Var<S>& x);
template <typename S>
Var<S> mean(const Var<S>& x);
template <typename S>
Var<S> spatial_mean(const Var<S>& x);  // [N,C,H,W] -> [N,C,1,1]

// Fused reductions used by the losses. All return shape [1,1,1,1].
template <typename S>
Var<S> mean_squared_to(const Var<S>& x, S target);  // mean((x - t)^2)
template <typename S>
Var<S> mean_abs_diff(const Var<S>& a, const Var<S>& b);  // mean(|a - b|)
template <typename S>
Var<S> mean_squared_diff(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> mean_hinge(const Var<S>& x, S sign);  // mean(max(0, 1 + sign*x))
// labels hold one class id per (n, y, x), row-major within a sample.
template <typename S>
Var<S> softmax_cross_entropy(const Var<S>& logits, const std::vector<int>& labels);

template <typename S>
Tensor<S> softmax_channels(const Tensor<S>& logits);

}  // namespace reenact::nn
