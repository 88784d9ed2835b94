#pragma once

// Forward and reverse-mode passes for the layer primitives. All functions are
// pure: inputs are never modified, and everything a backward pass needs is
// returned from the forward call as an explicit cache.

#include <cstdint>
#include <vector>

#include "egc/tensor.hpp"

namespace egc {

enum class Padding { Valid, Same };

// Resolved padding for one spatial pass. "Same" splits odd totals as
// (floor, ceil) on (top/left, bottom/right).
struct PadPlan {
  int top = 0, bottom = 0, left = 0, right = 0;
  int out_h = 0, out_w = 0;
};

PadPlan plan_padding(int in_h, int in_w, int kernel_h, int kernel_w, int stride, Padding padding);

// Counts scalar multiplications performed by a convolution. When passed to a
// convolution the direct-loop kernel runs instead of the GEMM path.
struct MultiplyCounter {
  std::uint64_t count = 0;
};

// ---- standard convolution ------------------------------------------------

// input [N,M,H,W], kernels [F,M,D,D], bias [F].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                      int stride, Padding padding, MultiplyCounter* counter = nullptr);

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> kernels;
  BasicTensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride, Padding padding,
                             const BasicTensor<T>& grad_out);

// ---- depthwise / pointwise / separable -----------------------------------

// input [N,M,H,W], kernels [M,D,D]; one kernel per channel, no bias.
template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride,
                                Padding padding, MultiplyCounter* counter = nullptr);

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride,
                                       Padding padding, const BasicTensor<T>& grad_out);

// input [N,M,H,W], kernels [F,M], bias [F]. A stride > 1 samples every
// stride-th pixel starting at (0, 0).
template <typename T>
BasicTensor<T> pointwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                                const BasicTensor<T>& bias, int stride = 1, MultiplyCounter* counter = nullptr);

template <typename T>
ConvGrads<T> pointwise_conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride,
                                       const BasicTensor<T>& grad_out);

struct SeparableConvSpec {
  int kernel_extent = 3;  // D
  int in_channels = 1;    // M
  int out_channels = 1;   // N
  int stride = 1;
  Padding padding = Padding::Same;

  void validate() const;
};

// pointwise_conv2d(depthwise_conv2d(input)).
template <typename T>
BasicTensor<T> separable_conv2d(const BasicTensor<T>& input, const SeparableConvSpec& spec,
                                const BasicTensor<T>& depthwise_kernels, const BasicTensor<T>& pointwise_kernels,
                                const BasicTensor<T>& bias, MultiplyCounter* counter = nullptr);

enum class ConvKind { Standard, Separable };

// Standard: D^2*M*N*H*W. Separable: D^2*M*H*W + M*N*H*W.
std::uint64_t multiply_count(ConvKind kind, const SeparableConvSpec& spec, int out_h, int out_w);

// ---- batch normalization -------------------------------------------------

enum class Phase { Train, Infer };

template <typename T>
struct BatchNormState {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  T epsilon = T(1e-3);
  T momentum = T(0.99);

  static BatchNormState neutral(int channels);
  int channels() const { return gamma.empty() ? 0 : gamma.dim(0); }
  void validate() const;
};

template <typename T>
struct BatchNormCache {
  Phase phase = Phase::Infer;
  BasicTensor<T> normalized;    // x_hat
  std::vector<T> inv_std;       // per channel
};

template <typename T>
struct BatchNormResult {
  BasicTensor<T> output;
  BatchNormCache<T> cache;
  // Running statistics after this call; equal to the inputs in Infer phase.
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

// Train: normalize with biased batch statistics over (N,H,W) and blend them
// into the running statistics as running = momentum*running + (1-momentum)*batch.
template <typename T>
BatchNormResult<T> batchnorm(const BasicTensor<T>& input, const BatchNormState<T>& state, Phase phase);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& grad_out);

// ---- activations, pooling, dense -----------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Gradient is zero where input <= 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

template <typename T>
struct MaxPoolResult {
  BasicTensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output cell
};

// Padded cells never win. Ties resolve to the first maximum in row-major order.
template <typename T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, int window, int stride, Padding padding = Padding::Valid);

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                  const BasicTensor<T>& grad_out);

// [N,C,H,W] -> [N,C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& grad_out);

// input [N,K], weights [K,P], bias [P].
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias);

template <typename T>
ConvGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                            const BasicTensor<T>& grad_out);

// Row-wise, max-subtracted. logits [N,K].
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// Vector-Jacobian product given the softmax output.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> residual_add(const BasicTensor<T>& main, const BasicTensor<T>& shortcut);

}  // namespace egc
