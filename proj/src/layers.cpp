#include "egc/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace egc {

namespace {

void require_rank(const char* op, const Shape& s, int rank) {
  if (s.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
}

void require_same(const char* op, const Shape& a, const Shape& b) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

void require_bias(const char* op, const Shape& bias, int filters) {
  if (bias.rank() != 1 || bias[0] != filters)
    throw ShapeError(std::string(op) + ": bias " + bias.str() + " does not match " + std::to_string(filters) +
                     " filters");
}

// Geometry shared by im2col / col2im.
struct ConvGeometry {
  int channels, in_h, in_w, kh, kw, stride;
  PadPlan pad;
  int rows() const { return channels * kh * kw; }
  int cols() const { return pad.out_h * pad.out_w; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        T* row = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * cols;
        const T* plane = image + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int oy = 0; oy < g.pad.out_h; ++oy) {
          const int iy = oy * g.stride + i - g.pad.top;
          T* dst = row + oy * g.pad.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill_n(dst, g.pad.out_w, T{});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.pad.out_w; ++ox) {
            const int ix = ox * g.stride + j - g.pad.left;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T{};
          }
        }
      }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        const T* row = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * cols;
        T* plane = image + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int oy = 0; oy < g.pad.out_h; ++oy) {
          const int iy = oy * g.stride + i - g.pad.top;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + oy * g.pad.out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.pad.out_w; ++ox) {
            const int ix = ox * g.stride + j - g.pad.left;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
}

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride, Padding padding,
                           const char* op) {
  require_rank(op, input.shape(), 4);
  require_rank(op, kernels.shape(), 4);
  if (kernels.dim(1) != input.dim(1))
    throw ShapeError(std::string(op) + ": kernels expect " + std::to_string(kernels.dim(1)) + " channels, input has " +
                     std::to_string(input.dim(1)));
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), kernels.dim(2), kernels.dim(3), stride, {}};
  g.pad = plan_padding(g.in_h, g.in_w, g.kh, g.kw, stride, padding);
  return g;
}

template <typename T>
BasicTensor<T> strided_sample(const BasicTensor<T>& input, int stride) {
  if (stride == 1) return input;
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  BasicTensor<T> out(Shape{n, c, oh, ow});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out.at(i, ch, y, x) = input.at(i, ch, y * stride, x * stride);
  return out;
}

}  // namespace

PadPlan plan_padding(int in_h, int in_w, int kernel_h, int kernel_w, int stride, Padding padding) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  if (kernel_h < 1 || kernel_w < 1) throw ShapeError("kernel extent must be >= 1");
  PadPlan plan;
  if (padding == Padding::Valid) {
    if (kernel_h > in_h || kernel_w > in_w)
      throw ShapeError("kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                       " larger than input " + std::to_string(in_h) + "x" + std::to_string(in_w));
    plan.out_h = (in_h - kernel_h) / stride + 1;
    plan.out_w = (in_w - kernel_w) / stride + 1;
    return plan;
  }
  plan.out_h = (in_h + stride - 1) / stride;
  plan.out_w = (in_w + stride - 1) / stride;
  const int total_h = std::max((plan.out_h - 1) * stride + kernel_h - in_h, 0);
  const int total_w = std::max((plan.out_w - 1) * stride + kernel_w - in_w, 0);
  plan.top = total_h / 2;
  plan.bottom = total_h - plan.top;
  plan.left = total_w / 2;
  plan.right = total_w - plan.left;
  return plan;
}

// ---- standard convolution ------------------------------------------------

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                      int stride, Padding padding, MultiplyCounter* counter) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, padding, "conv2d");
  const int filters = kernels.dim(0);
  require_bias("conv2d", bias.shape(), filters);
  const int batch = input.dim(0);
  BasicTensor<T> out(Shape{batch, filters, g.pad.out_h, g.pad.out_w});

  if (counter) {
    const BasicTensor<T> padded = pad_nchw(input, g.pad.top, g.pad.bottom, g.pad.left, g.pad.right);
    std::uint64_t muls = 0;
    for (int n = 0; n < batch; ++n)
      for (int f = 0; f < filters; ++f)
        for (int oy = 0; oy < g.pad.out_h; ++oy)
          for (int ox = 0; ox < g.pad.out_w; ++ox) {
            T acc = bias[f];
            for (int c = 0; c < g.channels; ++c)
              for (int i = 0; i < g.kh; ++i)
                for (int j = 0; j < g.kw; ++j) {
                  acc += padded.at(n, c, oy * stride + i, ox * stride + j) * kernels.at(f, c, i, j);
                  ++muls;
                }
            out.at(n, f, oy, ox) = acc;
          }
    counter->count += muls;
    return out;
  }

  std::vector<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
  const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(filters) * g.cols();
  for (int n = 0; n < batch; ++n) {
    im2col(input.ptr() + n * in_stride, g, col.data());
    T* y = out.ptr() + n * out_stride;
    gemm<T>(false, false, filters, g.cols(), g.rows(), kernels.ptr(), col.data(), y, false);
    for (int f = 0; f < filters; ++f)
      for (int k = 0; k < g.cols(); ++k) y[static_cast<std::size_t>(f) * g.cols() + k] += bias[f];
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride, Padding padding,
                             const BasicTensor<T>& grad_out) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, padding, "conv2d_backward");
  const int filters = kernels.dim(0);
  const int batch = input.dim(0);
  require_same("conv2d_backward", grad_out.shape(), Shape{batch, filters, g.pad.out_h, g.pad.out_w});

  ConvGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(kernels.shape()), BasicTensor<T>(Shape{filters})};
  std::vector<T> col(static_cast<std::size_t>(g.rows()) * g.cols());
  std::vector<T> grad_col(col.size());
  const std::size_t in_stride = static_cast<std::size_t>(g.channels) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(filters) * g.cols();
  for (int n = 0; n < batch; ++n) {
    const T* gy = grad_out.ptr() + n * out_stride;
    im2col(input.ptr() + n * in_stride, g, col.data());
    gemm<T>(false, true, filters, g.rows(), g.cols(), gy, col.data(), grads.kernels.ptr(), true);
    gemm<T>(true, false, g.rows(), g.cols(), filters, kernels.ptr(), gy, grad_col.data(), false);
    col2im(grad_col.data(), g, grads.input.ptr() + n * in_stride);
    for (int f = 0; f < filters; ++f)
      for (int k = 0; k < g.cols(); ++k) grads.bias[f] += gy[static_cast<std::size_t>(f) * g.cols() + k];
  }
  return grads;
}

// ---- depthwise -----------------------------------------------------------

namespace {

template <typename T>
PadPlan depthwise_plan(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride, Padding padding,
                       const char* op) {
  require_rank(op, input.shape(), 4);
  require_rank(op, kernels.shape(), 3);
  if (kernels.dim(0) != input.dim(1))
    throw ShapeError(std::string(op) + ": " + std::to_string(kernels.dim(0)) + " kernels for " +
                     std::to_string(input.dim(1)) + " channels");
  return plan_padding(input.dim(2), input.dim(3), kernels.dim(1), kernels.dim(2), stride, padding);
}

}  // namespace

template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride,
                                Padding padding, MultiplyCounter* counter) {
  const PadPlan plan = depthwise_plan(input, kernels, stride, padding, "depthwise_conv2d");
  const int batch = input.dim(0), channels = input.dim(1);
  const int kh = kernels.dim(1), kw = kernels.dim(2);
  const BasicTensor<T> padded = pad_nchw(input, plan.top, plan.bottom, plan.left, plan.right);
  BasicTensor<T> out(Shape{batch, channels, plan.out_h, plan.out_w});
  std::uint64_t muls = 0;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* k = kernels.ptr() + static_cast<std::size_t>(c) * kh * kw;
      for (int oy = 0; oy < plan.out_h; ++oy)
        for (int ox = 0; ox < plan.out_w; ++ox) {
          T acc{};
          for (int i = 0; i < kh; ++i) {
            const T* row = &padded.at(n, c, oy * stride + i, ox * stride);
            for (int j = 0; j < kw; ++j) acc += row[j] * k[i * kw + j];
          }
          muls += static_cast<std::uint64_t>(kh) * kw;
          out.at(n, c, oy, ox) = acc;
        }
    }
  if (counter) counter->count += muls;
  return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride,
                                       Padding padding, const BasicTensor<T>& grad_out) {
  const PadPlan plan = depthwise_plan(input, kernels, stride, padding, "depthwise_conv2d_backward");
  const int batch = input.dim(0), channels = input.dim(1);
  const int kh = kernels.dim(1), kw = kernels.dim(2);
  require_same("depthwise_conv2d_backward", grad_out.shape(), Shape{batch, channels, plan.out_h, plan.out_w});
  const BasicTensor<T> padded = pad_nchw(input, plan.top, plan.bottom, plan.left, plan.right);
  BasicTensor<T> grad_padded(padded.shape());
  ConvGrads<T> grads;
  grads.kernels = BasicTensor<T>(kernels.shape());
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* k = kernels.ptr() + static_cast<std::size_t>(c) * kh * kw;
      T* gk = grads.kernels.ptr() + static_cast<std::size_t>(c) * kh * kw;
      for (int oy = 0; oy < plan.out_h; ++oy)
        for (int ox = 0; ox < plan.out_w; ++ox) {
          const T g = grad_out.at(n, c, oy, ox);
          for (int i = 0; i < kh; ++i) {
            const T* row = &padded.at(n, c, oy * stride + i, ox * stride);
            T* grow = &grad_padded.at(n, c, oy * stride + i, ox * stride);
            for (int j = 0; j < kw; ++j) {
              gk[i * kw + j] += g * row[j];
              grow[j] += g * k[i * kw + j];
            }
          }
        }
    }
  grads.input = BasicTensor<T>(input.shape());
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < input.dim(2); ++y)
        std::copy_n(&grad_padded.at(n, c, y + plan.top, plan.left), input.dim(3), &grads.input.at(n, c, y, 0));
  return grads;
}

// ---- pointwise -----------------------------------------------------------

template <typename T>
BasicTensor<T> pointwise_conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                                const BasicTensor<T>& bias, int stride, MultiplyCounter* counter) {
  require_rank("pointwise_conv2d", input.shape(), 4);
  require_rank("pointwise_conv2d", kernels.shape(), 2);
  if (kernels.dim(1) != input.dim(1))
    throw ShapeError("pointwise_conv2d: kernels expect " + std::to_string(kernels.dim(1)) + " channels, input has " +
                     std::to_string(input.dim(1)));
  if (stride < 1) throw ShapeError("pointwise_conv2d: stride must be >= 1");
  const int filters = kernels.dim(0), channels = input.dim(1);
  require_bias("pointwise_conv2d", bias.shape(), filters);
  const BasicTensor<T> x = strided_sample(input, stride);
  const int batch = x.dim(0), pixels = x.dim(2) * x.dim(3);
  BasicTensor<T> out(Shape{batch, filters, x.dim(2), x.dim(3)});
  const std::size_t in_stride = static_cast<std::size_t>(channels) * pixels;
  const std::size_t out_stride = static_cast<std::size_t>(filters) * pixels;

  if (counter) {
    std::uint64_t muls = 0;
    for (int n = 0; n < batch; ++n)
      for (int f = 0; f < filters; ++f)
        for (int p = 0; p < pixels; ++p) {
          T acc = bias[f];
          for (int c = 0; c < channels; ++c) {
            acc += x[n * in_stride + static_cast<std::size_t>(c) * pixels + p] * kernels.at(f, c);
            ++muls;
          }
          out[n * out_stride + static_cast<std::size_t>(f) * pixels + p] = acc;
        }
    counter->count += muls;
    return out;
  }

  for (int n = 0; n < batch; ++n) {
    T* y = out.ptr() + n * out_stride;
    gemm<T>(false, false, filters, pixels, channels, kernels.ptr(), x.ptr() + n * in_stride, y, false);
    for (int f = 0; f < filters; ++f)
      for (int p = 0; p < pixels; ++p) y[static_cast<std::size_t>(f) * pixels + p] += bias[f];
  }
  return out;
}

template <typename T>
ConvGrads<T> pointwise_conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, int stride,
                                       const BasicTensor<T>& grad_out) {
  require_rank("pointwise_conv2d_backward", input.shape(), 4);
  const int filters = kernels.dim(0), channels = input.dim(1);
  const BasicTensor<T> x = strided_sample(input, stride);
  const int batch = x.dim(0), pixels = x.dim(2) * x.dim(3);
  require_same("pointwise_conv2d_backward", grad_out.shape(), Shape{batch, filters, x.dim(2), x.dim(3)});

  ConvGrads<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(kernels.shape()), BasicTensor<T>(Shape{filters})};
  BasicTensor<T> grad_x(x.shape());
  const std::size_t in_stride = static_cast<std::size_t>(channels) * pixels;
  const std::size_t out_stride = static_cast<std::size_t>(filters) * pixels;
  for (int n = 0; n < batch; ++n) {
    const T* gy = grad_out.ptr() + n * out_stride;
    gemm<T>(false, true, filters, channels, pixels, gy, x.ptr() + n * in_stride, grads.kernels.ptr(), true);
    gemm<T>(true, false, channels, pixels, filters, kernels.ptr(), gy, grad_x.ptr() + n * in_stride, false);
    for (int f = 0; f < filters; ++f)
      for (int p = 0; p < pixels; ++p) grads.bias[f] += gy[static_cast<std::size_t>(f) * pixels + p];
  }
  if (stride == 1) {
    grads.input = std::move(grad_x);
  } else {
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < x.dim(2); ++y)
          for (int xx = 0; xx < x.dim(3); ++xx)
            grads.input.at(n, c, y * stride, xx * stride) = grad_x.at(n, c, y, xx);
  }
  return grads;
}

// ---- separable -----------------------------------------------------------

void SeparableConvSpec::validate() const {
  if (kernel_extent < 1 || in_channels < 1 || out_channels < 1 || stride < 1)
    throw ConfigError("separable conv spec: D, M, N and stride must all be >= 1");
}

template <typename T>
BasicTensor<T> separable_conv2d(const BasicTensor<T>& input, const SeparableConvSpec& spec,
                                const BasicTensor<T>& depthwise_kernels, const BasicTensor<T>& pointwise_kernels,
                                const BasicTensor<T>& bias, MultiplyCounter* counter) {
  spec.validate();
  require_same("separable_conv2d", depthwise_kernels.shape(),
               Shape{spec.in_channels, spec.kernel_extent, spec.kernel_extent});
  require_same("separable_conv2d", pointwise_kernels.shape(), Shape{spec.out_channels, spec.in_channels});
  const BasicTensor<T> spatial = depthwise_conv2d(input, depthwise_kernels, spec.stride, spec.padding, counter);
  return pointwise_conv2d(spatial, pointwise_kernels, bias, 1, counter);
}

std::uint64_t multiply_count(ConvKind kind, const SeparableConvSpec& spec, int out_h, int out_w) {
  const std::uint64_t d2 = static_cast<std::uint64_t>(spec.kernel_extent) * spec.kernel_extent;
  const std::uint64_t m = spec.in_channels, n = spec.out_channels;
  const std::uint64_t pixels = static_cast<std::uint64_t>(out_h) * out_w;
  if (kind == ConvKind::Standard) return d2 * m * n * pixels;
  return d2 * m * pixels + m * n * pixels;
}

// ---- batch normalization -------------------------------------------------

template <typename T>
BatchNormState<T> BatchNormState<T>::neutral(int channels) {
  BatchNormState s;
  s.gamma = BasicTensor<T>(Shape{channels}, T(1));
  s.beta = BasicTensor<T>(Shape{channels}, T(0));
  s.running_mean = BasicTensor<T>(Shape{channels}, T(0));
  s.running_var = BasicTensor<T>(Shape{channels}, T(1));
  return s;
}

template <typename T>
void BatchNormState<T>::validate() const {
  const Shape expected{channels()};
  if (gamma.rank() != 1 || !(beta.shape() == expected) || !(running_mean.shape() == expected) ||
      !(running_var.shape() == expected))
    throw ShapeError("batchnorm state: per-channel vectors disagree");
  if (!(epsilon >= T(0))) throw ConfigError("batchnorm state: epsilon must be non-negative");
  if (!(momentum > T(0) && momentum < T(1))) throw ConfigError("batchnorm state: momentum must be in (0, 1)");
  for (T v : running_var.data())
    if (v < T(0)) throw ConfigError("batchnorm state: negative running variance");
}

template <typename T>
BatchNormResult<T> batchnorm(const BasicTensor<T>& input, const BatchNormState<T>& state, Phase phase) {
  require_rank("batchnorm", input.shape(), 4);
  state.validate();
  const int batch = input.dim(0), channels = input.dim(1);
  if (channels != state.channels())
    throw ShapeError("batchnorm: input has " + std::to_string(channels) + " channels, state has " +
                     std::to_string(state.channels()));
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  const double count = static_cast<double>(batch) * static_cast<double>(plane);

  BatchNormResult<T> r{BasicTensor<T>(input.shape()), {}, state.running_mean, state.running_var};
  r.cache.phase = phase;
  r.cache.normalized = BasicTensor<T>(input.shape());
  r.cache.inv_std.resize(channels);

  for (int c = 0; c < channels; ++c) {
    T mean, var;
    if (phase == Phase::Train) {
      T acc{};
      for (int n = 0; n < batch; ++n) {
        const T* x = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) acc += x[i];
      }
      mean = acc / static_cast<T>(count);
      T sq{};
      for (int n = 0; n < batch; ++n) {
        const T* x = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (x[i] - mean) * (x[i] - mean);
      }
      var = sq / static_cast<T>(count);
      r.running_mean[c] = state.momentum * state.running_mean[c] + (T(1) - state.momentum) * mean;
      r.running_var[c] = state.momentum * state.running_var[c] + (T(1) - state.momentum) * var;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const T inv = T(1) / std::sqrt(var + state.epsilon);
    r.cache.inv_std[c] = inv;
    const T g = state.gamma[c], b = state.beta[c];
    for (int n = 0; n < batch; ++n) {
      const T* x = &input.at(n, c, 0, 0);
      T* xh = &r.cache.normalized.at(n, c, 0, 0);
      T* y = &r.output.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (x[i] - mean) * inv;
        y[i] = g * xh[i] + b;
      }
    }
  }
  return r;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& grad_out) {
  const BasicTensor<T>& xh = cache.normalized;
  require_same("batchnorm_backward", grad_out.shape(), xh.shape());
  const int batch = xh.dim(0), channels = xh.dim(1);
  const std::size_t plane = static_cast<std::size_t>(xh.dim(2)) * xh.dim(3);
  const T count = static_cast<T>(batch) * static_cast<T>(plane);
  BatchNormGrads<T> g{BasicTensor<T>(xh.shape()), BasicTensor<T>(Shape{channels}), BasicTensor<T>(Shape{channels})};
  for (int c = 0; c < channels; ++c) {
    T sum_gy{}, sum_gy_xh{};
    for (int n = 0; n < batch; ++n) {
      const T* gy = &grad_out.at(n, c, 0, 0);
      const T* x = &xh.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_gy += gy[i];
        sum_gy_xh += gy[i] * x[i];
      }
    }
    g.gamma[c] = sum_gy_xh;
    g.beta[c] = sum_gy;
    const T k = gamma[c] * cache.inv_std[c];
    for (int n = 0; n < batch; ++n) {
      const T* gy = &grad_out.at(n, c, 0, 0);
      const T* x = &xh.at(n, c, 0, 0);
      T* gx = &g.input.at(n, c, 0, 0);
      if (cache.phase == Phase::Train) {
        for (std::size_t i = 0; i < plane; ++i)
          gx[i] = k * (gy[i] - sum_gy / count - x[i] * sum_gy_xh / count);
      } else {
        for (std::size_t i = 0; i < plane; ++i) gx[i] = k * gy[i];
      }
    }
  }
  return g;
}

// ---- activations ---------------------------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  require_same("relu_backward", input.shape(), grad_out.shape());
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

// ---- pooling -------------------------------------------------------------

template <typename T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, int window, int stride, Padding padding) {
  require_rank("maxpool2d", input.shape(), 4);
  const int batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const PadPlan plan = plan_padding(h, w, window, window, stride, padding);
  MaxPoolResult<T> r{BasicTensor<T>(Shape{batch, channels, plan.out_h, plan.out_w}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int oy = 0; oy < plan.out_h; ++oy)
        for (int ox = 0; ox < plan.out_w; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          bool found = false;
          for (int i = 0; i < window; ++i) {
            const int iy = oy * stride + i - plan.top;
            if (iy < 0 || iy >= h) continue;
            for (int j = 0; j < window; ++j) {
              const int ix = ox * stride + j - plan.left;
              if (ix < 0 || ix >= w) continue;
              const std::size_t idx = input.offset(n, c, iy, ix);
              if (!found || input[idx] > best) {
                best = input[idx];
                best_idx = idx;
                found = true;
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = best_idx;
        }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                  const BasicTensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2d_backward: cache does not match grad_out");
  BasicTensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_out[i];
  return grad;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  require_rank("global_avg_pool", input.shape(), 4);
  const int batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  BasicTensor<T> out(Shape{batch, channels});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* x = &input.at(n, c, 0, 0);
      T acc{};
      for (std::size_t i = 0; i < plane; ++i) acc += x[i];
      out.at(n, c) = acc / static_cast<T>(plane);
    }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& grad_out) {
  require_rank("global_avg_pool_backward", input_shape, 4);
  require_same("global_avg_pool_backward", grad_out.shape(), Shape{input_shape[0], input_shape[1]});
  const std::size_t plane = static_cast<std::size_t>(input_shape[2]) * input_shape[3];
  BasicTensor<T> grad(input_shape);
  for (int n = 0; n < input_shape[0]; ++n)
    for (int c = 0; c < input_shape[1]; ++c) {
      const T g = grad_out.at(n, c) / static_cast<T>(plane);
      std::fill_n(&grad.at(n, c, 0, 0), plane, g);
    }
  return grad;
}

// ---- dense / softmax -----------------------------------------------------

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
  require_rank("dense", input.shape(), 2);
  require_rank("dense", weights.shape(), 2);
  require_bias("dense", bias.shape(), weights.dim(1));
  BasicTensor<T> out = matmul(input, weights);
  for (int n = 0; n < out.dim(0); ++n)
    for (int p = 0; p < out.dim(1); ++p) out.at(n, p) += bias[p];
  return out;
}

template <typename T>
ConvGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                            const BasicTensor<T>& grad_out) {
  require_same("dense_backward", grad_out.shape(), Shape{input.dim(0), weights.dim(1)});
  const int n = input.dim(0), k = input.dim(1), p = weights.dim(1);
  ConvGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), BasicTensor<T>(Shape{p})};
  gemm<T>(false, true, n, k, p, grad_out.ptr(), weights.ptr(), g.input.ptr(), false);
  gemm<T>(true, false, k, p, n, input.ptr(), grad_out.ptr(), g.kernels.ptr(), false);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < p; ++c) g.bias[c] += grad_out.at(r, c);
  return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank("softmax", logits.shape(), 2);
  BasicTensor<T> out(logits.shape());
  const int rows = logits.dim(0), k = logits.dim(1);
  for (int r = 0; r < rows; ++r) {
    T peak = logits.at(r, 0);
    for (int j = 1; j < k; ++j) peak = std::max(peak, logits.at(r, j));
    T total{};
    for (int j = 0; j < k; ++j) {
      out.at(r, j) = std::exp(logits.at(r, j) - peak);
      total += out.at(r, j);
    }
    for (int j = 0; j < k; ++j) out.at(r, j) /= total;
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_out) {
  require_same("softmax_backward", probs.shape(), grad_out.shape());
  BasicTensor<T> grad(probs.shape());
  for (int r = 0; r < probs.dim(0); ++r) {
    T dot{};
    for (int j = 0; j < probs.dim(1); ++j) dot += probs.at(r, j) * grad_out.at(r, j);
    for (int j = 0; j < probs.dim(1); ++j) grad.at(r, j) = probs.at(r, j) * (grad_out.at(r, j) - dot);
  }
  return grad;
}

template <typename T>
BasicTensor<T> residual_add(const BasicTensor<T>& main, const BasicTensor<T>& shortcut) {
  return elementwise_add(main, shortcut);
}

#define EGC_INSTANTIATE(T)                                                                                          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, Padding, \
                                 MultiplyCounter*);                                                                 \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, Padding,                 \
                                        const BasicTensor<T>&);                                                     \
  template BasicTensor<T> depthwise_conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int, Padding,              \
                                           MultiplyCounter*);                                                       \
  template ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, Padding,       \
                                                  const BasicTensor<T>&);                                           \
  template BasicTensor<T> pointwise_conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, \
                                           MultiplyCounter*);                                                       \
  template ConvGrads<T> pointwise_conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int,                \
                                                  const BasicTensor<T>&);                                           \
  template BasicTensor<T> separable_conv2d(const BasicTensor<T>&, const SeparableConvSpec&, const BasicTensor<T>&,  \
                                           const BasicTensor<T>&, const BasicTensor<T>&, MultiplyCounter*);         \
  template struct BatchNormState<T>;                                                                                \
  template BatchNormResult<T> batchnorm(const BasicTensor<T>&, const BatchNormState<T>&, Phase);                    \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&, const BasicTensor<T>&,                    \
                                                const BasicTensor<T>&);                                             \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                              \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                              \
  template MaxPoolResult<T> maxpool2d(const BasicTensor<T>&, int, int, Padding);                                    \
  template BasicTensor<T> maxpool2d_backward(const Shape&, const std::vector<std::size_t>&, const BasicTensor<T>&); \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> global_avg_pool_backward(const Shape&, const BasicTensor<T>&);                            \
  template BasicTensor<T> dense(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);               \
  template ConvGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> residual_add(const BasicTensor<T>&, const BasicTensor<T>&);

EGC_INSTANTIATE(float)
EGC_INSTANTIATE(double)

#undef EGC_INSTANTIATE

}  // namespace egc
