#include "egc/network.hpp"

#include <cmath>
#include <map>

namespace egc {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::SeparableConv2d: return "separable_conv2d";
    case LayerKind::PointwiseConv2d: return "pointwise_conv2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool2d";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Residual: return "residual";
    case LayerKind::Sequential: return "sequential";
  }
  return "unknown";
}

namespace {

[[noreturn]] void chain_error(const LayerDesc& d, const std::string& why) {
  throw ShapeError("layer '" + d.name + "' (" + std::string(to_string(d.kind)) + "): " + why);
}

void require_rank(const LayerDesc& d, const Shape& s, int rank) {
  if (s.rank() != rank)
    chain_error(d, "expects rank " + std::to_string(rank) + " input, got " + s.str());
}

Shape chain(const std::vector<LayerDesc>& layers, Shape shape) {
  for (const auto& d : layers) shape = layer_output_shape(d, shape);
  return shape;
}

}  // namespace

Shape layer_output_shape(const LayerDesc& d, const Shape& in) {
  switch (d.kind) {
    case LayerKind::Conv2d:
    case LayerKind::SeparableConv2d:
    case LayerKind::MaxPool: {
      require_rank(d, in, 4);
      if (d.kind != LayerKind::MaxPool && d.filters < 1) chain_error(d, "filters must be >= 1");
      PadPlan p;
      try {
        p = plan_padding(in[2], in[3], d.kernel, d.kernel, d.stride, d.padding);
      } catch (const ShapeError& e) {
        chain_error(d, e.what());
      }
      return Shape{in[0], d.kind == LayerKind::MaxPool ? in[1] : d.filters, p.out_h, p.out_w};
    }
    case LayerKind::PointwiseConv2d:
      require_rank(d, in, 4);
      if (d.filters < 1 || d.stride < 1) chain_error(d, "filters and stride must be >= 1");
      return Shape{in[0], d.filters, (in[2] + d.stride - 1) / d.stride, (in[3] + d.stride - 1) / d.stride};
    case LayerKind::BatchNorm:
      require_rank(d, in, 4);
      return in;
    case LayerKind::Relu:
      return in;
    case LayerKind::GlobalAvgPool:
      require_rank(d, in, 4);
      return Shape{in[0], in[1]};
    case LayerKind::Dense:
      require_rank(d, in, 2);
      if (d.filters < 1) chain_error(d, "units must be >= 1");
      return Shape{in[0], d.filters};
    case LayerKind::Softmax:
      require_rank(d, in, 2);
      return in;
    case LayerKind::Residual:
    case LayerKind::Sequential: {
      const Shape main = chain(d.main, in);
      const Shape shortcut = chain(d.shortcut, in);
      if (d.kind == LayerKind::Residual && !(main == shortcut))
        chain_error(d, "main branch " + main.str() + " and shortcut " + shortcut.str() + " differ");
      return main;
    }
  }
  chain_error(d, "unknown layer kind");
}

Shape NetworkSpec::validate() const {
  if (input_shape.rank() != 3) throw ShapeError("network '" + name + "': input shape must be C,H,W");
  if (layers.empty() || layers.back().kind != LayerKind::Softmax)
    throw ShapeError("network '" + name + "': last layer must be softmax");
  const Shape out = chain(layers, Shape{1, input_shape[0], input_shape[1], input_shape[2]});
  if (!(out == Shape{1, class_count}))
    throw ShapeError("network '" + name + "': output " + out.str() + " is not a softmax over " +
                     std::to_string(class_count) + " classes");
  return out;
}

namespace {

template <typename T>
BasicTensor<T> glorot_uniform(const Shape& shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  BasicTensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
Param<T> make_param(std::string name, BasicTensor<T> value) {
  BasicTensor<T> grad(value.shape());
  return Param<T>{std::move(name), std::move(value), std::move(grad)};
}

template <typename T>
void accumulate(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void push_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out, Param<T>& p) {
  out.emplace_back(p.name, &p.value);
}

template <typename T>
class Conv2dLayer final : public Layer<T> {
 public:
  Conv2dLayer(const LayerDesc& d, int in_channels, Rng& rng, const std::string& path)
      : Layer<T>(path), desc_(d) {
    const int fan = d.kernel * d.kernel;
    kernel_ = make_param(path + "/kernel", glorot_uniform<T>(Shape{d.filters, in_channels, d.kernel, d.kernel},
                                                             in_channels * fan, d.filters * fan, rng));
    bias_ = make_param(path + "/bias", BasicTensor<T>(Shape{d.filters}));
  }
  LayerKind kind() const override { return LayerKind::Conv2d; }
  Shape output_shape(const Shape& in) const override { return layer_output_shape(desc_, in); }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    input_ = x;
    return infer(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return conv2d(x, kernel_.value, bias_.value, desc_.stride, desc_.padding);
  }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    auto g = conv2d_backward(input_, kernel_.value, desc_.stride, desc_.padding, gy);
    accumulate(kernel_.grad, g.kernels);
    accumulate(bias_.grad, g.bias);
    return std::move(g.input);
  }
  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&kernel_);
    out.push_back(&bias_);
  }
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override {
    push_state(out, kernel_);
    push_state(out, bias_);
  }

 private:
  LayerDesc desc_;
  Param<T> kernel_, bias_;
  BasicTensor<T> input_;
};

template <typename T>
class SeparableConvLayer final : public Layer<T> {
 public:
  SeparableConvLayer(const LayerDesc& d, int in_channels, Rng& rng, const std::string& path)
      : Layer<T>(path), desc_(d) {
    spec_ = SeparableConvSpec{d.kernel, in_channels, d.filters, d.stride, d.padding};
    const int fan = d.kernel * d.kernel;
    depthwise_ = make_param(path + "/depthwise",
                            glorot_uniform<T>(Shape{in_channels, d.kernel, d.kernel}, fan, fan, rng));
    pointwise_ = make_param(path + "/pointwise",
                            glorot_uniform<T>(Shape{d.filters, in_channels}, in_channels, d.filters, rng));
    bias_ = make_param(path + "/bias", BasicTensor<T>(Shape{d.filters}));
  }
  LayerKind kind() const override { return LayerKind::SeparableConv2d; }
  Shape output_shape(const Shape& in) const override { return layer_output_shape(desc_, in); }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    input_ = x;
    mid_ = depthwise_conv2d(x, depthwise_.value, spec_.stride, spec_.padding);
    return pointwise_conv2d(mid_, pointwise_.value, bias_.value);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return separable_conv2d(x, spec_, depthwise_.value, pointwise_.value, bias_.value);
  }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    auto gp = pointwise_conv2d_backward(mid_, pointwise_.value, 1, gy);
    accumulate(pointwise_.grad, gp.kernels);
    accumulate(bias_.grad, gp.bias);
    auto gd = depthwise_conv2d_backward(input_, depthwise_.value, spec_.stride, spec_.padding, gp.input);
    accumulate(depthwise_.grad, gd.kernels);
    return std::move(gd.input);
  }
  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&depthwise_);
    out.push_back(&pointwise_);
    out.push_back(&bias_);
  }
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override {
    push_state(out, depthwise_);
    push_state(out, pointwise_);
    push_state(out, bias_);
  }

 private:
  LayerDesc desc_;
  SeparableConvSpec spec_;
  Param<T> depthwise_, pointwise_, bias_;
  BasicTensor<T> input_, mid_;
};

template <typename T>
class PointwiseConvLayer final : public Layer<T> {
 public:
  PointwiseConvLayer(const LayerDesc& d, int in_channels, Rng& rng, const std::string& path)
      : Layer<T>(path), desc_(d) {
    kernel_ = make_param(path + "/kernel",
                         glorot_uniform<T>(Shape{d.filters, in_channels}, in_channels, d.filters, rng));
    bias_ = make_param(path + "/bias", BasicTensor<T>(Shape{d.filters}));
  }
  LayerKind kind() const override { return LayerKind::PointwiseConv2d; }
  Shape output_shape(const Shape& in) const override { return layer_output_shape(desc_, in); }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    input_ = x;
    return infer(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return pointwise_conv2d(x, kernel_.value, bias_.value, desc_.stride);
  }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    auto g = pointwise_conv2d_backward(input_, kernel_.value, desc_.stride, gy);
    accumulate(kernel_.grad, g.kernels);
    accumulate(bias_.grad, g.bias);
    return std::move(g.input);
  }
  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&kernel_);
    out.push_back(&bias_);
  }
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override {
    push_state(out, kernel_);
    push_state(out, bias_);
  }

 private:
  LayerDesc desc_;
  Param<T> kernel_, bias_;
  BasicTensor<T> input_;
};

template <typename T>
class BatchNormLayer final : public Layer<T> {
 public:
  BatchNormLayer(int channels, const std::string& path) : Layer<T>(path) {
    auto s = BatchNormState<T>::neutral(channels);
    gamma_ = make_param(path + "/gamma", std::move(s.gamma));
    beta_ = make_param(path + "/beta", std::move(s.beta));
    running_mean_ = std::move(s.running_mean);
    running_var_ = std::move(s.running_var);
  }
  LayerKind kind() const override { return LayerKind::BatchNorm; }
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase phase) override {
    auto r = batchnorm(x, state(), phase);
    cache_ = std::move(r.cache);
    running_mean_ = std::move(r.running_mean);
    running_var_ = std::move(r.running_var);
    return std::move(r.output);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return batchnorm(x, state(), Phase::Infer).output;
  }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    auto g = batchnorm_backward(cache_, gamma_.value, gy);
    accumulate(gamma_.grad, g.gamma);
    accumulate(beta_.grad, g.beta);
    return std::move(g.input);
  }
  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override {
    push_state(out, gamma_);
    push_state(out, beta_);
    out.emplace_back(this->name() + "/running_mean", &running_mean_);
    out.emplace_back(this->name() + "/running_var", &running_var_);
  }

 private:
  BatchNormState<T> state() const {
    BatchNormState<T> s;
    s.gamma = gamma_.value;
    s.beta = beta_.value;
    s.running_mean = running_mean_;
    s.running_var = running_var_;
    return s;
  }

  Param<T> gamma_, beta_;
  BasicTensor<T> running_mean_, running_var_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::Relu; }
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    input_ = x;
    return relu(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return relu(x); }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override { return relu_backward(input_, gy); }

 private:
  BasicTensor<T> input_;
};

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  MaxPoolLayer(const LayerDesc& d, const std::string& path) : Layer<T>(path), desc_(d) {}
  LayerKind kind() const override { return LayerKind::MaxPool; }
  Shape output_shape(const Shape& in) const override { return layer_output_shape(desc_, in); }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    auto r = maxpool2d(x, desc_.kernel, desc_.stride, desc_.padding);
    input_shape_ = x.shape();
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return maxpool2d(x, desc_.kernel, desc_.stride, desc_.padding).output;
  }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    return maxpool2d_backward(input_shape_, argmax_, gy);
  }

 private:
  LayerDesc desc_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class GlobalAvgPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::GlobalAvgPool; }
  Shape output_shape(const Shape& in) const override { return Shape{in[0], in[1]}; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    input_shape_ = x.shape();
    return global_avg_pool(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return global_avg_pool(x); }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    return global_avg_pool_backward(input_shape_, gy);
  }

 private:
  Shape input_shape_;
};

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(const LayerDesc& d, int in_units, Rng& rng, const std::string& path) : Layer<T>(path) {
    weights_ = make_param(path + "/weights",
                          glorot_uniform<T>(Shape{in_units, d.filters}, in_units, d.filters, rng));
    bias_ = make_param(path + "/bias", BasicTensor<T>(Shape{d.filters}));
  }
  LayerKind kind() const override { return LayerKind::Dense; }
  Shape output_shape(const Shape& in) const override { return Shape{in[0], weights_.value.dim(1)}; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    input_ = x;
    return infer(x);
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return dense(x, weights_.value, bias_.value); }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    auto g = dense_backward(input_, weights_.value, gy);
    accumulate(weights_.grad, g.kernels);
    accumulate(bias_.grad, g.bias);
    return std::move(g.input);
  }
  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&weights_);
    out.push_back(&bias_);
  }
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override {
    push_state(out, weights_);
    push_state(out, bias_);
  }

 private:
  Param<T> weights_, bias_;
  BasicTensor<T> input_;
};

template <typename T>
class SoftmaxLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::Softmax; }
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase) override {
    output_ = softmax(x);
    return output_;
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override { return softmax(x); }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override { return softmax_backward(output_, gy); }

 private:
  BasicTensor<T> output_;
};

template <typename T>
std::unique_ptr<Sequential<T>> build_sequence(const std::vector<LayerDesc>& descs, Shape shape, Rng& rng,
                                              const std::string& path) {
  auto seq = std::make_unique<Sequential<T>>(path);
  for (const auto& d : descs) {
    seq->add(make_layer<T>(d, shape, rng, path.empty() ? std::string() : path + "/"));
    shape = layer_output_shape(d, shape);
  }
  return seq;
}

template <typename T>
class ResidualLayer final : public Layer<T> {
 public:
  ResidualLayer(const LayerDesc& d, const Shape& in, Rng& rng, const std::string& path)
      : Layer<T>(path), desc_(d) {
    layer_output_shape(d, in);
    main_ = build_sequence<T>(d.main, in, rng, path);
    shortcut_ = build_sequence<T>(d.shortcut, in, rng, path);
  }
  LayerKind kind() const override { return LayerKind::Residual; }
  Shape output_shape(const Shape& in) const override { return layer_output_shape(desc_, in); }
  BasicTensor<T> forward(const BasicTensor<T>& x, Phase phase) override {
    return residual_add(main_->forward(x, phase), shortcut_->forward(x, phase));
  }
  BasicTensor<T> infer(const BasicTensor<T>& x) const override {
    return residual_add(main_->infer(x), shortcut_->infer(x));
  }
  BasicTensor<T> backward(const BasicTensor<T>& gy) override {
    return elementwise_add(main_->backward(gy), shortcut_->backward(gy));
  }
  void collect_params(std::vector<Param<T>*>& out) override {
    main_->collect_params(out);
    shortcut_->collect_params(out);
  }
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override {
    main_->collect_state(out);
    shortcut_->collect_state(out);
  }

 private:
  LayerDesc desc_;
  std::unique_ptr<Sequential<T>> main_, shortcut_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerDesc& d, const Shape& in, Rng& rng, const std::string& prefix) {
  layer_output_shape(d, in);
  const std::string path = prefix + d.name;
  switch (d.kind) {
    case LayerKind::Conv2d: return std::make_unique<Conv2dLayer<T>>(d, in[1], rng, path);
    case LayerKind::SeparableConv2d: return std::make_unique<SeparableConvLayer<T>>(d, in[1], rng, path);
    case LayerKind::PointwiseConv2d: return std::make_unique<PointwiseConvLayer<T>>(d, in[1], rng, path);
    case LayerKind::BatchNorm: return std::make_unique<BatchNormLayer<T>>(in[1], path);
    case LayerKind::Relu: return std::make_unique<ReluLayer<T>>(path);
    case LayerKind::MaxPool: return std::make_unique<MaxPoolLayer<T>>(d, path);
    case LayerKind::GlobalAvgPool: return std::make_unique<GlobalAvgPoolLayer<T>>(path);
    case LayerKind::Dense: return std::make_unique<DenseLayer<T>>(d, in[1], rng, path);
    case LayerKind::Softmax: return std::make_unique<SoftmaxLayer<T>>(path);
    case LayerKind::Residual: return std::make_unique<ResidualLayer<T>>(d, in, rng, path);
    case LayerKind::Sequential: return build_sequence<T>(d.main, in, rng, path);
  }
  throw ConfigError("unknown layer kind for '" + d.name + "'");
}

// ---- Sequential ----------------------------------------------------------

template <typename T>
Shape Sequential<T>::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& input, Phase phase) {
  BasicTensor<T> x = input;
  for (auto& l : layers_) x = l->forward(x, phase);
  return x;
}

template <typename T>
BasicTensor<T> Sequential<T>::infer(const BasicTensor<T>& input) const {
  BasicTensor<T> x = input;
  for (const auto& l : layers_) x = l->infer(x);
  return x;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const BasicTensor<T>& grad_out) {
  return backward_from(grad_out, 0);
}

template <typename T>
BasicTensor<T> Sequential<T>::backward_from(const BasicTensor<T>& grad, std::size_t skip) {
  BasicTensor<T> g = grad;
  for (std::size_t i = layers_.size() - std::min(skip, layers_.size()); i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_params(std::vector<Param<T>*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

template <typename T>
void Sequential<T>::collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) {
  for (auto& l : layers_) l->collect_state(out);
}

// ---- Network -------------------------------------------------------------

template <typename T>
Network<T>::Network(NetworkSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  const Shape in{1, spec_.input_shape[0], spec_.input_shape[1], spec_.input_shape[2]};
  body_ = build_sequence<T>(spec_.layers, in, rng, spec_.name);
}

namespace {

void check_input(const NetworkSpec& spec, const Shape& s) {
  if (s.rank() != 4 || s[1] != spec.input_shape[0] || s[2] != spec.input_shape[1] || s[3] != spec.input_shape[2])
    throw ShapeError("network '" + spec.name + "' expects [N," + std::to_string(spec.input_shape[0]) + "," +
                     std::to_string(spec.input_shape[1]) + "," + std::to_string(spec.input_shape[2]) +
                     "] input, got " + s.str());
}

}  // namespace

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& input, Phase phase) {
  check_input(spec_, input.shape());
  return body_->forward(input, phase);
}

template <typename T>
BasicTensor<T> Network<T>::predict(const BasicTensor<T>& input) const {
  check_input(spec_, input.shape());
  return body_->infer(input);
}

template <typename T>
BasicTensor<T> Network<T>::backward(const BasicTensor<T>& grad_probs) {
  return body_->backward(grad_probs);
}

template <typename T>
BasicTensor<T> Network<T>::backward_from_logits(const BasicTensor<T>& grad_logits) {
  return body_->backward_from(grad_logits, 1);
}

template <typename T>
std::vector<Param<T>*> Network<T>::params() {
  std::vector<Param<T>*> out;
  body_->collect_params(out);
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : params()) p->grad.fill(T{});
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<Network*>(this)->params()) n += p->value.size();
  return n;
}

template <typename T>
NamedTensors<T> Network<T>::export_state() const {
  std::vector<std::pair<std::string, BasicTensor<T>*>> refs;
  body_->collect_state(refs);
  NamedTensors<T> out;
  out.reserve(refs.size());
  for (auto& [name, t] : refs) out.emplace_back(name, *t);
  return out;
}

template <typename T>
void Network<T>::import_state(const NamedTensors<T>& tensors) {
  std::map<std::string, const BasicTensor<T>*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  std::vector<std::pair<std::string, BasicTensor<T>*>> refs;
  body_->collect_state(refs);
  std::size_t matched = 0;
  for (auto& [name, dst] : refs) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw SchemaError("missing tensor '" + name + "'");
    if (!(it->second->shape() == dst->shape()))
      throw SchemaError("tensor '" + name + "' has shape " + it->second->shape().str() + ", expected " +
                        dst->shape().str());
    *dst = *it->second;
    ++matched;
  }
  if (matched != by_name.size())
    throw SchemaError("network '" + spec_.name + "': " + std::to_string(by_name.size() - matched) +
                      " unexpected tensors");
}

template std::unique_ptr<Layer<float>> make_layer(const LayerDesc&, const Shape&, Rng&, const std::string&);
template std::unique_ptr<Layer<double>> make_layer(const LayerDesc&, const Shape&, Rng&, const std::string&);
template class Sequential<float>;
template class Sequential<double>;
template class Network<float>;
template class Network<double>;

}  // namespace egc
