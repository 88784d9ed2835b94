#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "egc/layers.hpp"
#include "egc/rng.hpp"

namespace egc {

enum class LayerKind {
  Conv2d,
  SeparableConv2d,
  PointwiseConv2d,
  BatchNorm,
  Relu,
  MaxPool,
  GlobalAvgPool,
  Dense,
  Softmax,
  Residual,
  Sequential,
};

std::string_view to_string(LayerKind kind);

// One entry of a network description. Only the fields relevant to `kind` are read:
// filters/kernel/stride/padding for convolutions and pooling (kernel doubles as
// the pooling window), filters for dense, main/shortcut for residual blocks.
struct LayerDesc {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  Padding padding = Padding::Valid;
  std::vector<LayerDesc> main;
  std::vector<LayerDesc> shortcut;  // empty = identity
};

struct NetworkSpec {
  std::string name;
  int class_count = 0;
  Shape input_shape;  // C,H,W of one sample
  std::vector<LayerDesc> layers;

  // Walks the layer table for a batch of one and returns the output shape.
  // Throws ShapeError when consecutive layers do not chain or the last layer
  // is not a softmax over class_count.
  Shape validate() const;
};

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, BasicTensor<T>>>;

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const noexcept { return name_; }
  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  // Records whatever backward() needs. Train phase also updates batch-norm
  // running statistics.
  virtual BasicTensor<T> forward(const BasicTensor<T>& input, Phase phase) = 0;
  // Inference without caching; safe to call concurrently.
  virtual BasicTensor<T> infer(const BasicTensor<T>& input) const = 0;
  // Valid only after forward(); accumulates into parameter gradients.
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;

  virtual void collect_params(std::vector<Param<T>*>&) {}
  // Trainable values plus non-trainable buffers, in a fixed order.
  virtual void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>&) {}

 private:
  std::string name_;
};

// Output shape of one described layer for a given [N,C,H,W] or [N,K] input.
Shape layer_output_shape(const LayerDesc& desc, const Shape& input);

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerDesc& desc, const Shape& input_shape, Rng& rng,
                                     const std::string& prefix = {});

template <typename T>
class Sequential final : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& at(std::size_t i) const { return *layers_.at(i); }

  LayerKind kind() const override { return LayerKind::Sequential; }
  Shape output_shape(const Shape& input) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input, Phase phase) override;
  BasicTensor<T> infer(const BasicTensor<T>& input) const override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  // Backward starting below the last `skip` layers.
  BasicTensor<T> backward_from(const BasicTensor<T>& grad, std::size_t skip);
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_state(std::vector<std::pair<std::string, BasicTensor<T>*>>& out) override;

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// A built network: the description plus initialized parameters. Forward
// returns class probabilities of shape [N, class_count].
template <typename T>
class Network {
 public:
  // Glorot-uniform kernels from `rng`, zero biases, neutral batch norm.
  Network(NetworkSpec spec, Rng& rng);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }
  int class_count() const noexcept { return spec_.class_count; }

  BasicTensor<T> forward(const BasicTensor<T>& input, Phase phase);
  BasicTensor<T> predict(const BasicTensor<T>& input) const;
  // Gradient with respect to the output probabilities.
  BasicTensor<T> backward(const BasicTensor<T>& grad_probs);
  // Gradient with respect to the pre-softmax logits (skips the softmax layer).
  BasicTensor<T> backward_from_logits(const BasicTensor<T>& grad_logits);

  std::vector<Param<T>*> params();
  void zero_grad();
  std::size_t parameter_count() const;

  NamedTensors<T> export_state() const;
  // Throws SchemaError on a missing, extra or mis-shaped tensor.
  void import_state(const NamedTensors<T>& tensors);

  Sequential<T>& body() noexcept { return *body_; }
  const Sequential<T>& body() const noexcept { return *body_; }

 private:
  NetworkSpec spec_;
  std::unique_ptr<Sequential<T>> body_;
};

// Copies every parameter and buffer across scalar types.
template <typename To, typename From>
void copy_state(const Network<From>& from, Network<To>& to) {
  NamedTensors<To> converted;
  for (const auto& [name, t] : from.export_state()) converted.emplace_back(name, t.template cast<To>());
  to.import_state(converted);
}

}  // namespace egc
