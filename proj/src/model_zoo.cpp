#include "egc/model_zoo.hpp"

#include <algorithm>

namespace egc {

namespace {

LayerDesc conv(std::string name, int filters, int kernel, Padding padding, int stride = 1) {
  LayerDesc d;
  d.kind = LayerKind::Conv2d;
  d.name = std::move(name);
  d.filters = filters;
  d.kernel = kernel;
  d.stride = stride;
  d.padding = padding;
  return d;
}

LayerDesc sepconv(std::string name, int filters) {
  LayerDesc d = conv(std::move(name), filters, 3, Padding::Same);
  d.kind = LayerKind::SeparableConv2d;
  return d;
}

LayerDesc pointwise(std::string name, int filters, int stride) {
  LayerDesc d;
  d.kind = LayerKind::PointwiseConv2d;
  d.name = std::move(name);
  d.filters = filters;
  d.stride = stride;
  return d;
}

LayerDesc simple(LayerKind kind, std::string name) {
  LayerDesc d;
  d.kind = kind;
  d.name = std::move(name);
  return d;
}

LayerDesc maxpool(std::string name, int window, int stride, Padding padding) {
  LayerDesc d;
  d.kind = LayerKind::MaxPool;
  d.name = std::move(name);
  d.kernel = window;
  d.stride = stride;
  d.padding = padding;
  return d;
}

LayerDesc dense_layer(std::string name, int units) {
  LayerDesc d;
  d.kind = LayerKind::Dense;
  d.name = std::move(name);
  d.filters = units;
  return d;
}

LayerDesc xception_block(std::string name, int filters) {
  LayerDesc d;
  d.kind = LayerKind::Residual;
  d.name = std::move(name);
  d.main = {
      sepconv("sep1", filters),
      simple(LayerKind::BatchNorm, "bn1"),
      simple(LayerKind::Relu, "relu1"),
      sepconv("sep2", filters),
      simple(LayerKind::BatchNorm, "bn2"),
      maxpool("pool", 3, 2, Padding::Same),
  };
  d.shortcut = {
      pointwise("shortcut_conv", filters, 2),
      simple(LayerKind::BatchNorm, "shortcut_bn"),
  };
  return d;
}

void require_classes(int class_count) {
  if (class_count < 2) throw ConfigError("class_count must be >= 2, got " + std::to_string(class_count));
}

}  // namespace

NetworkSpec mini_xception_spec(int class_count, int input_size) {
  require_classes(class_count);
  NetworkSpec spec;
  spec.name = "mini_xception";
  spec.class_count = class_count;
  spec.input_shape = Shape{1, input_size, input_size};
  spec.layers = {
      conv("entry_conv1", 8, 3, Padding::Valid),
      simple(LayerKind::BatchNorm, "entry_bn1"),
      simple(LayerKind::Relu, "entry_relu1"),
      conv("entry_conv2", 8, 3, Padding::Valid),
      simple(LayerKind::BatchNorm, "entry_bn2"),
      simple(LayerKind::Relu, "entry_relu2"),
      xception_block("block1", 16),
      xception_block("block2", 32),
      xception_block("block3", 64),
      xception_block("block4", 128),
      conv("head", class_count, 3, Padding::Same),
      simple(LayerKind::GlobalAvgPool, "gap"),
      simple(LayerKind::Softmax, "softmax"),
  };
  spec.validate();
  return spec;
}

NetworkSpec simple_cnn4_spec(int class_count, int input_size) {
  require_classes(class_count);
  NetworkSpec spec;
  spec.name = "simple_cnn";
  spec.class_count = class_count;
  spec.input_shape = Shape{1, input_size, input_size};
  const int filters[] = {32, 64, 128, 128};
  for (int i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    spec.layers.push_back(conv("conv" + n, filters[i], 3, Padding::Same));
    spec.layers.push_back(simple(LayerKind::Relu, "relu" + n));
    if (i < 3) spec.layers.push_back(maxpool("pool" + n, 2, 2, Padding::Valid));
  }
  spec.layers.push_back(simple(LayerKind::GlobalAvgPool, "gap"));
  spec.layers.push_back(dense_layer("fc", class_count));
  spec.layers.push_back(simple(LayerKind::Softmax, "softmax"));
  spec.validate();
  return spec;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Ensemble: return "ensemble";
    case ModelKind::MiniXception: return "mini-xception";
    case ModelKind::SimpleCnn: return "simple-cnn";
  }
  return "unknown";
}

std::optional<ModelKind> model_kind_from_string(std::string_view name) {
  for (auto k : {ModelKind::Ensemble, ModelKind::MiniXception, ModelKind::SimpleCnn})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

template <typename T>
BasicTensor<T> ensemble_average(const BasicTensor<T>& p1, const BasicTensor<T>& p2) {
  if (!(p1.shape() == p2.shape()))
    throw ShapeError("ensemble_average: shape mismatch " + p1.shape().str() + " vs " + p2.shape().str());
  BasicTensor<T> out(p1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * (p1[i] + p2[i]);
  return out;
}

template Tensor ensemble_average(const Tensor&, const Tensor&);
template Tensor64 ensemble_average(const Tensor64&, const Tensor64&);

Model::Model(ModelKind kind, std::vector<Network<float>> members) : kind_(kind), members_(std::move(members)) {
  const std::size_t expected = kind == ModelKind::Ensemble ? 2 : 1;
  if (members_.size() != expected)
    throw ConfigError(std::string(to_string(kind)) + " model needs " + std::to_string(expected) + " member(s)");
  for (const auto& m : members_)
    if (m.class_count() != members_.front().class_count())
      throw ConfigError("ensemble members disagree on class count");
}

Model Model::clone() const {
  std::vector<Network<float>> copies;
  for (const auto& m : members_) {
    Rng unused(0);
    Network<float> copy(m.spec(), unused);
    copy.import_state(m.export_state());
    copies.push_back(std::move(copy));
  }
  return Model(kind_, std::move(copies));
}

Tensor Model::predict(const Tensor& batch) const {
  Tensor probs = members_.front().predict(batch);
  if (members_.size() == 2) probs = ensemble_average(probs, members_[1].predict(batch));
  return probs;
}

Model build_model(ModelKind kind, int class_count, std::uint64_t seed, int input_size) {
  Rng rng(seed);
  std::vector<Network<float>> members;
  if (kind != ModelKind::SimpleCnn) members.push_back(build_mini_xception(class_count, rng, input_size));
  if (kind != ModelKind::MiniXception) members.push_back(build_simple_cnn4(class_count, rng, input_size));
  return Model(kind, std::move(members));
}

int argmax(std::span<const float> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

namespace {

template <std::size_t K>
std::array<float, K> single_row(const Model& model, const Tensor& face) {
  if (model.class_count() != static_cast<int>(K))
    throw ConfigError("model has " + std::to_string(model.class_count()) + " classes, expected " + std::to_string(K));
  if (face.rank() != 4 || face.dim(0) != 1)
    throw ShapeError("expected one preprocessed face [1,1,H,W], got " + face.shape().str());
  const Tensor probs = model.predict(face);
  std::array<float, K> out{};
  std::copy_n(probs.ptr(), K, out.begin());
  return out;
}

}  // namespace

EmotionPrediction predict_emotion(const Model& model, const Tensor& face) {
  EmotionPrediction p{};
  p.probs = single_row<kEmotionClasses>(model, face);
  p.label = static_cast<EmotionLabel>(argmax(p.probs));
  return p;
}

GenderPrediction predict_gender(const Model& model, const Tensor& face) {
  GenderPrediction p{};
  p.probs = single_row<kGenderClasses>(model, face);
  p.label = static_cast<GenderLabel>(argmax(p.probs));
  return p;
}

}  // namespace egc
