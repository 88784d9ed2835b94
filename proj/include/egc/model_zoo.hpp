#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "egc/labels.hpp"
#include "egc/network.hpp"

namespace egc {

// Entry: two valid 3x3 convs (8 filters) with batch norm and ReLU. Then four
// residual blocks (16, 32, 64, 128 filters) of
//   sepconv3x3 -> bn -> relu -> sepconv3x3 -> bn -> maxpool3x3/2
// with a strided pointwise conv + bn shortcut, a 3x3 conv down to
// class_count channels, global average pooling and softmax.
NetworkSpec mini_xception_spec(int class_count, int input_size = kFaceSize);

// Four 3x3 same-padded conv + ReLU layers (32, 64, 128, 128 filters) with
// 2x2 max pooling after the first three, then global average pooling, a dense
// classifier and softmax.
NetworkSpec simple_cnn4_spec(int class_count, int input_size = kFaceSize);

template <typename T = float>
Network<T> build_mini_xception(int class_count, Rng& rng, int input_size = kFaceSize) {
  return Network<T>(mini_xception_spec(class_count, input_size), rng);
}

template <typename T = float>
Network<T> build_simple_cnn4(int class_count, Rng& rng, int input_size = kFaceSize) {
  return Network<T>(simple_cnn4_spec(class_count, input_size), rng);
}

enum class ModelKind { Ensemble, MiniXception, SimpleCnn };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> model_kind_from_string(std::string_view name);

// Arithmetic mean of two probability tables of the same shape.
template <typename T>
BasicTensor<T> ensemble_average(const BasicTensor<T>& p1, const BasicTensor<T>& p2);

// One network, or the two-member averaging ensemble. Members are trained
// jointly through the averaged output.
class Model {
 public:
  Model(ModelKind kind, std::vector<Network<float>> members);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Deep copy: same specs, weights and running statistics.
  Model clone() const;

  ModelKind kind() const noexcept { return kind_; }
  int class_count() const noexcept { return members_.front().class_count(); }
  std::vector<Network<float>>& members() noexcept { return members_; }
  const std::vector<Network<float>>& members() const noexcept { return members_; }

  // [N,1,H,W] -> [N,K] averaged member probabilities.
  Tensor predict(const Tensor& batch) const;

 private:
  ModelKind kind_;
  std::vector<Network<float>> members_;
};

// Ensemble = mini-Xception followed by simple CNN, initialized from one
// generator seeded with `seed`.
Model build_model(ModelKind kind, int class_count, std::uint64_t seed, int input_size = kFaceSize);

// Index of the largest entry; the first one wins ties.
int argmax(std::span<const float> values);

struct EmotionPrediction {
  EmotionLabel label;
  std::array<float, kEmotionClasses> probs;
};

struct GenderPrediction {
  GenderLabel label;
  std::array<float, kGenderClasses> probs;
};

// face: a preprocessed [1,1,48,48] tensor.
EmotionPrediction predict_emotion(const Model& model, const Tensor& face);
GenderPrediction predict_gender(const Model& model, const Tensor& face);

}  // namespace egc
