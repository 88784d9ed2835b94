#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egc/data_io.hpp"
#include "egc/model_zoo.hpp"
#include "egc/network.hpp"

namespace egc {

enum class Task { Emotion, Gender };

std::string_view to_string(Task task);
std::optional<Task> task_from_string(std::string_view name);
int class_count(Task task);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 7;
  Task task = Task::Emotion;

  // Throws ConfigError.
  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> m, v;  // mirror the parameter list
  std::int64_t t = 0;
};

// One Adam update of every parameter from its accumulated gradient. The state
// is sized on first use. Throws ShapeError if the parameter list changed shape.
template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, const TrainConfig& cfg);

template <typename T>
struct CrossEntropy {
  double loss = 0;
  BasicTensor<T> grad_logits;  // (probs - onehot) / N
};

inline constexpr double kLogClamp = 1e-12;

// Mean of -log(max(p[n, target_n], 1e-12)). Throws LabelError for a target
// outside [0, K).
template <typename T>
CrossEntropy<T> cross_entropy(const BasicTensor<T>& probs, std::span<const int> targets);

struct EpochStats {
  int epoch = 0;  // from 1
  double train_loss = 0;
  double val_accuracy = 0;  // NaN without a validation set
};

// `epoch,train_loss,val_accuracy`
std::string format_epoch(const EpochStats& stats);

using ProgressSink = std::function<void(const EpochStats&)>;

// Stacks [1,C,H,W] samples into one [N,C,H,W] batch.
Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices);

// Owns the optimizer state for one model. Ensemble members are trained jointly:
// the loss is taken on the averaged probabilities and its gradient reaches both
// members through the average.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  const TrainConfig& config() const noexcept { return cfg_; }

  // One optimizer step on a batch; returns the batch loss before the update.
  double step(const Tensor& batch, std::span<const int> labels);

  // Shuffles with the seeded generator each epoch and keeps the last partial
  // batch. Throws DataError on an empty training set.
  std::vector<EpochStats> fit(const Dataset& train, const Dataset& val, const ProgressSink& sink = {});

 private:
  Model& model_;
  TrainConfig cfg_;
  Rng rng_;
  std::vector<AdamState<float>> states_;
};

std::vector<EpochStats> train_epochs(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                                     const ProgressSink& sink = {});

struct EvalReport {
  int class_count = 0;
  std::int64_t samples = 0;
  double accuracy = 0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::vector<double> precision, recall, f1;
  std::vector<std::int64_t> support;

  // Each non-empty row divided by its sum.
  std::vector<std::vector<double>> normalized_confusion() const;
};

EvalReport report_from_predictions(int class_count, std::span<const int> truth, std::span<const int> predicted);

// Throws DataError on an empty dataset and LabelError on an out-of-range label.
EvalReport evaluate(const Model& model, const Dataset& data, int batch_size = 64);

// Accuracy, normalized confusion (2 decimals) and the per-class table.
void render_report(std::ostream& out, const EvalReport& report, std::span<const std::string_view> class_names);

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates checked per tensor; tensors at most this large are checked in full.
  std::size_t coords_per_tensor = 24;
  // Gradients below this magnitude are compared absolutely. Set to the step:
  // central differences cannot resolve smaller values through roundoff, and
  // biases feeding batch norm have an exact zero gradient.
  double floor = 1e-5;
  // Coordinates whose one-sided slopes differ by more than this, relative to
  // the larger slope (at least `floor`), sit on a kink and are skipped. Only
  // the forward pass decides, so a wrong backward pass cannot hide behind it.
  double kink_tolerance = 1e-3;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t coords_checked = 0;
  std::size_t coords_skipped = 0;  // kinks within the step
  std::string worst;  // tensor holding the largest error ("input" or a parameter name)
};

// Central differences of L = sum(r * layer(x)) with random x and r, against
// the analytic backward pass, for the input and every parameter.
GradCheckReport grad_check(Layer<double>& layer, const Shape& input_shape, const GradCheckOptions& opts = {});

}  // namespace egc
