#include "egc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "egc/error.hpp"

namespace egc {

std::string_view to_string(Task task) { return task == Task::Emotion ? "emotion" : "gender"; }

std::optional<Task> task_from_string(std::string_view name) {
  if (name == "emotion") return Task::Emotion;
  if (name == "gender") return Task::Gender;
  return std::nullopt;
}

int class_count(Task task) { return task == Task::Emotion ? kEmotionClasses : kGenderClasses; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 > 0 && beta1 < 1)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(adam_epsilon > 0)) throw ConfigError("adam epsilon must be positive");
}

template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, const TrainConfig& cfg) {
  if (state.m.empty() && state.t == 0) {
    for (const Param<T>* p : params) {
      state.m.emplace_back(p->value.shape(), T{0});
      state.v.emplace_back(p->value.shape(), T{0});
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i]->value.shape() == state.m[i].shape()) || !(params[i]->grad.shape() == state.m[i].shape()))
      throw ShapeError("parameter '" + params[i]->name + "' does not match optimizer state");
  }

  ++state.t;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->value.ptr();
    const T* g = params[i]->grad.ptr();
    T* m = state.m[i].ptr();
    T* v = state.v[i].ptr();
    const std::size_t n = params[i]->value.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / c1, vhat = vk / c2;
      p[k] = static_cast<T>(p[k] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon));
    }
  }
}

template <typename T>
CrossEntropy<T> cross_entropy(const BasicTensor<T>& probs, std::span<const int> targets) {
  if (probs.rank() != 2) throw ShapeError("cross entropy expects [N,K] probabilities, got " + probs.shape().str());
  const int n = probs.dim(0), k = probs.dim(1);
  if (targets.size() != static_cast<std::size_t>(n)) throw ShapeError("target count does not match batch");
  CrossEntropy<T> out;
  out.grad_logits = probs;
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= k) throw LabelError("class index " + std::to_string(t) + " outside [0, " + std::to_string(k) + ")");
    total -= std::log(std::max(static_cast<double>(probs.at(i, t)), kLogClamp));
    out.grad_logits.at(i, t) -= T{1};
  }
  for (T& g : out.grad_logits.data()) g /= static_cast<T>(n);
  out.loss = total / n;
  return out;
}

std::string format_epoch(const EpochStats& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f", s.epoch, s.train_loss, s.val_accuracy);
  return buf;
}

Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("empty batch");
  const Shape one = data.at(indices[0]).image.shape();
  if (one.rank() != 4 || one[0] != 1) throw ShapeError("samples must be [1,C,H,W], got " + one.str());
  Tensor batch(Shape{static_cast<int>(indices.size()), one[1], one[2], one[3]});
  const std::size_t stride = one.numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = data.at(indices[i]).image;
    if (!(img.shape() == one)) throw ShapeError("samples in a batch differ in shape");
    std::copy(img.data().begin(), img.data().end(), batch.ptr() + i * stride);
  }
  return batch;
}

Trainer::Trainer(Model& model, TrainConfig cfg) : model_(model), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  states_.resize(model_.members().size());
}

double Trainer::step(const Tensor& batch, std::span<const int> labels) {
  auto& members = model_.members();
  for (auto& m : members) m.zero_grad();

  double loss = 0;
  if (members.size() == 1) {
    const Tensor probs = members[0].forward(batch, Phase::Train);
    auto ce = cross_entropy(probs, labels);
    members[0].backward_from_logits(ce.grad_logits);
    loss = ce.loss;
  } else {
    std::vector<Tensor> probs;
    for (auto& m : members) probs.push_back(m.forward(batch, Phase::Train));
    Tensor avg = probs[0];
    const float w = 1.0f / static_cast<float>(members.size());
    for (std::size_t k = 0; k < avg.size(); ++k) {
      float s = 0;
      for (const auto& p : probs) s += p[k];
      avg[k] = s * w;
    }
    loss = cross_entropy(avg, labels).loss;

    // d loss / d p_avg is -1 / (N p_avg) on the true class; each member sees
    // that scaled by its averaging weight.
    const int n = avg.dim(0);
    Tensor grad(avg.shape(), 0.0f);
    for (int i = 0; i < n; ++i) {
      const double p = std::max(static_cast<double>(avg.at(i, labels[i])), kLogClamp);
      grad.at(i, labels[i]) = static_cast<float>(-w / (n * p));
    }
    for (auto& m : members) m.backward(grad);
  }

  for (std::size_t i = 0; i < members.size(); ++i) {
    auto params = members[i].params();
    adam_step<float>(params, states_[i], cfg_);
  }
  return loss;
}

std::vector<EpochStats> Trainer::fit(const Dataset& train, const Dataset& val, const ProgressSink& sink) {
  if (train.empty()) throw DataError("training set is empty");
  const int k = model_.class_count();
  for (const auto& s : train)
    if (s.label < 0 || s.label >= k) throw LabelError("training label " + std::to_string(s.label) + " outside [0, " + std::to_string(k) + ")");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> trace;
  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    rng_.shuffle(std::span<std::size_t>(order));
    double weighted = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train[i].label);
      weighted += step(stack_images(train, idx), labels) * static_cast<double>(idx.size());
    }
    EpochStats stats{epoch, weighted / static_cast<double>(order.size()),
                     val.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate(model_, val).accuracy};
    trace.push_back(stats);
    if (sink) sink(stats);
  }
  return trace;
}

std::vector<EpochStats> train_epochs(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                                     const ProgressSink& sink) {
  Trainer trainer(model, cfg);
  return trainer.fit(train, val, sink);
}

std::vector<std::vector<double>> EvalReport::normalized_confusion() const {
  std::vector<std::vector<double>> out(class_count, std::vector<double>(class_count, 0.0));
  for (int r = 0; r < class_count; ++r) {
    const double row = static_cast<double>(support[r]);
    if (row == 0) continue;
    for (int c = 0; c < class_count; ++c) out[r][c] = static_cast<double>(confusion[r][c]) / row;
  }
  return out;
}

EvalReport report_from_predictions(int class_count, std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
  if (truth.empty()) throw DataError("evaluation set is empty");
  EvalReport r;
  r.class_count = class_count;
  r.samples = static_cast<std::int64_t>(truth.size());
  r.confusion.assign(class_count, std::vector<std::int64_t>(class_count, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int v : {truth[i], predicted[i]})
      if (v < 0 || v >= class_count)
        throw LabelError("class index " + std::to_string(v) + " outside [0, " + std::to_string(class_count) + ")");
    ++r.confusion[truth[i]][predicted[i]];
  }

  std::int64_t diag = 0;
  r.precision.resize(class_count);
  r.recall.resize(class_count);
  r.f1.resize(class_count);
  r.support.resize(class_count);
  for (int k = 0; k < class_count; ++k) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < class_count; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    const auto tp = static_cast<double>(r.confusion[k][k]);
    diag += r.confusion[k][k];
    r.support[k] = row;
    r.precision[k] = col ? tp / static_cast<double>(col) : 0.0;
    r.recall[k] = row ? tp / static_cast<double>(row) : 0.0;
    const double s = r.precision[k] + r.recall[k];
    r.f1[k] = s > 0 ? 2 * r.precision[k] * r.recall[k] / s : 0.0;
  }
  r.accuracy = static_cast<double>(diag) / static_cast<double>(r.samples);
  return r;
}

EvalReport evaluate(const Model& model, const Dataset& data, int batch_size) {
  if (data.empty()) throw DataError("evaluation set is empty");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::vector<int> truth, predicted;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = model.predict(stack_images(data, idx));
    const int k = probs.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      truth.push_back(data[start + i].label);
      predicted.push_back(argmax(std::span<const float>(probs.ptr() + i * k, k)));
    }
  }
  return report_from_predictions(model.class_count(), truth, predicted);
}

void render_report(std::ostream& out, const EvalReport& r, std::span<const std::string_view> names) {
  auto name = [&](int k) { return k < static_cast<int>(names.size()) ? std::string(names[k]) : std::to_string(k); };
  std::size_t width = 5;
  for (int k = 0; k < r.class_count; ++k) width = std::max(width, name(k).size());

  const auto flags = out.flags();
  out << std::fixed << std::setprecision(3) << "accuracy " << r.accuracy << "\n\nnormalized confusion (rows = true)\n";
  out << std::setw(static_cast<int>(width)) << "";
  for (int c = 0; c < r.class_count; ++c) out << ' ' << std::setw(static_cast<int>(width)) << name(c);
  out << '\n' << std::setprecision(2);
  const auto norm = r.normalized_confusion();
  for (int k = 0; k < r.class_count; ++k) {
    out << std::setw(static_cast<int>(width)) << name(k);
    for (double v : norm[k]) out << ' ' << std::setw(static_cast<int>(width)) << v;
    out << '\n';
  }
  out << '\n'
      << std::setw(static_cast<int>(width)) << "class" << "  precision  recall      f1  support\n"
      << std::setprecision(3);
  for (int k = 0; k < r.class_count; ++k) {
    out << std::setw(static_cast<int>(width)) << name(k) << "  " << std::setw(9) << r.precision[k] << "  "
        << std::setw(6) << r.recall[k] << "  " << std::setw(6) << r.f1[k] << "  " << std::setw(7) << r.support[k]
        << '\n';
  }
  out.flags(flags);
}

namespace {

double weighted_output(Layer<double>& layer, const Tensor64& x, const Tensor64& r) {
  const Tensor64 y = layer.forward(x, Phase::Train);
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
  return s;
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> all(size);
  std::iota(all.begin(), all.end(), 0);
  if (size <= limit) return all;
  rng.shuffle(std::span<std::size_t>(all));
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradCheckReport grad_check(Layer<double>& layer, const Shape& input_shape, const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  Tensor64 x(input_shape);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  const Shape out_shape = layer.output_shape(input_shape);
  Tensor64 r(out_shape);
  for (double& v : r.data()) v = rng.uniform(-1.0, 1.0);

  std::vector<Param<double>*> params;
  layer.collect_params(params);
  for (auto* p : params) p->grad.fill(0.0);
  layer.forward(x, Phase::Train);
  const Tensor64 grad_x = layer.backward(r);

  const double base = weighted_output(layer, x, r);
  GradCheckReport report;
  auto check = [&](const std::string& name, Tensor64& target, const Tensor64& analytic) {
    for (std::size_t i : pick_coords(target.size(), opts.coords_per_tensor, rng)) {
      const double saved = target[i];
      target[i] = saved + opts.step;
      const double up = weighted_output(layer, x, r);
      target[i] = saved - opts.step;
      const double down = weighted_output(layer, x, r);
      target[i] = saved;
      // Left and right slopes that disagree mean a kink (a ReLU or max-pool
      // switch) inside the step, where the derivative is undefined.
      const double right = (up - base) / opts.step, left = (base - down) / opts.step;
      if (std::abs(right - left) > opts.kink_tolerance * std::max({std::abs(right), std::abs(left), opts.floor})) {
        ++report.coords_skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opts.step);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++report.coords_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = name;
      }
    }
  };
  check("input", x, grad_x);
  for (auto* p : params) {
    const Tensor64 analytic = p->grad;
    check(p->name, p->value, analytic);
  }
  return report;
}

template void adam_step<float>(std::span<Param<float>* const>, AdamState<float>&, const TrainConfig&);
template void adam_step<double>(std::span<Param<double>* const>, AdamState<double>&, const TrainConfig&);
template CrossEntropy<float> cross_entropy<float>(const Tensor&, std::span<const int>);
template CrossEntropy<double> cross_entropy<double>(const Tensor64&, std::span<const int>);

}  // namespace egc
