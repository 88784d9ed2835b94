#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "egc/error.hpp"
#include "egc/train.hpp"
#include "oracles.hpp"

using namespace egc;

namespace {

// Two-class 12x12 data: class 1 has a bright top half, class 0 a bright
// bottom half, both with noise.
Dataset toy_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset out;
  for (int i = 0; i < n; ++i) {
    LabeledSample s;
    s.label = i % 2;
    s.image = Tensor(Shape{1, 1, 12, 12});
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x) {
        const bool bright = (y < 6) == (s.label == 1);
        s.image.at(0, 0, y, x) = (bright ? 0.6f : -0.6f) + static_cast<float>(rng.uniform(-0.3, 0.3));
      }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<int> labels_of(const Dataset& d) {
  std::vector<int> out;
  for (const auto& s : d) out.push_back(s.label);
  return out;
}

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& c) { c.epochs = 0; }, [](TrainConfig& c) { c.batch_size = 0; },
           [](TrainConfig& c) { c.learning_rate = 0; }, [](TrainConfig& c) { c.beta1 = 1.0; },
           [](TrainConfig& c) { c.beta2 = -0.1; }, [](TrainConfig& c) { c.adam_epsilon = 0; }}) {
    TrainConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
  CHECK(task_from_string("emotion") == Task::Emotion);
  CHECK(task_from_string("gender") == Task::Gender);
  CHECK_FALSE(task_from_string("age").has_value());
  CHECK(class_count(Task::Emotion) == 7);
  CHECK(class_count(Task::Gender) == 2);
}

TEST_CASE("cross entropy examples") {
  const Tensor64 uniform(Shape{1, 7}, 1.0 / 7.0);
  const std::vector<int> zero{0};
  CHECK(cross_entropy(uniform, zero).loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  Tensor64 certain(Shape{1, 3}, 0.0);
  certain[1] = 1.0;
  const std::vector<int> one{1};
  CHECK(cross_entropy(certain, one).loss == 0.0);
  // Clamped rather than infinite.
  CHECK(cross_entropy(certain, zero).loss == doctest::Approx(-std::log(1e-12)));

  const std::vector<int> seven{7};
  CHECK_THROWS_AS(cross_entropy(uniform, seven), LabelError);
  const std::vector<int> two{0, 1};
  CHECK_THROWS_AS(cross_entropy(uniform, two), ShapeError);
}

TEST_CASE("cross entropy agrees with a 64-bit oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8)), k = 2 + static_cast<int>(rng.below(6));
    const Tensor64 probs = softmax(oracle::random_tensor<double>(Shape{n, k}, rng, -5, 5));
    std::vector<int> targets;
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < n; ++i) {
      targets.push_back(static_cast<int>(rng.below(k)));
      rows.emplace_back(probs.data().begin() + i * k, probs.data().begin() + (i + 1) * k);
    }
    const auto ce = cross_entropy(probs, targets);
    CHECK(ce.loss == doctest::Approx(oracle::cross_entropy(rows, targets)).epsilon(1e-12));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j)
        CHECK(ce.grad_logits.at(i, j) ==
              doctest::Approx((probs.at(i, j) - (j == targets[i] ? 1.0 : 0.0)) / n).epsilon(1e-12));
  }
}

TEST_CASE("adam") {
  TrainConfig cfg;
  SUBCASE("zero gradient leaves parameters unchanged") {
    Param<double> p{"p", Tensor64(Shape{3}, {1.0, -2.0, 3.0}), Tensor64(Shape{3}, 0.0)};
    std::vector<Param<double>*> params{&p};
    AdamState<double> state;
    adam_step<double>(params, state, cfg);
    CHECK(p.value.data()[0] == 1.0);
    CHECK(p.value.data()[1] == -2.0);
    CHECK(p.value.data()[2] == 3.0);
    CHECK(state.t == 1);
  }
  SUBCASE("first step moves each coordinate by about lr against its gradient") {
    Param<double> p{"p", Tensor64(Shape{3}, {0.0, 0.0, 0.0}), Tensor64(Shape{3}, {0.5, -3.0, 1e-3})};
    std::vector<Param<double>*> params{&p};
    AdamState<double> state;
    adam_step<double>(params, state, cfg);
    CHECK(p.value.data()[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p.value.data()[1] == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(p.value.data()[2] == doctest::Approx(-1e-3).epsilon(1e-4));
  }
  SUBCASE("three steps match a scalar recomputation") {
    const std::vector<double> grads{0.3, -0.7, 0.05};
    Param<double> p{"p", Tensor64(Shape{1}, {0.25}), Tensor64(Shape{1}, 0.0)};
    std::vector<Param<double>*> params{&p};
    AdamState<double> state;
    double theta = 0.25, m = 0, v = 0;
    for (int t = 1; t <= 3; ++t) {
      const double g = grads[t - 1];
      p.grad[0] = g;
      adam_step<double>(params, state, cfg);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      theta -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(std::abs(p.value[0] - theta) < 1e-10);
    }
  }
  SUBCASE("parameter list changes are rejected") {
    Param<double> p{"p", Tensor64(Shape{2}, 0.0), Tensor64(Shape{2}, 0.0)};
    Param<double> q{"q", Tensor64(Shape{3}, 0.0), Tensor64(Shape{3}, 0.0)};
    std::vector<Param<double>*> first{&p}, second{&q};
    AdamState<double> state;
    adam_step<double>(first, state, cfg);
    CHECK_THROWS_AS(adam_step<double>(second, state, cfg), ShapeError);
  }
}

TEST_CASE("training steps reduce the loss") {
  const Dataset data = toy_dataset(16, 1);
  const Tensor batch = stack_images(data, all_indices(data));
  CHECK(batch.shape() == Shape{16, 1, 12, 12});
  const auto labels = labels_of(data);
  for (auto kind : {ModelKind::SimpleCnn, ModelKind::MiniXception, ModelKind::Ensemble}) {
    Model model = build_model(kind, 2, 5, 12);
    TrainConfig cfg;
    cfg.task = Task::Gender;
    Trainer trainer(model, cfg);
    const double first = trainer.step(batch, labels);
    double last = first;
    for (int i = 0; i < 19; ++i) last = trainer.step(batch, labels);
    INFO(to_string(kind), " first ", first, " last ", last);
    CHECK(last < first);
  }
}

TEST_CASE("fit is deterministic and reports every epoch") {
  const Dataset train = toy_dataset(40, 2), val = toy_dataset(10, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;  // 40 = 16 + 16 + 8: keeps the partial batch
  cfg.task = Task::Gender;

  auto run = [&] {
    Model model = build_model(ModelKind::SimpleCnn, 2, 9, 12);
    std::vector<std::string> lines;
    const auto stats = train_epochs(model, train, val, cfg, [&](const EpochStats& s) {
      lines.push_back(format_epoch(s));
    });
    return std::pair{stats, lines};
  };
  const auto [a, lines] = run();
  const auto [b, unused] = run();
  REQUIRE(a.size() == 3);
  REQUIRE(lines.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].epoch == static_cast<int>(i) + 1);
    CHECK(a[i].train_loss == b[i].train_loss);
    CHECK(a[i].val_accuracy == b[i].val_accuracy);
    CHECK(a[i].val_accuracy >= 0.0);
    CHECK(a[i].val_accuracy <= 1.0);
  }
  CHECK(lines[0].rfind("1,", 0) == 0);
  CHECK(std::count(lines[0].begin(), lines[0].end(), ',') == 2);

  Model model = build_model(ModelKind::SimpleCnn, 2, 9, 12);
  const auto no_val = train_epochs(model, train, {}, cfg);
  CHECK(std::isnan(no_val[0].val_accuracy));
  CHECK_THROWS_AS(train_epochs(model, {}, val, cfg), DataError);

  Dataset bad = train;
  bad[3].label = 2;
  CHECK_THROWS_AS(train_epochs(model, bad, val, cfg), LabelError);

  cfg.epochs = 0;
  CHECK_THROWS_AS(train_epochs(model, train, val, cfg), ConfigError);
}

TEST_CASE("ensemble cross entropy never exceeds the members' mean") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor64 p1 = softmax(oracle::random_tensor<double>(Shape{6, 7}, rng, -3, 3));
    const Tensor64 p2 = softmax(oracle::random_tensor<double>(Shape{6, 7}, rng, -3, 3));
    std::vector<int> t;
    for (int i = 0; i < 6; ++i) t.push_back(static_cast<int>(rng.below(7)));
    const double avg = cross_entropy(ensemble_average(p1, p2), t).loss;
    const double mean = 0.5 * (cross_entropy(p1, t).loss + cross_entropy(p2, t).loss);
    CHECK(avg < mean);
  }
}

TEST_CASE("evaluation report") {
  // Confusion [[2,1,0],[0,2,0],[1,0,1]] laid out pair by pair.
  const std::vector<int> truth{0, 0, 0, 1, 1, 2, 2};
  const std::vector<int> pred{0, 0, 1, 1, 1, 0, 2};
  const auto r = report_from_predictions(3, truth, pred);
  CHECK(r.confusion == std::vector<std::vector<std::int64_t>>{{2, 1, 0}, {0, 2, 0}, {1, 0, 1}});
  CHECK(r.samples == 7);
  CHECK(r.accuracy == doctest::Approx(5.0 / 7.0));
  CHECK(r.support == std::vector<std::int64_t>{3, 2, 2});
  CHECK(r.precision[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision[2] == doctest::Approx(1.0));
  CHECK(r.recall[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall[1] == doctest::Approx(1.0));
  CHECK(r.recall[2] == doctest::Approx(0.5));
  CHECK(r.f1[1] == doctest::Approx(0.8));
  CHECK(r.f1[2] == doctest::Approx(2.0 / 3.0));
  const auto norm = r.normalized_confusion();
  CHECK(norm[2][0] == doctest::Approx(0.5));
  CHECK(norm[0][1] == doctest::Approx(1.0 / 3.0));

  const std::vector<int> same{0, 1, 2, 1};
  const auto perfect = report_from_predictions(3, same, same);
  CHECK(perfect.accuracy == 1.0);
  for (int k = 0; k < 3; ++k) CHECK(perfect.confusion[k][k] == perfect.support[k]);

  const std::vector<int> never{1, 1};
  const std::vector<int> zeros{0, 0};
  const auto empty_class = report_from_predictions(2, zeros, never);
  CHECK(empty_class.precision[0] == 0.0);
  CHECK(empty_class.recall[1] == 0.0);

  const std::vector<int> out_of_range{3};
  const std::vector<int> zero{0};
  CHECK_THROWS_AS(report_from_predictions(3, out_of_range, zero), LabelError);

  std::ostringstream text;
  const std::array<std::string_view, 3> names{"a", "b", "c"};
  render_report(text, r, names);
  CHECK(text.str().find("accuracy 0.714") != std::string::npos);
  CHECK(text.str().find("0.50") != std::string::npos);
}

TEST_CASE("evaluate runs the model over a dataset") {
  const Model model = build_model(ModelKind::SimpleCnn, 2, 3, 12);
  const Dataset data = toy_dataset(10, 8);
  const auto r = evaluate(model, data, 4);
  CHECK(r.samples == 10);
  std::int64_t total = 0;
  for (const auto& row : r.confusion)
    for (auto c : row) total += c;
  CHECK(total == 10);
  CHECK_THROWS_AS(evaluate(model, {}), DataError);
}

TEST_CASE("gradient check catches a broken backward pass") {
  LayerDesc dense;
  dense.kind = LayerKind::Dense;
  dense.name = "fc";
  dense.filters = 3;
  Rng rng(1);
  auto layer = make_layer<double>(dense, Shape{4, 5}, rng);
  CHECK(grad_check(*layer, Shape{4, 5}).max_rel_error < 1e-6);

  // Same layer with the sign of its input gradient flipped.
  struct Flipped final : Layer<double> {
    explicit Flipped(std::unique_ptr<Layer<double>> inner) : Layer<double>("flipped"), inner(std::move(inner)) {}
    LayerKind kind() const override { return inner->kind(); }
    Shape output_shape(const Shape& s) const override { return inner->output_shape(s); }
    Tensor64 forward(const Tensor64& x, Phase p) override { return inner->forward(x, p); }
    Tensor64 infer(const Tensor64& x) const override { return inner->infer(x); }
    Tensor64 backward(const Tensor64& g) override { return scale(inner->backward(g), -1.0); }
    void collect_params(std::vector<Param<double>*>& out) override { inner->collect_params(out); }
    std::unique_ptr<Layer<double>> inner;
  };
  Flipped broken(make_layer<double>(dense, Shape{4, 5}, rng));
  const auto r = grad_check(broken, Shape{4, 5});
  CHECK(r.max_rel_error > 0.1);
  CHECK(r.worst == "input");

  LayerDesc sep;
  sep.kind = LayerKind::SeparableConv2d;
  sep.name = "sep";
  sep.filters = 3;
  sep.kernel = 3;
  sep.padding = Padding::Same;
  LayerDesc bn;
  bn.kind = LayerKind::BatchNorm;
  bn.name = "bn";
  LayerDesc relu;
  relu.kind = LayerKind::Relu;
  relu.name = "relu";
  Sequential<double> block("mini");
  Shape shape{2, 2, 5, 5};
  for (const auto& d : {sep, bn, relu}) {
    block.add(make_layer<double>(d, shape, rng));
    shape = layer_output_shape(d, shape);
  }
  CHECK(grad_check(block, Shape{2, 2, 5, 5}).max_rel_error < 1e-4);
}

TEST_CASE("grad_check skips coordinates on a kink") {
  // Identity except y0 = |x0 - c|, with c placed inside the finite-difference
  // step of x0. grad_check draws x from Rng(seed) first, so x0 is known here.
  struct Kinked final : Layer<double> {
    explicit Kinked(double c) : Layer<double>("kinked"), c(c) {}
    LayerKind kind() const override { return LayerKind::Relu; }
    Shape output_shape(const Shape& s) const override { return s; }
    Tensor64 forward(const Tensor64& x, Phase) override {
      last = x;
      return infer(x);
    }
    Tensor64 infer(const Tensor64& x) const override {
      Tensor64 y = x;
      y[0] = std::abs(x[0] - c);
      return y;
    }
    Tensor64 backward(const Tensor64& g) override {
      Tensor64 gx = g;
      gx[0] = last[0] >= c ? g[0] : -g[0];
      return gx;
    }
    void collect_params(std::vector<Param<double>*>&) override {}
    double c;
    Tensor64 last;
  };
  GradCheckOptions opts;
  Rng rng(opts.seed);
  const double x0 = rng.uniform(-1.0, 1.0);

  Kinked near(x0 + 0.3 * opts.step);
  const auto r = grad_check(near, Shape{2, 3}, opts);
  CHECK(r.coords_skipped == 1);
  CHECK(r.coords_checked == 5);
  CHECK(r.max_rel_error < 1e-9);

  // Without the skip the central difference at x0 is -0.3 against -1.
  opts.kink_tolerance = std::numeric_limits<double>::infinity();
  CHECK(grad_check(near, Shape{2, 3}, opts).max_rel_error > 0.5);

  // Far from the kink nothing is skipped.
  Kinked far(x0 + 0.5);
  const auto rf = grad_check(far, Shape{2, 3});
  CHECK(rf.coords_skipped == 0);
  CHECK(rf.max_rel_error < 1e-9);
}
