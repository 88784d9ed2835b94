// Command-line front end: train, eval, predict, bench and classify.
//
// Exit codes: 0 success, 1 usage, 2 data, 3 archive.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "egc/archive.hpp"
#include "egc/error.hpp"
#include "egc/pipeline.hpp"
#include "egc/train.hpp"

namespace fs = std::filesystem;
using namespace egc;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kArchive = 3 };

struct TrainArgs {
  std::string task = "emotion", data, model, out, data_root;
  int epochs = 100, batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 7;
};

struct EvalArgs {
  std::string weights, task = "emotion", data, data_root, split = "all";
  int batch = 64;
};

struct DetectArgs {
  double scale_factor = 1.1;
  int min_neighbors = 3, min_size = 30;

  DetectParams params() const { return {scale_factor, min_neighbors, min_size}; }
};

struct PredictArgs {
  std::string weights_emotion, weights_gender, cascade, input, annotate;
  DetectArgs detect;
};

struct BenchArgs {
  std::string weights_emotion, weights_gender, cascade, size = "640x480";
  int frames = 20;
  std::uint64_t seed = 1;
  DetectArgs detect;
};

struct ClassifyArgs {
  std::string weights, input;
};

Task parse_task(const std::string& name) {
  const auto t = task_from_string(name);
  if (!t) throw UsageError("unknown task '" + name + "' (expected emotion or gender)");
  return *t;
}

// Seeded 80/20 split of a sample set without its own partition.
std::pair<Dataset, Dataset> holdout(Dataset all, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(std::span<LabeledSample>(all));
  const auto n_train = all.size() - all.size() / 5;
  Dataset val(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(n_train)),
              std::make_move_iterator(all.end()));
  all.resize(n_train);
  return {std::move(all), std::move(val)};
}

fs::path manifest_root(const std::string& data, const std::string& root) {
  return root.empty() ? fs::path(data).parent_path() : fs::path(root);
}

// Emotion data keeps the file's own partition: Training rows train, the
// PublicTest and PrivateTest rows validate.
std::pair<Dataset, Dataset> emotion_split(const std::vector<FerSample>& rows) {
  std::vector<FerSample> train, val;
  for (const auto& r : rows) (r.usage == FerUsage::Training ? train : val).push_back(r);
  return {to_dataset(train), to_dataset(val)};
}

int cmd_train(const TrainArgs& a) {
  const Task task = parse_task(a.task);
  const std::string model_name = a.model.empty() ? (task == Task::Emotion ? "ensemble" : "mini-xception") : a.model;
  const auto kind = model_kind_from_string(model_name);
  if (!kind) throw UsageError("unknown model '" + model_name + "'");
  if (task == Task::Gender && *kind == ModelKind::Ensemble)
    throw UsageError("gender classification trains the mini-Xception alone; --model ensemble is not allowed");

  TrainConfig cfg;
  cfg.task = task;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  Dataset train, val;
  if (task == Task::Emotion) {
    std::tie(train, val) = emotion_split(load_fer_csv(a.data));
  } else {
    const auto rows = load_gender_manifest(a.data);
    std::tie(train, val) = holdout(gender_dataset(rows, manifest_root(a.data, a.data_root)), a.seed);
  }
  std::cerr << "training " << to_string(*kind) << " on " << train.size() << " samples, validating on "
            << val.size() << "\n";

  Model model = build_model(*kind, class_count(task), a.seed);
  train_epochs(model, train, val, cfg, [](const EpochStats& s) { std::cout << format_epoch(s) << '\n' << std::flush; });
  save_weights(model, a.out);
  return kOk;
}

int cmd_eval(const EvalArgs& a) {
  const Task task = parse_task(a.task);
  const Model model = load_weights(a.weights);
  if (model.class_count() != class_count(task))
    throw SchemaError("archive has " + std::to_string(model.class_count()) + " classes but task " + a.task +
                      " needs " + std::to_string(class_count(task)));

  Dataset data;
  if (task == Task::Emotion) {
    auto rows = load_fer_csv(a.data);
    if (a.split != "all") {
      const bool want_train = a.split == "train";
      std::erase_if(rows, [&](const FerSample& r) { return (r.usage == FerUsage::Training) != want_train; });
    }
    data = to_dataset(rows);
  } else {
    data = gender_dataset(load_gender_manifest(a.data), manifest_root(a.data, a.data_root));
  }
  const auto report = evaluate(model, data, a.batch);
  if (task == Task::Emotion)
    render_report(std::cout, report, kEmotionNames);
  else
    render_report(std::cout, report, kGenderNames);
  return kOk;
}

Pipeline load_pipeline(const std::string& emotion, const std::string& gender, const std::string& cascade,
                       const DetectArgs& d) {
  if (!(d.scale_factor > 1.0)) throw UsageError("--scale-factor must exceed 1");
  return Pipeline(load_weights(emotion), load_weights(gender), load_cascade(cascade), d.params());
}

void emit_frame(const Pipeline& pipeline, const GrayImage& frame, std::int64_t index, const std::string& annotate,
                const std::string& stem) {
  const auto result = pipeline.process(frame);
  for (const auto& face : result.faces) std::cout << format_face_line(index, face, result.total_ms) << '\n';
  std::cout << std::flush;
  if (!annotate.empty()) {
    GrayImage copy = frame;
    draw_boxes(copy, result.faces);
    write_pgm(fs::path(annotate) / (stem + ".pgm"), copy);
  }
}

int cmd_predict(const PredictArgs& a) {
  const Pipeline pipeline = load_pipeline(a.weights_emotion, a.weights_gender, a.cascade, a.detect);
  if (!a.annotate.empty()) fs::create_directories(a.annotate);

  std::int64_t index = 0;
  auto warn = [&](const std::string& what) { std::cerr << "warning: frame " << index << ": " << what << '\n'; };

  if (a.input == "-") {
    for (;;) {
      std::optional<GrayImage> frame;
      try {
        frame = read_pgm_frame(std::cin);
      } catch (const DecodeError& e) {
        // Frame boundaries come from the headers, so a bad frame ends the stream.
        warn(e.what());
        break;
      }
      if (!frame) break;
      char stem[32];
      std::snprintf(stem, sizeof stem, "frame_%06lld", static_cast<long long>(index));
      emit_frame(pipeline, *frame, index, a.annotate, stem);
      ++index;
    }
    return kOk;
  }

  std::vector<fs::path> files;
  if (fs::is_directory(a.input)) {
    for (const auto& entry : fs::directory_iterator(a.input))
      if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else {
    if (!fs::exists(a.input)) throw DataError("input '" + a.input + "' does not exist");
    files.push_back(a.input);
  }
  for (const auto& file : files) {
    try {
      emit_frame(pipeline, read_pgm(file), index, a.annotate, file.stem().string());
    } catch (const DecodeError& e) {
      warn(e.what());
    }
    ++index;
  }
  return kOk;
}

int cmd_bench(const BenchArgs& a) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream size(a.size);
  if (!(size >> w >> x >> h) || x != 'x' || w < 1 || h < 1 || !size.eof())
    throw UsageError("--size must look like 640x480");
  if (a.frames < 1) throw UsageError("--frames must be at least 1");
  const Pipeline pipeline = load_pipeline(a.weights_emotion, a.weights_gender, a.cascade, a.detect);
  const auto report = run_bench(pipeline, a.frames, h, w, a.seed);

  std::printf("frames %d, size %dx%d, faces detected %d\n", a.frames, w, h, report.faces);
  std::printf("stage,samples,min_ms,median_ms,p95_ms\n");
  auto row = [](const char* name, const std::vector<double>& samples, const LatencyStats& s) {
    std::printf("%s,%zu,%.3f,%.3f,%.3f\n", name, samples.size(), s.min, s.median, s.p95);
  };
  row("detect", report.detect_ms, report.detect());
  row("classify", report.classify_ms, report.classify());
  row("total", report.total_ms, report.total());
  return kOk;
}

// Prints the probability vector of one image as exact hexadecimal floats, so
// another process can compare results bit for bit.
int cmd_classify(const ClassifyArgs& a) {
  const Model model = load_weights(a.weights);
  const GrayImage img = read_pgm(a.input);
  const Tensor probs = model.predict(preprocess(resize_bilinear(img, kFaceSize, kFaceSize)));
  for (std::size_t k = 0; k < probs.size(); ++k) std::printf("%s%a", k ? "," : "", static_cast<double>(probs[k]));
  std::printf("\n");
  return kOk;
}

void add_detect_options(CLI::App* cmd, DetectArgs& d) {
  cmd->add_option("--scale-factor", d.scale_factor, "Pyramid step between scales")->capture_default_str();
  cmd->add_option("--min-neighbors", d.min_neighbors, "Raw windows needed to keep a face")->capture_default_str();
  cmd->add_option("--min-size", d.min_size, "Smallest face side in pixels")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion and gender classification from grayscale faces"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model and write a weight archive");
  t->add_option("--task", train.task, "emotion or gender")->capture_default_str();
  t->add_option("--data", train.data, "FER CSV (emotion) or gender manifest CSV")->required();
  t->add_option("--data-root", train.data_root, "Directory manifest image paths are relative to");
  t->add_option("--model", train.model, "ensemble, mini-xception or simple-cnn");
  t->add_option("--epochs", train.epochs)->capture_default_str();
  t->add_option("--batch", train.batch)->capture_default_str();
  t->add_option("--lr", train.lr)->capture_default_str();
  t->add_option("--seed", train.seed)->capture_default_str();
  t->add_option("--out", train.out, "Archive to write")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Report accuracy, confusion and per-class scores");
  e->add_option("--weights", eval.weights)->required();
  e->add_option("--task", eval.task)->capture_default_str();
  e->add_option("--data", eval.data)->required();
  e->add_option("--data-root", eval.data_root);
  e->add_option("--split", eval.split, "FER rows to use: all, train or test")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();
  e->add_option("--batch", eval.batch)->capture_default_str();

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Detect and classify faces in PGM images");
  p->add_option("--weights-emotion", predict.weights_emotion)->required();
  p->add_option("--weights-gender", predict.weights_gender)->required();
  p->add_option("--cascade", predict.cascade)->required();
  p->add_option("--input", predict.input, "PGM file, directory of PGM files, or - for a PGM stream")->required();
  p->add_option("--annotate", predict.annotate, "Directory for copies with face boxes drawn");
  add_detect_options(p, predict.detect);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time the full pipeline on synthetic frames");
  b->add_option("--weights-emotion", bench.weights_emotion)->required();
  b->add_option("--weights-gender", bench.weights_gender)->required();
  b->add_option("--cascade", bench.cascade)->required();
  b->add_option("--frames", bench.frames)->capture_default_str();
  b->add_option("--size", bench.size, "WxH")->capture_default_str();
  b->add_option("--seed", bench.seed)->capture_default_str();
  add_detect_options(b, bench.detect);

  ClassifyArgs classify;
  auto* c = app.add_subcommand("classify", "Print class probabilities of one image as hex floats");
  c->add_option("--weights", classify.weights)->required();
  c->add_option("--input", classify.input)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*p) return cmd_predict(predict);
    if (*b) return cmd_bench(bench);
    if (*c) return cmd_classify(classify);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsage;
  } catch (const ConfigError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsage;
  } catch (const ArchiveError& err) {
    std::cerr << "archive error: " << err.what() << '\n';
    return kArchive;
  } catch (const Error& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  }
  return kUsage;
}
