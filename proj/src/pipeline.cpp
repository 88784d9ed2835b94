#include "egc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "egc/error.hpp"
#include "egc/rng.hpp"

namespace egc {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

Box expand_box(const Detection& det, int image_h, int image_w) {
  const int mx = static_cast<int>(std::lround(det.w * kCropMargin));
  const int my = static_cast<int>(std::lround(det.h * kCropMargin));
  const int x0 = std::max(0, det.x - mx), y0 = std::max(0, det.y - my);
  const int x1 = std::min(image_w, det.x + det.w + mx), y1 = std::min(image_h, det.y + det.h + my);
  return {x0, y0, x1 - x0, y1 - y0};
}

Tensor face_input(const GrayImage& image, const Detection& det) {
  const Box b = expand_box(det, image.height, image.width);
  if (b.w < 1 || b.h < 1) throw BoundsError("face box lies outside the image");
  return preprocess(resize_bilinear(crop(image, b.x, b.y, b.w, b.h), kFaceSize, kFaceSize));
}

Pipeline::Pipeline(Model emotion, Model gender, CascadeModel cascade, DetectParams params)
    : emotion_(std::move(emotion)), gender_(std::move(gender)), cascade_(std::move(cascade)), params_(params) {
  if (emotion_.class_count() != kEmotionClasses) throw ConfigError("emotion model must have 7 classes");
  if (gender_.class_count() != kGenderClasses) throw ConfigError("gender model must have 2 classes");
  cascade_.validate();
}

std::vector<Detection> Pipeline::detect(const GrayImage& frame) const {
  return detect_faces(cascade_, frame, params_);
}

FaceResult Pipeline::classify(const GrayImage& frame, const Detection& det) const {
  const Tensor face = face_input(frame, det);
  return {det, predict_emotion(emotion_, face), predict_gender(gender_, face)};
}

PipelineResult Pipeline::process(const GrayImage& frame) const {
  PipelineResult result;
  const auto t0 = Clock::now();
  const auto boxes = detect(frame);
  const auto t1 = Clock::now();
  for (const Detection& d : boxes) result.faces.push_back(classify(frame, d));
  const auto t2 = Clock::now();
  result.detect_ms = elapsed_ms(t0, t1);
  result.classify_ms = elapsed_ms(t1, t2);
  result.total_ms = elapsed_ms(t0, t2);
  return result;
}

std::string format_face_line(std::int64_t frame, const FaceResult& f, double latency_ms) {
  const int e = static_cast<int>(f.emotion.label);
  const int g = static_cast<int>(f.gender.label);
  char buf[192];
  std::snprintf(buf, sizeof buf, "%lld,%d,%d,%d,%d,%s,%.4f,%s,%.4f,%.3f", static_cast<long long>(frame), f.box.x,
                f.box.y, f.box.w, f.box.h, std::string(to_string(f.emotion.label)).c_str(), f.emotion.probs[e],
                std::string(to_string(f.gender.label)).c_str(), f.gender.probs[g], latency_ms);
  return buf;
}

void draw_boxes(GrayImage& image, const std::vector<FaceResult>& faces) {
  auto plot = [&](int y, int x) {
    if (y >= 0 && y < image.height && x >= 0 && x < image.width) image.at(y, x) = 255;
  };
  for (const auto& f : faces) {
    const auto& b = f.box;
    for (int x = b.x; x < b.x + b.w; ++x) {
      plot(b.y, x);
      plot(b.y + b.h - 1, x);
    }
    for (int y = b.y; y < b.y + b.h; ++y) {
      plot(y, b.x);
      plot(y, b.x + b.w - 1);
    }
  }
}

GrayImage synthetic_frame(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw ConfigError("frame size must be positive");
  Rng rng(seed);
  struct Blob {
    double cy, cx, radius, amplitude;
  };
  std::vector<Blob> blobs(12);
  for (auto& b : blobs)
    b = {rng.uniform(0, height), rng.uniform(0, width), rng.uniform(10, 80), rng.uniform(-90, 90)};
  GrayImage img(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double v = 128;
      for (const auto& b : blobs) {
        const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
        v += b.amplitude * std::exp(-d2 / (2 * b.radius * b.radius));
      }
      v += rng.uniform(-12, 12);
      img.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return img;
}

LatencyStats summarize(std::vector<double> s) {
  if (s.empty()) throw DataError("no latency samples");
  std::sort(s.begin(), s.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.size())));
    return s[std::clamp<std::size_t>(r, 1, s.size()) - 1];
  };
  return {s.front(), rank(0.5), rank(0.95)};
}

BenchReport run_bench(const Pipeline& pipeline, int frames, int height, int width, std::uint64_t seed) {
  if (frames < 1) throw ConfigError("bench needs at least one frame");
  BenchReport report;
  for (int i = 0; i < frames; ++i) {
    const GrayImage frame = synthetic_frame(height, width, seed + static_cast<std::uint64_t>(i));
    const auto t0 = Clock::now();
    auto boxes = pipeline.detect(frame);
    const auto t1 = Clock::now();
    report.faces += static_cast<int>(boxes.size());
    if (boxes.empty()) {
      const int side = std::min(height, width) / 2;
      boxes.push_back({(width - side) / 2, (height - side) / 2, side, side, 0.0f});
    }
    for (const auto& d : boxes) pipeline.classify(frame, d);
    const auto t2 = Clock::now();
    report.detect_ms.push_back(elapsed_ms(t0, t1));
    report.classify_ms.push_back(elapsed_ms(t1, t2));
    report.total_ms.push_back(elapsed_ms(t0, t2));
  }
  return report;
}

}  // namespace egc
