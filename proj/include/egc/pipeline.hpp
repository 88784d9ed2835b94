#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "egc/face_detect.hpp"
#include "egc/model_zoo.hpp"

namespace egc {

inline constexpr double kCropMargin = 0.10;

// Detector box grown by 10% of its size on every side, clamped to the image.
Box expand_box(const Detection& det, int image_h, int image_w);

// Expanded crop -> 48x48 bilinear resize -> [1,1,48,48] model input.
Tensor face_input(const GrayImage& image, const Detection& det);

struct FaceResult {
  Detection box;
  EmotionPrediction emotion;
  GenderPrediction gender;
};

struct PipelineResult {
  std::vector<FaceResult> faces;
  double detect_ms = 0;
  double classify_ms = 0;
  double total_ms = 0;
};

class Pipeline {
 public:
  // Throws ConfigError when the emotion model is not 7-way or the gender
  // model is not 2-way.
  Pipeline(Model emotion, Model gender, CascadeModel cascade, DetectParams params = {});

  const Model& emotion_model() const noexcept { return emotion_; }
  const Model& gender_model() const noexcept { return gender_; }
  const CascadeModel& cascade() const noexcept { return cascade_; }

  std::vector<Detection> detect(const GrayImage& frame) const;
  FaceResult classify(const GrayImage& frame, const Detection& det) const;
  // Faces in detector order (y, x, w, h).
  PipelineResult process(const GrayImage& frame) const;

 private:
  Model emotion_;
  Model gender_;
  CascadeModel cascade_;
  DetectParams params_;
};

// `frame,x,y,w,h,emotion,emotion_conf,gender,gender_conf,latency_ms`
std::string format_face_line(std::int64_t frame, const FaceResult& face, double latency_ms);

// White 1-pixel outline of each detector box.
void draw_boxes(GrayImage& image, const std::vector<FaceResult>& faces);

// Smooth random shading plus pixel noise; a stand-in camera frame.
GrayImage synthetic_frame(int height, int width, std::uint64_t seed);

struct LatencyStats {
  double min = 0, median = 0, p95 = 0;
};

// Nearest-rank percentiles. Throws DataError on an empty sample.
LatencyStats summarize(std::vector<double> samples_ms);

struct BenchReport {
  std::vector<double> detect_ms, classify_ms, total_ms;
  int faces = 0;
  LatencyStats detect() const { return summarize(detect_ms); }
  LatencyStats classify() const { return summarize(classify_ms); }
  LatencyStats total() const { return summarize(total_ms); }
};

// Synthetic frames rarely contain a face, so a frame without detections has
// its centre window classified instead; every sample then pays for both heads.
BenchReport run_bench(const Pipeline& pipeline, int frames, int height, int width, std::uint64_t seed = 1);

}  // namespace egc
