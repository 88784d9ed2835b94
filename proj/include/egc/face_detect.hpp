#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "egc/data_io.hpp"

namespace egc {

// (H+1) x (W+1) table; sum(y, x) is the total of pixels above and left of
// (y, x). A second table holds squared pixels for window variance.
class IntegralImage {
 public:
  IntegralImage() = default;
  explicit IntegralImage(const GrayImage& image);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::int64_t sum(int y, int x) const { return sum_[index(y, x)]; }
  const std::int64_t* sum_data() const noexcept { return sum_.data(); }
  const std::int64_t* sq_data() const noexcept { return sq_.data(); }
  std::int64_t sq_sum(int y, int x) const { return sq_[index(y, x)]; }

  // Sum over rows [y, y+h) and columns [x, x+w) from four lookups.
  std::int64_t box_sum(int x, int y, int w, int h) const {
    return sum(y + h, x + w) - sum(y, x + w) - sum(y + h, x) + sum(y, x);
  }
  std::int64_t box_sq_sum(int x, int y, int w, int h) const {
    return sq_sum(y + h, x + w) - sq_sum(y, x + w) - sq_sum(y + h, x) + sq_sum(y, x);
  }

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * (width_ + 1) + x; }

  int height_ = 0, width_ = 0;
  std::vector<std::int64_t> sum_, sq_;
};

IntegralImage integral_image(const GrayImage& image);

struct HaarRect {
  int x = 0, y = 0, w = 0, h = 0;
  double weight = 0;
};

struct WeakClassifier {
  std::vector<HaarRect> rects;
  double threshold = 0;
  double left = 0;   // emitted when the normalized feature is below threshold
  double right = 0;
};

struct CascadeStage {
  double threshold = 0;
  std::vector<WeakClassifier> weak;
};

struct CascadeModel {
  int window_w = 0, window_h = 0;
  std::vector<CascadeStage> stages;

  // Throws ConfigError when a rectangle leaves the window or a stage is empty.
  void validate() const;
};

// JSON: {"window_w", "window_h", "stages": [{"threshold", "weak": [{"rects":
// [[x,y,w,h,weight], ...], "threshold", "left", "right"}]}]}
CascadeModel parse_cascade(std::string_view json_text);
CascadeModel load_cascade(const std::filesystem::path& path);
std::string cascade_to_json(const CascadeModel& cascade);

// A cascade with its rectangles scaled to one pyramid level and resolved to
// integral-image offsets for images of one width.
class ScaledCascade {
 public:
  ScaledCascade(const CascadeModel& cascade, double scale, int image_width);

  int window_w() const noexcept { return window_w_; }
  int window_h() const noexcept { return window_h_; }
  double scale() const noexcept { return scale_; }

  // Caller guarantees the window fits inside the integral image.
  bool accepts(const IntegralImage& ii, int x, int y) const;

 private:
  struct Rect {
    int x, y, w, h;
    double weight;
  };
  // Corner offsets relative to the window origin: top-left, top-right,
  // bottom-left, bottom-right.
  struct Corners {
    std::ptrdiff_t tl, tr, bl, br;
  };
  Corners corners(const Rect& r) const;
  struct Weak {
    std::uint32_t first_rect, rect_count;
    double threshold, left, right;
  };
  struct Stage {
    std::uint32_t first_weak, weak_count;
    double threshold;
  };

  double scale_;
  int window_w_, window_h_;
  std::ptrdiff_t stride_;
  Rect norm_;  // variance-normalization region inside the window
  Corners norm_corners_;
  double norm_area_;
  std::vector<Rect> rects_;
  std::vector<Corners> rect_corners_;
  std::vector<Weak> weak_;
  std::vector<Stage> stages_;
};

// Evaluates every stage at (x, y) with the window scaled by `scale`.
// Throws BoundsError when the scaled window leaves the image.
bool eval_window(const CascadeModel& cascade, const IntegralImage& ii, int x, int y, double scale);

struct Box {
  int x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  int x = 0, y = 0, w = 0, h = 0;
  float score = 0;  // number of raw windows merged into this box
  friend bool operator==(const Detection&, const Detection&) = default;
};

inline constexpr double kGroupIou = 0.3;

double iou(const Box& a, const Box& b);

// Connected components under IoU >= 0.3; each component of at least
// max(1, min_neighbors) boxes yields its coordinate-wise mean box. Output is
// sorted by (y, x, w, h).
std::vector<Detection> group_boxes(std::span<const Box> raw, int min_neighbors);

struct DetectParams {
  double scale_factor = 1.1;
  int min_neighbors = 3;
  int min_size = 30;
};

// Raw accepted windows across the scale pyramid, ordered by (scale, y, x).
// The scan stride is max(1, round(2 * scale)) pixels, so the sampling grid
// scales with the window.
std::vector<Box> scan_windows(const CascadeModel& cascade, const GrayImage& image, const DetectParams& params);

std::vector<Detection> detect_faces(const CascadeModel& cascade, const GrayImage& image,
                                    const DetectParams& params = {});

}  // namespace egc
