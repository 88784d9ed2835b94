#include "egc/face_detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "egc/error.hpp"

namespace egc {

IntegralImage::IntegralImage(const GrayImage& image)
    : height_(image.height),
      width_(image.width),
      sum_(static_cast<std::size_t>(image.height + 1) * (image.width + 1), 0),
      sq_(sum_.size(), 0) {
  for (int y = 0; y < height_; ++y) {
    std::int64_t row = 0, row_sq = 0;
    for (int x = 0; x < width_; ++x) {
      const std::int64_t v = image.at(y, x);
      row += v;
      row_sq += v * v;
      sum_[index(y + 1, x + 1)] = sum_[index(y, x + 1)] + row;
      sq_[index(y + 1, x + 1)] = sq_[index(y, x + 1)] + row_sq;
    }
  }
}

IntegralImage integral_image(const GrayImage& image) { return IntegralImage(image); }

void CascadeModel::validate() const {
  if (window_w < 1 || window_h < 1) throw ConfigError("cascade window must be positive");
  if (stages.empty()) throw ConfigError("cascade has no stages");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (stages[s].weak.empty()) throw ConfigError("cascade stage " + std::to_string(s) + " is empty");
    for (const auto& weak : stages[s].weak) {
      if (weak.rects.empty()) throw ConfigError("weak classifier without rectangles");
      for (const auto& r : weak.rects) {
        if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > window_w || r.y + r.h > window_h)
          throw ConfigError("cascade rectangle outside the detection window");
      }
    }
  }
}

CascadeModel parse_cascade(std::string_view json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DecodeError(std::string("cascade is not valid JSON: ") + e.what());
  }
  CascadeModel cascade;
  try {
    cascade.window_w = doc.at("window_w").get<int>();
    cascade.window_h = doc.at("window_h").get<int>();
    for (const auto& js : doc.at("stages")) {
      CascadeStage stage;
      stage.threshold = js.at("threshold").get<double>();
      for (const auto& jw : js.at("weak")) {
        WeakClassifier weak;
        weak.threshold = jw.at("threshold").get<double>();
        weak.left = jw.at("left").get<double>();
        weak.right = jw.at("right").get<double>();
        for (const auto& jr : jw.at("rects")) {
          if (!jr.is_array() || jr.size() != 5) throw DecodeError("cascade rectangle must have 5 entries");
          weak.rects.push_back({jr[0].get<int>(), jr[1].get<int>(), jr[2].get<int>(), jr[3].get<int>(),
                                jr[4].get<double>()});
        }
        stage.weak.push_back(std::move(weak));
      }
      cascade.stages.push_back(std::move(stage));
    }
  } catch (const json::exception& e) {
    throw DecodeError(std::string("malformed cascade: ") + e.what());
  }
  cascade.validate();
  return cascade;
}

CascadeModel load_cascade(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cascade " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_cascade(text.str());
}

std::string cascade_to_json(const CascadeModel& cascade) {
  using nlohmann::json;
  json doc;
  doc["window_w"] = cascade.window_w;
  doc["window_h"] = cascade.window_h;
  json stages = json::array();
  for (const auto& stage : cascade.stages) {
    json weak = json::array();
    for (const auto& w : stage.weak) {
      json rects = json::array();
      for (const auto& r : w.rects) rects.push_back({r.x, r.y, r.w, r.h, r.weight});
      weak.push_back({{"rects", rects}, {"threshold", w.threshold}, {"left", w.left}, {"right", w.right}});
    }
    stages.push_back({{"threshold", stage.threshold}, {"weak", weak}});
  }
  doc["stages"] = stages;
  return doc.dump();
}

ScaledCascade::ScaledCascade(const CascadeModel& cascade, double scale, int image_width)
    : scale_(scale),
      window_w_(static_cast<int>(std::lround(cascade.window_w * scale))),
      window_h_(static_cast<int>(std::lround(cascade.window_h * scale))),
      stride_(image_width + 1) {
  auto scaled = [&](const HaarRect& r) {
    Rect s{static_cast<int>(std::lround(r.x * scale)), static_cast<int>(std::lround(r.y * scale)),
           static_cast<int>(std::lround(r.w * scale)), static_cast<int>(std::lround(r.h * scale)), r.weight};
    s.w = std::clamp(s.w, 1, window_w_ - s.x);
    s.h = std::clamp(s.h, 1, window_h_ - s.y);
    return s;
  };

  // Variance is measured on the window minus a one-pixel border, as the
  // public cascades were trained that way.
  if (cascade.window_w > 2 && cascade.window_h > 2)
    norm_ = scaled({1, 1, cascade.window_w - 2, cascade.window_h - 2, 1.0});
  else
    norm_ = {0, 0, window_w_, window_h_, 1.0};

  for (const auto& stage : cascade.stages) {
    stages_.push_back({static_cast<std::uint32_t>(weak_.size()), static_cast<std::uint32_t>(stage.weak.size()),
                       stage.threshold});
    for (const auto& weak : stage.weak) {
      const auto first = static_cast<std::uint32_t>(rects_.size());
      double base_balance = 0, base_magnitude = 0;
      for (const auto& r : weak.rects) {
        const double a = r.weight * r.w * r.h;
        base_balance += a;
        base_magnitude += std::abs(a);
        rects_.push_back(scaled(r));
      }
      // Rounding breaks the zero-sum balance of edge features; restore it by
      // re-deriving the first weight from the others.
      if (weak.rects.size() >= 2 && std::abs(base_balance) <= 1e-9 * base_magnitude) {
        double rest = 0;
        for (std::size_t i = first + 1; i < rects_.size(); ++i)
          rest += rects_[i].weight * rects_[i].w * rects_[i].h;
        rects_[first].weight = -rest / (static_cast<double>(rects_[first].w) * rects_[first].h);
      }
      weak_.push_back({first, static_cast<std::uint32_t>(weak.rects.size()), weak.threshold, weak.left, weak.right});
    }
  }
  norm_corners_ = corners(norm_);
  norm_area_ = static_cast<double>(norm_.w) * norm_.h;
  for (const Rect& r : rects_) rect_corners_.push_back(corners(r));
}

ScaledCascade::Corners ScaledCascade::corners(const Rect& r) const {
  const std::ptrdiff_t top = r.y * stride_, bottom = (r.y + r.h) * stride_;
  return {top + r.x, top + r.x + r.w, bottom + r.x, bottom + r.x + r.w};
}

bool ScaledCascade::accepts(const IntegralImage& ii, int x, int y) const {
  const std::ptrdiff_t origin = y * stride_ + x;
  auto box = [origin](const std::int64_t* t, const Corners& c) {
    const std::int64_t* p = t + origin;
    return p[c.br] - p[c.tr] - p[c.bl] + p[c.tl];
  };
  const auto s = static_cast<double>(box(ii.sum_data(), norm_corners_));
  const auto sq = static_cast<double>(box(ii.sq_data(), norm_corners_));
  const double var = (norm_area_ * sq - s * s) / (norm_area_ * norm_area_);
  const double stddev = var > 1.0 ? std::sqrt(var) : 1.0;
  const double bound = stddev * norm_area_;

  const std::int64_t* sums = ii.sum_data();
  for (const auto& stage : stages_) {
    double total = 0;
    for (std::uint32_t k = 0; k < stage.weak_count; ++k) {
      const Weak& w = weak_[stage.first_weak + k];
      double f = 0;
      for (std::uint32_t j = w.first_rect; j < w.first_rect + w.rect_count; ++j)
        f += rects_[j].weight * static_cast<double>(box(sums, rect_corners_[j]));
      total += f < w.threshold * bound ? w.left : w.right;
    }
    if (total < stage.threshold) return false;
  }
  return true;
}

bool eval_window(const CascadeModel& cascade, const IntegralImage& ii, int x, int y, double scale) {
  const ScaledCascade sc(cascade, scale, ii.width());
  if (x < 0 || y < 0 || x + sc.window_w() > ii.width() || y + sc.window_h() > ii.height())
    throw BoundsError("detection window outside the image");
  return sc.accepts(ii, x, y);
}

double iou(const Box& a, const Box& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Detection> group_boxes(std::span<const Box> raw, int min_neighbors) {
  const std::size_t n = raw.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (iou(raw[i], raw[j]) >= kGroupIou) {
        const std::size_t a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  struct Acc {
    std::int64_t x = 0, y = 0, w = 0, h = 0, n = 0;
  };
  std::vector<Acc> acc(n);
  for (std::size_t i = 0; i < n; ++i) {
    Acc& a = acc[find(i)];
    a.x += raw[i].x;
    a.y += raw[i].y;
    a.w += raw[i].w;
    a.h += raw[i].h;
    ++a.n;
  }

  const std::int64_t keep = std::max(1, min_neighbors);
  std::vector<Detection> out;
  for (const Acc& a : acc) {
    if (a.n < keep) continue;
    auto mean = [&](std::int64_t v) { return static_cast<int>(std::llround(static_cast<double>(v) / a.n)); };
    out.push_back({mean(a.x), mean(a.y), mean(a.w), mean(a.h), static_cast<float>(a.n)});
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return std::tie(a.y, a.x, a.w, a.h) < std::tie(b.y, b.x, b.w, b.h);
  });
  return out;
}

std::vector<Box> scan_windows(const CascadeModel& cascade, const GrayImage& image, const DetectParams& params) {
  if (!(params.scale_factor > 1.0)) throw ConfigError("scale_factor must exceed 1");
  std::vector<Box> raw;
  if (image.height < 1 || image.width < 1) return raw;
  const IntegralImage ii(image);
  const int base = std::min(cascade.window_w, cascade.window_h);
  double scale = std::max(1.0, static_cast<double>(params.min_size) / base);
  for (;; scale *= params.scale_factor) {
    const ScaledCascade sc(cascade, scale, image.width);
    if (sc.window_w() > image.width || sc.window_h() > image.height) break;
    if (sc.window_w() < params.min_size || sc.window_h() < params.min_size) continue;
    const int step = std::max(1, static_cast<int>(std::lround(2.0 * scale)));
    for (int y = 0; y + sc.window_h() <= image.height; y += step)
      for (int x = 0; x + sc.window_w() <= image.width; x += step)
        if (sc.accepts(ii, x, y)) raw.push_back({x, y, sc.window_w(), sc.window_h()});
  }
  return raw;
}

std::vector<Detection> detect_faces(const CascadeModel& cascade, const GrayImage& image, const DetectParams& params) {
  const auto raw = scan_windows(cascade, image, params);
  return group_boxes(raw, params.min_neighbors);
}

}  // namespace egc
