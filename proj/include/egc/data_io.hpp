#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egc/labels.hpp"
#include "egc/tensor.hpp"

namespace egc {

inline constexpr int kFerPixels = kFaceSize * kFaceSize;

enum class FerUsage { Training, PublicTest, PrivateTest };

std::string_view to_string(FerUsage usage);

struct FerSample {
  std::array<std::uint8_t, kFerPixels> pixels;
  EmotionLabel label;
  FerUsage usage;
};

// Header `emotion,pixels,Usage`. Pixels stay as raw bytes. Throws ParseError
// naming the data row (header excluded, counted from 1).
std::vector<FerSample> parse_fer_csv(std::istream& in);
std::vector<FerSample> load_fer_csv(const std::filesystem::path& path);

struct GenderManifestRow {
  std::string image_path;
  GenderLabel gender;
  double face_score;
  std::optional<double> second_face_score;
};

// Single frontal face: face_score >= 3 and no second face.
bool keep_gender_row(const GenderManifestRow& row);

// Header `path,gender,face_score,second_face_score`; an empty (or NaN) last
// field means no second face. Returns every row, unfiltered.
std::vector<GenderManifestRow> parse_gender_manifest(std::istream& in);
// Parsed and filtered with keep_gender_row, order preserved.
std::vector<GenderManifestRow> load_gender_manifest(const std::filesystem::path& path);

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int h, int w, std::uint8_t fill = 0);
  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct FloatImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Binary PGM (P5) with maxval 255. Throws DecodeError otherwise.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
GrayImage read_pgm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
// Next frame of a concatenated PGM stream; nullopt at a clean end of stream.
std::optional<GrayImage> read_pgm_frame(std::istream& in);

GrayImage crop(const GrayImage& image, int x, int y, int w, int h);

// Half-pixel-centred bilinear sampling: source = (i + 0.5) * in/out - 0.5,
// clamped to the image.
FloatImage resize_bilinear(const GrayImage& image, int out_h, int out_w);
FloatImage resize_bilinear(const FloatImage& image, int out_h, int out_w);

// Pixel scale [0,255] -> model scale [-1,1], and back.
constexpr float normalize_pixel(float v) { return (v / 255.0f - 0.5f) * 2.0f; }
constexpr float restore_pixel(float v) { return (v / 2.0f + 0.5f) * 255.0f; }

// 48x48 pixel-scale face -> [1,1,48,48] model input.
Tensor preprocess(const FloatImage& face);

struct LabeledSample {
  Tensor image;  // [1,1,48,48]
  int label = 0;
};

using Dataset = std::vector<LabeledSample>;

LabeledSample to_sample(const FerSample& s);
Dataset to_dataset(std::span<const FerSample> samples);

// Decodes each manifest image (paths relative to `root` unless absolute),
// resizes to 48x48 and preprocesses.
Dataset gender_dataset(std::span<const GenderManifestRow> rows, const std::filesystem::path& root);

}  // namespace egc
