#include "egc/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace egc {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t'))
    s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename N>
std::optional<N> parse_number(std::string_view s) {
  s = trim(s);
  N v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void expect_header(std::istream& in, std::string_view expected) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file, expected header '" + std::string(expected) + "'");
  std::string_view h = trim(line);
  if (h.starts_with("\xEF\xBB\xBF")) h.remove_prefix(3);
  if (h != expected) throw DataError("bad header '" + std::string(h) + "', expected '" + std::string(expected) + "'");
}

}  // namespace

std::string_view to_string(FerUsage usage) {
  switch (usage) {
    case FerUsage::Training: return "Training";
    case FerUsage::PublicTest: return "PublicTest";
    case FerUsage::PrivateTest: return "PrivateTest";
  }
  return "unknown";
}

std::vector<FerSample> parse_fer_csv(std::istream& in) {
  expect_header(in, "emotion,pixels,Usage");
  std::vector<FerSample> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split(trim(line), ',');
    if (fields.size() != 3)
      throw ParseError(row, "expected 3 columns, got " + std::to_string(fields.size()));
    FerSample s{};
    const auto emotion = parse_number<int>(fields[0]);
    if (!emotion || !emotion_from_index(*emotion))
      throw ParseError(row, "emotion '" + std::string(fields[0]) + "' is not in [0,6]");
    s.label = *emotion_from_index(*emotion);

    std::string_view px = trim(fields[1]);
    std::size_t count = 0;
    const char* p = px.data();
    const char* end = px.data() + px.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      int v = -1;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' '))
        throw ParseError(row, "non-integer pixel value at position " + std::to_string(count + 1));
      if (v < 0 || v > 255) throw ParseError(row, "pixel value " + std::to_string(v) + " outside [0,255]");
      if (count < static_cast<std::size_t>(kFerPixels)) s.pixels[count] = static_cast<std::uint8_t>(v);
      ++count;
      p = next;
    }
    if (count != static_cast<std::size_t>(kFerPixels))
      throw ParseError(row, "expected " + std::to_string(kFerPixels) + " pixels, got " + std::to_string(count));

    const std::string_view usage = trim(fields[2]);
    if (usage == "Training") s.usage = FerUsage::Training;
    else if (usage == "PublicTest") s.usage = FerUsage::PublicTest;
    else if (usage == "PrivateTest") s.usage = FerUsage::PrivateTest;
    else throw ParseError(row, "unknown usage '" + std::string(usage) + "'");
    out.push_back(s);
  }
  return out;
}

std::vector<FerSample> load_fer_csv(const std::filesystem::path& path) {
  auto in = open_text(path);
  return parse_fer_csv(in);
}

bool keep_gender_row(const GenderManifestRow& row) {
  return std::isfinite(row.face_score) && row.face_score >= 3.0 && !row.second_face_score.has_value();
}

std::vector<GenderManifestRow> parse_gender_manifest(std::istream& in) {
  expect_header(in, "path,gender,face_score,second_face_score");
  std::vector<GenderManifestRow> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::string_view l = line;
    while (!l.empty() && (l.back() == '\r' || l.back() == '\n')) l.remove_suffix(1);
    if (trim(l).empty()) continue;
    ++row;
    // The path may itself contain commas, so the three numeric fields are
    // taken from the right.
    const auto c3 = l.rfind(',');
    const auto c2 = c3 == std::string_view::npos || c3 == 0 ? std::string_view::npos : l.rfind(',', c3 - 1);
    const auto c1 = c2 == std::string_view::npos || c2 == 0 ? std::string_view::npos : l.rfind(',', c2 - 1);
    if (c1 == std::string_view::npos) throw ParseError(row, "expected 4 columns");
    GenderManifestRow r;
    r.image_path = std::string(trim(l.substr(0, c1)));
    if (r.image_path.empty()) throw ParseError(row, "empty image path");

    const auto gender = parse_number<double>(l.substr(c1 + 1, c2 - c1 - 1));
    if (!gender || (*gender != 0.0 && *gender != 1.0))
      throw ParseError(row, "gender must be 0 or 1");
    r.gender = *gender == 0.0 ? GenderLabel::Female : GenderLabel::Male;

    const std::string_view score = trim(l.substr(c2 + 1, c3 - c2 - 1));
    if (score == "-inf" || score == "-Inf") {
      r.face_score = -INFINITY;
    } else {
      const auto v = parse_number<double>(score);
      if (!v || std::isnan(*v)) throw ParseError(row, "face_score '" + std::string(score) + "' is not a number");
      r.face_score = *v;
    }

    const std::string_view second = trim(l.substr(c3 + 1));
    if (!second.empty() && second != "nan" && second != "NaN") {
      const auto v = parse_number<double>(second);
      if (!v) throw ParseError(row, "second_face_score '" + std::string(second) + "' is not a number");
      if (!std::isnan(*v)) r.second_face_score = *v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GenderManifestRow> load_gender_manifest(const std::filesystem::path& path) {
  auto in = open_text(path);
  auto rows = parse_gender_manifest(in);
  std::erase_if(rows, [](const GenderManifestRow& r) { return !keep_gender_row(r); });
  return rows;
}

// ---- PGM -----------------------------------------------------------------

GrayImage::GrayImage(int h, int w, std::uint8_t fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
  if (h < 1 || w < 1) throw ShapeError("image extents must be >= 1");
}

namespace {

// Reads one header token, skipping whitespace and '#' comments.
template <typename Next>
std::string header_token(Next&& next) {
  std::string tok;
  int c;
  for (;;) {
    c = next();
    if (c < 0) return tok;
    if (c == '#') {
      while (c >= 0 && c != '\n') c = next();
      continue;
    }
    if (!std::isspace(c)) break;
  }
  while (c >= 0 && !std::isspace(c) && c != '#') {
    tok.push_back(static_cast<char>(c));
    c = next();
  }
  // The single whitespace byte after the token is consumed here, which after
  // maxval is exactly the separator before the raster.
  return tok;
}

template <typename Next>
std::optional<std::pair<int, int>> read_pgm_header(Next&& next, bool allow_eof) {
  const std::string magic = header_token(next);
  if (magic.empty() && allow_eof) return std::nullopt;
  if (magic != "P5") throw DecodeError("unsupported image format '" + magic + "', expected binary PGM (P5)");
  int dims[3];
  const char* names[3] = {"width", "height", "maxval"};
  for (int i = 0; i < 3; ++i) {
    const std::string tok = header_token(next);
    const auto v = parse_number<int>(tok);
    if (!v || *v < 1) throw DecodeError(std::string("bad PGM ") + names[i] + " '" + tok + "'");
    dims[i] = *v;
  }
  if (dims[2] != 255) throw DecodeError("PGM maxval must be 255, got " + std::to_string(dims[2]));
  return std::make_pair(dims[1], dims[0]);
}

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next = [&]() -> int { return pos < bytes.size() ? bytes[pos++] : -1; };
  const auto [h, w] = *read_pgm_header(next, false);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (bytes.size() - pos < n) throw DecodeError("PGM payload truncated");
  GrayImage img(h, w);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), n, img.pixels.begin());
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

std::optional<GrayImage> read_pgm_frame(std::istream& in) {
  auto next = [&]() -> int {
    const int c = in.get();
    return c == std::char_traits<char>::eof() ? -1 : c;
  };
  const auto header = read_pgm_header(next, true);
  if (!header) return std::nullopt;
  GrayImage img(header->first, header->second);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) throw DecodeError("PGM frame truncated");
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayImage crop(const GrayImage& image, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > image.width || y + h > image.height)
    throw BoundsError("crop box outside image");
  GrayImage out(h, w);
  for (int r = 0; r < h; ++r)
    std::copy_n(&image.pixels[static_cast<std::size_t>(y + r) * image.width + x], w, &out.at(r, 0));
  return out;
}

// ---- resize / preprocess -------------------------------------------------

namespace {

template <typename Sample>
FloatImage resize_impl(int in_h, int in_w, int out_h, int out_w, Sample&& sample) {
  if (in_h < 1 || in_w < 1 || out_h < 1 || out_w < 1) throw ShapeError("resize: extents must be >= 1");
  FloatImage out{out_h, out_w, std::vector<float>(static_cast<std::size_t>(out_h) * out_w)};
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    const double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double ty = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      const double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double tx = fx - x0;
      const double top = sample(y0, x0) * (1 - tx) + sample(y0, x1) * tx;
      const double bottom = sample(y1, x0) * (1 - tx) + sample(y1, x1) * tx;
      out.pixels[static_cast<std::size_t>(i) * out_w + j] = static_cast<float>(top * (1 - ty) + bottom * ty);
    }
  }
  return out;
}

}  // namespace

FloatImage resize_bilinear(const GrayImage& image, int out_h, int out_w) {
  return resize_impl(image.height, image.width, out_h, out_w,
                     [&](int y, int x) { return static_cast<double>(image.at(y, x)); });
}

FloatImage resize_bilinear(const FloatImage& image, int out_h, int out_w) {
  return resize_impl(image.height, image.width, out_h, out_w,
                     [&](int y, int x) { return static_cast<double>(image.at(y, x)); });
}

Tensor preprocess(const FloatImage& face) {
  if (face.height != kFaceSize || face.width != kFaceSize)
    throw ShapeError("preprocess expects a 48x48 face, got " + std::to_string(face.height) + "x" +
                     std::to_string(face.width));
  Tensor t(Shape{1, 1, kFaceSize, kFaceSize});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normalize_pixel(face.pixels[i]);
  return t;
}

LabeledSample to_sample(const FerSample& s) {
  FloatImage face{kFaceSize, kFaceSize, std::vector<float>(s.pixels.begin(), s.pixels.end())};
  return LabeledSample{preprocess(face), static_cast<int>(s.label)};
}

Dataset to_dataset(std::span<const FerSample> samples) {
  Dataset out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(to_sample(s));
  return out;
}

Dataset gender_dataset(std::span<const GenderManifestRow> rows, const std::filesystem::path& root) {
  Dataset out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    std::filesystem::path p(r.image_path);
    if (p.is_relative()) p = root / p;
    const GrayImage img = read_pgm(p);
    out.push_back(LabeledSample{preprocess(resize_bilinear(img, kFaceSize, kFaceSize)), static_cast<int>(r.gender)});
  }
  return out;
}

}  // namespace egc
