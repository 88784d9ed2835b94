#include "egc/archive.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <set>

namespace egc {

namespace {

constexpr std::uint8_t kMagic[4] = {'E', 'G', 'C', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ArchiveError("archive truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_archive(const NamedTensors<float>& tensors) {
  std::set<std::string> seen;
  Writer w;
  w.raw(kMagic);
  w.u16(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (!seen.insert(name).second) throw ArchiveError("duplicate tensor name '" + name + "'");
    if (name.size() > UINT16_MAX) throw ArchiveError("tensor name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw({reinterpret_cast<const std::uint8_t*>(name.data()), name.size()});
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape().dims()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

NamedTensors<float> decode_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 4 + 4) throw ArchiveError("archive truncated");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw ArchiveError("bad archive magic");
  const auto body = bytes.first(bytes.size() - 4);
  Reader trailer(bytes.last(4));
  if (crc32(body) != trailer.u32()) throw ArchiveError("archive checksum mismatch");

  Reader r(body);
  r.raw(4);
  const std::uint16_t version = r.u16();
  if (version != kArchiveVersion) throw ArchiveError("unsupported archive version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  NamedTensors<float> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    const auto name_bytes = r.raw(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    if (!seen.insert(name).second) throw ArchiveError("duplicate tensor name '" + name + "'");
    const int rank = r.u8();
    if (rank < 1 || rank > Shape::kMaxRank) throw ArchiveError("tensor '" + name + "' has invalid rank");
    std::vector<int> dims(rank);
    std::size_t numel = 1;
    for (int& d : dims) {
      const std::uint32_t e = r.u32();
      if (e < 1 || e > static_cast<std::uint32_t>(INT32_MAX)) throw ArchiveError("tensor '" + name + "' has bad extent");
      d = static_cast<int>(e);
      numel *= e;
    }
    if (numel > r.remaining() / 4) throw ArchiveError("archive truncated");
    std::vector<float> values(numel);
    for (float& v : values) v = std::bit_cast<float>(r.u32());
    out.emplace_back(std::move(name), Tensor(Shape(std::span<const int>(dims)), std::move(values)));
  }
  if (r.remaining() != 0) throw ArchiveError("trailing bytes after last tensor");
  return out;
}

void write_archive(const std::filesystem::path& path, const NamedTensors<float>& tensors) {
  const auto bytes = encode_archive(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot write archive " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("failed writing archive " + path.string());
}

NamedTensors<float> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open archive " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  NamedTensors<float> all;
  for (const auto& m : model.members())
    for (auto& entry : m.export_state()) all.push_back(std::move(entry));
  write_archive(path, all);
}

Model model_from_tensors(const NamedTensors<float>& tensors, int input_size) {
  const Tensor* xception_head = nullptr;
  const Tensor* cnn_head = nullptr;
  for (const auto& [name, t] : tensors) {
    if (name == "mini_xception/head/bias") xception_head = &t;
    if (name == "simple_cnn/fc/bias") cnn_head = &t;
  }
  if (!xception_head && !cnn_head) throw SchemaError("archive holds no known classifier head");
  const ModelKind kind = xception_head && cnn_head ? ModelKind::Ensemble
                         : xception_head           ? ModelKind::MiniXception
                                                   : ModelKind::SimpleCnn;
  const int classes = (xception_head ? xception_head : cnn_head)->dim(0);
  if (xception_head && cnn_head && cnn_head->dim(0) != classes)
    throw SchemaError("ensemble members disagree on class count");

  Model model = build_model(kind, classes, 0, input_size);
  std::size_t used = 0;
  for (auto& member : model.members()) {
    const std::string prefix = member.name() + "/";
    NamedTensors<float> mine;
    for (const auto& [name, t] : tensors)
      if (name.starts_with(prefix)) mine.emplace_back(name, t);
    used += mine.size();
    member.import_state(mine);
  }
  if (used != tensors.size()) throw SchemaError("archive holds tensors outside the model");
  return model;
}

Model load_weights(const std::filesystem::path& path, int input_size) {
  return model_from_tensors(read_archive(path), input_size);
}

}  // namespace egc
