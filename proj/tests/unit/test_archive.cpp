#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string_view>

#include "egc/archive.hpp"
#include "egc/error.hpp"
#include "oracles.hpp"

using namespace egc;

namespace {

// Bit-at-a-time reflected CRC-32, independent of zlib.
std::uint32_t crc32_bitwise(std::span<const std::uint8_t> bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::uint8_t b : bytes) {
    crc ^= b;
    for (int i = 0; i < 8; ++i) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void seal(std::vector<std::uint8_t>& out) { put_u32(out, crc32_bitwise(out)); }

std::filesystem::path temp_path(std::string_view name) {
  return std::filesystem::temp_directory_path() / ("egc_test_" + std::string(name));
}

Tensor probe_input() {
  Rng rng(99);
  return oracle::random_tensor<float>(Shape{2, 1, 48, 48}, rng);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("crc32 check value and bitwise oracle") {
  const std::string_view check = "123456789";
  const auto* p = reinterpret_cast<const std::uint8_t*>(check.data());
  CHECK(crc32({p, check.size()}) == 0xCBF43926u);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> bytes(rng.below(300));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
    CHECK(crc32(bytes) == crc32_bitwise(bytes));
  }
}

TEST_CASE("encoder matches a hand-assembled archive") {
  NamedTensors<float> tensors;
  tensors.emplace_back("a", Tensor(Shape{2}, {1.0f, -2.5f}));
  tensors.emplace_back("bc", Tensor(Shape{1, 1}, {0.25f}));

  std::vector<std::uint8_t> want{'E', 'G', 'C', '1'};
  put_u16(want, 1);
  put_u32(want, 2);
  put_u16(want, 1);
  want.push_back('a');
  want.push_back(1);
  put_u32(want, 2);
  put_u32(want, std::bit_cast<std::uint32_t>(1.0f));
  put_u32(want, std::bit_cast<std::uint32_t>(-2.5f));
  put_u16(want, 2);
  want.push_back('b');
  want.push_back('c');
  want.push_back(2);
  put_u32(want, 1);
  put_u32(want, 1);
  put_u32(want, std::bit_cast<std::uint32_t>(0.25f));
  seal(want);

  CHECK(encode_archive(tensors) == want);
  const auto back = decode_archive(want);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "a");
  CHECK(back[1].first == "bc");
  CHECK(back[1].second.shape() == Shape{1, 1});
  CHECK(bitwise_equal(back[0].second, tensors[0].second));
}

TEST_CASE("decoder rejects damaged archives") {
  NamedTensors<float> tensors;
  tensors.emplace_back("w", Tensor(Shape{3}, {1, 2, 3}));
  const auto good = encode_archive(tensors);

  SUBCASE("every single flipped byte") {
    for (std::size_t i = 0; i < good.size(); ++i) {
      auto bad = good;
      bad[i] ^= 0x01;
      CHECK_THROWS_AS(decode_archive(bad), ArchiveError);
    }
  }
  SUBCASE("truncation at every length") {
    for (std::size_t n = 0; n < good.size(); ++n)
      CHECK_THROWS_AS(decode_archive(std::span(good).first(n)), ArchiveError);
  }
  SUBCASE("bad magic and version with a valid checksum") {
    auto magic = std::vector<std::uint8_t>(good.begin(), good.end() - 4);
    magic[3] = '2';
    seal(magic);
    CHECK_THROWS_WITH_AS(decode_archive(magic), doctest::Contains("magic"), ArchiveError);

    auto version = std::vector<std::uint8_t>(good.begin(), good.end() - 4);
    version[4] = 2;
    seal(version);
    CHECK_THROWS_WITH_AS(decode_archive(version), doctest::Contains("version"), ArchiveError);
  }
  SUBCASE("duplicate names") {
    NamedTensors<float> dup = tensors;
    dup.push_back(tensors[0]);
    CHECK_THROWS_AS(encode_archive(dup), ArchiveError);

    std::vector<std::uint8_t> raw{'E', 'G', 'C', '1'};
    put_u16(raw, 1);
    put_u32(raw, 2);
    for (int i = 0; i < 2; ++i) {
      put_u16(raw, 1);
      raw.push_back('w');
      raw.push_back(1);
      put_u32(raw, 1);
      put_u32(raw, 0);
    }
    seal(raw);
    CHECK_THROWS_AS(decode_archive(raw), ArchiveError);
  }
}

TEST_CASE("model round trip is bitwise") {
  for (auto kind : {ModelKind::Ensemble, ModelKind::MiniXception, ModelKind::SimpleCnn}) {
    const int k = kind == ModelKind::MiniXception ? 2 : 7;
    const Model model = build_model(kind, k, 21);
    const auto path = temp_path("roundtrip.egc");
    save_weights(model, path);
    const Model back = load_weights(path);
    std::filesystem::remove(path);

    CHECK(back.kind() == kind);
    CHECK(back.class_count() == k);
    REQUIRE(back.members().size() == model.members().size());
    for (std::size_t m = 0; m < model.members().size(); ++m) {
      const auto a = model.members()[m].export_state(), b = back.members()[m].export_state();
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(bitwise_equal(a[i].second, b[i].second));
      }
    }
    const Tensor x = probe_input();
    CHECK(bitwise_equal(model.predict(x), back.predict(x)));
  }
}

TEST_CASE("file with one flipped payload byte raises a checksum error") {
  const Model model = build_model(ModelKind::SimpleCnn, 7, 3);
  auto bytes = encode_archive(model.members()[0].export_state());
  bytes[bytes.size() / 2] ^= 0x80;
  const auto path = temp_path("flipped.egc");
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("checksum"), ArchiveError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_weights(path), ArchiveError);
}

TEST_CASE("schema errors for intact archives that do not describe a model") {
  const Model model = build_model(ModelKind::Ensemble, 7, 5);
  NamedTensors<float> all;
  for (const auto& net : model.members())
    for (auto& entry : net.export_state()) all.push_back(std::move(entry));

  CHECK_THROWS_AS(model_from_tensors({}), SchemaError);

  auto missing = all;
  missing.erase(missing.begin() + 3);
  CHECK_THROWS_AS(model_from_tensors(missing), SchemaError);

  auto extra = all;
  extra.emplace_back("stray/tensor", Tensor(Shape{1}));
  CHECK_THROWS_AS(model_from_tensors(extra), SchemaError);

  // A mini-Xception for 7 classes next to a simple CNN for 2.
  NamedTensors<float> mixed = model.members()[0].export_state();
  for (auto& entry : build_model(ModelKind::SimpleCnn, 2, 1).members()[0].export_state()) mixed.push_back(entry);
  CHECK_THROWS_AS(model_from_tensors(mixed), SchemaError);

  CHECK(model_from_tensors(all).kind() == ModelKind::Ensemble);
}
