#pragma once

// Weight archive layout (all integers little-endian):
//
//   "EGC1"            4-byte magic
//   u16 version       = 1
//   u32 tensor count
//   per tensor:
//     u16 name length, UTF-8 name bytes
//     u8 rank, rank x u32 extents
//     payload of IEEE-754 binary32 values
//   u32 CRC-32 (IEEE polynomial) of every preceding byte

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "egc/model_zoo.hpp"

namespace egc {

inline constexpr std::uint16_t kArchiveVersion = 1;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_archive(const NamedTensors<float>& tensors);
// Throws ArchiveError on bad magic, version, checksum, duplicate names or
// truncated payloads.
NamedTensors<float> decode_archive(std::span<const std::uint8_t> bytes);

void write_archive(const std::filesystem::path& path, const NamedTensors<float>& tensors);
NamedTensors<float> read_archive(const std::filesystem::path& path);

void save_weights(const Model& model, const std::filesystem::path& path);
// The model kind and class count are recovered from the tensor names. Throws
// SchemaError when the archive does not describe a known model.
Model load_weights(const std::filesystem::path& path, int input_size = kFaceSize);
Model model_from_tensors(const NamedTensors<float>& tensors, int input_size = kFaceSize);

}  // namespace egc
