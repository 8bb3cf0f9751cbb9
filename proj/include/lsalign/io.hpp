#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace lsalign::io {

inline constexpr std::uint32_t kLsebVersion = 1;
inline constexpr std::size_t kLsebHeaderBytes = 16;

// A row-major float32 block as stored in an `LSEB` file.
struct LsebBlock {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;
};

// Header `LSEB`, u32 version, u32 rows, u32 cols (all little-endian), then
// rows*cols little-endian float32 values.
std::vector<std::uint8_t> encode_lseb(std::uint32_t rows, std::uint32_t cols,
                                      std::span<const float> data);
LsebBlock decode_lseb(std::span<const std::uint8_t> bytes, const std::string& origin);

void write_lseb(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                std::span<const float> data);
LsebBlock read_lseb(const std::filesystem::path& path);

// Little-endian float payload without a header (used for shard features).
std::vector<std::uint8_t> floats_to_le_bytes(std::span<const float> data);
std::vector<float> le_bytes_to_floats(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// 64-bit FNV-1a rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);
std::string fnv1a_hex(std::string_view text);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
void ensure_directory(const std::filesystem::path& dir);

nlohmann::json read_json(const std::filesystem::path& path);
// Sorted keys, two-space indent, trailing newline. nlohmann's object type is
// ordered by key, so the dump is canonical.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace lsalign::io
