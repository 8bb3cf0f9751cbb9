#include "lsalign/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lsalign/error.hpp"

namespace lsalign::io {
namespace {

constexpr std::array<char, 4> kMagic{'L', 'S', 'E', 'B'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((value >> shift) & 0xffu));
  }
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_floats(std::vector<std::uint8_t>& out, std::span<const float> data) {
  for (float f : data) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
}

constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::vector<std::uint8_t> encode_lseb(std::uint32_t rows, std::uint32_t cols,
                                      std::span<const float> data) {
  if (static_cast<std::size_t>(rows) * cols != data.size()) {
    fail(ErrorCode::DimMismatch, "LSEB payload has " + std::to_string(data.size()) +
                                     " floats, header declares " + std::to_string(rows) + "x" +
                                     std::to_string(cols));
  }
  std::vector<std::uint8_t> out;
  out.reserve(kLsebHeaderBytes + data.size() * 4);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kLsebVersion);
  put_u32(out, rows);
  put_u32(out, cols);
  append_floats(out, data);
  return out;
}

LsebBlock decode_lseb(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < kLsebHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    fail(ErrorCode::BadMagic, origin + ": missing LSEB magic");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kLsebVersion) {
    fail(ErrorCode::BadMagic, origin + ": unsupported LSEB version " + std::to_string(version));
  }
  LsebBlock block;
  block.rows = get_u32(bytes.data() + 8);
  block.cols = get_u32(bytes.data() + 12);
  const std::size_t expected = static_cast<std::size_t>(block.rows) * block.cols * 4;
  const std::size_t payload = bytes.size() - kLsebHeaderBytes;
  if (payload != expected) {
    fail(ErrorCode::DimMismatch, origin + ": header " + std::to_string(block.rows) + "x" +
                                     std::to_string(block.cols) + " needs " +
                                     std::to_string(expected) + " payload bytes, found " +
                                     std::to_string(payload));
  }
  block.data = le_bytes_to_floats(bytes.subspan(kLsebHeaderBytes));
  return block;
}

void write_lseb(const std::filesystem::path& path, std::uint32_t rows, std::uint32_t cols,
                std::span<const float> data) {
  write_bytes(path, encode_lseb(rows, cols, data));
}

LsebBlock read_lseb(const std::filesystem::path& path) {
  return decode_lseb(read_bytes(path), path.string());
}

std::vector<std::uint8_t> floats_to_le_bytes(std::span<const float> data) {
  std::vector<std::uint8_t> out;
  out.reserve(data.size() * 4);
  append_floats(out, data);
  return out;
}

std::vector<float> le_bytes_to_floats(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    fail(ErrorCode::DimMismatch, "float payload length " + std::to_string(bytes.size()) +
                                     " is not a multiple of 4");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<float>(get_u32(bytes.data() + 4 * i));
  }
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t chunk = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64[(chunk >> 18) & 63]);
    out.push_back(kB64[(chunk >> 12) & 63]);
    out.push_back(kB64[(chunk >> 6) & 63]);
    out.push_back(kB64[chunk & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t chunk = bytes[i] << 16;
    out.push_back(kB64[(chunk >> 18) & 63]);
    out.push_back(kB64[(chunk >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    const std::uint32_t chunk = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64[(chunk >> 18) & 63]);
    out.push_back(kB64[(chunk >> 12) & 63]);
    out.push_back(kB64[(chunk >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    fail(ErrorCode::ParseError, "base64 length is not a multiple of 4");
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      int v = 0;
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
      } else {
        if (pad > 0 || (v = b64_value(c)) < 0) {
          fail(ErrorCode::ParseError, "invalid base64 character");
        }
      }
      chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>((chunk >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((chunk >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(chunk & 0xff));
  }
  return out;
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

std::string fnv1a_hex(std::string_view text) {
  return fnv1a_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::MissingFile, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::MissingFile, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(ErrorCode::IoError, "cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    fail(ErrorCode::IoError, "short write to " + path.string());
  }
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_bytes(path, std::span<const std::uint8_t>(
                        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    fail(ErrorCode::IoError, "cannot create directory " + dir.string() +
                                 (ec ? ": " + ec.message() : std::string()));
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

}  // namespace lsalign::io
