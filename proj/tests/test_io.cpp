#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "lsalign/io.hpp"
#include "lsalign/parallel.hpp"
#include "lsalign/random.hpp"

using namespace lsalign;
using testutil::error_code_of;

TEST_CASE("LSEB layout is little-endian with a 16-byte header") {
  const std::vector<float> data{1.0f, -2.0f};
  const auto bytes = io::encode_lseb(1, 2, data);
  REQUIRE(bytes.size() == 24);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LSEB");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 2);
  // 1.0f = 0x3f800000
  CHECK(bytes[16] == 0x00);
  CHECK(bytes[19] == 0x3f);
  // -2.0f = 0xc0000000
  CHECK(bytes[23] == 0xc0);

  const auto block = io::decode_lseb(bytes, "mem");
  CHECK(block.rows == 1);
  CHECK(block.cols == 2);
  CHECK(block.data == data);
}

TEST_CASE("LSEB rejects wrong versions and short payloads") {
  const std::vector<float> data{1.0f, 2.0f, 3.0f};
  auto bytes = io::encode_lseb(1, 3, data);
  auto wrong_version = bytes;
  wrong_version[4] = 2;
  CHECK(error_code_of([&] { io::decode_lseb(wrong_version, "mem"); }) == ErrorCode::BadMagic);
  bytes.pop_back();
  CHECK(error_code_of([&] { io::decode_lseb(bytes, "mem"); }) == ErrorCode::DimMismatch);
}

TEST_CASE("base64 known vectors and round trip") {
  auto enc = [](std::string s) {
    return io::base64_encode(std::vector<std::uint8_t>(s.begin(), s.end()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");

  StreamRng rng(3);
  for (int len = 0; len < 40; ++len) {
    std::vector<std::uint8_t> bytes(len);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
    CHECK(io::base64_decode(io::base64_encode(bytes)) == bytes);
  }
  CHECK(error_code_of([] { io::base64_decode("abc"); }) == ErrorCode::ParseError);
  CHECK(error_code_of([] { io::base64_decode("ab!="); }) == ErrorCode::ParseError);
}

TEST_CASE("FNV-1a 64 reference values") {
  CHECK(io::fnv1a_hex(std::string_view("")) == "cbf29ce484222325");
  CHECK(io::fnv1a_hex(std::string_view("a")) == "af63dc4c8601ec8c");
  CHECK(io::fnv1a_hex(std::string_view("foobar")) == "85944171f73967e8");
}

TEST_CASE("json writer is canonical") {
  testutil::TempDir dir("io");
  nlohmann::json a = {{"b", 1}, {"a", {{"y", 2}, {"x", 3}}}};
  nlohmann::json b = {{"a", {{"x", 3}, {"y", 2}}}, {"b", 1}};
  io::write_json(dir / "a.json", a);
  io::write_json(dir / "b.json", b);
  CHECK(io::read_bytes(dir / "a.json") == io::read_bytes(dir / "b.json"));
  CHECK(io::read_json(dir / "a.json") == a);
  io::write_text(dir / "bad.json", "{ not json");
  CHECK(error_code_of([&] { io::read_json(dir / "bad.json"); }) == ErrorCode::ParseError);
}

TEST_CASE("stream rng is keyed and reproducible") {
  StreamRng a{1, 2, 3};
  StreamRng b{1, 2, 3};
  StreamRng c{1, 2, 4};
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a();
    CHECK(x == b());
    differs = differs || x != c();
  }
  CHECK(differs);

  StreamRng u(9);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    sum += x;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);

  CHECK_THROWS_AS(parallel_for(10,
                               [](std::size_t i) {
                                 if (i == 7) fail(ErrorCode::EmptyInput, "boom");
                               }),
                  Error);
}
