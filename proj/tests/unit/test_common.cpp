#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"
#include "styleforge/common/rng.hpp"

using namespace styleforge;

TEST_CASE("counter rng replays and is stream separated") {
  CounterRng a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  CHECK(a.counter() == 100);
}

TEST_CASE("rng distributions stay in range with sane moments") {
  CounterRng rng(7);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto k = rng.below(10);
    REQUIRE(k < 10);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  CounterRng rng(3);
  rng.shuffle(std::span(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(v != sorted);
}

TEST_CASE("sha256 matches the FIPS test vector") {
  CHECK(sha256_hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 inc;
  inc.update(std::string_view("a"));
  inc.update(std::string_view("bc"));
  CHECK(inc.hex_digest() == sha256_hex(std::string_view("abc")));
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("base64 known values and round trip") {
  const std::string man = "Man";
  CHECK(base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(man.data()), 3)) == "TWFu");
  const std::string ma = "Ma";
  CHECK(base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(ma.data()), 2)) == "TWE=");
  std::vector<std::uint8_t> bytes(1000);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<std::uint8_t>(i * 37);
  for (std::size_t n : {0u, 1u, 2u, 3u, 999u, 1000u}) {
    const std::span<const std::uint8_t> part(bytes.data(), n);
    const auto back = base64_decode(base64_encode(part));
    CHECK(std::equal(back.begin(), back.end(), part.begin(), part.end()));
  }
  CHECK_THROWS_AS(base64_decode("abc"), DataError);
}

TEST_CASE("zlib round trip and size check") {
  std::vector<std::uint8_t> bytes(4096, 26);
  for (std::size_t i = 0; i < bytes.size(); i += 7) bytes[i] = 255;
  const auto z = zlib_compress(bytes);
  CHECK(z.size() < bytes.size());
  CHECK(zlib_decompress(z, bytes.size()) == bytes);
  CHECK_THROWS_AS(zlib_decompress(z, bytes.size() - 1), DataError);
}

TEST_CASE("byte writer and reader round trip little-endian") {
  ByteWriter w;
  w.put_u8(7);
  w.put_u32(0x01020304);
  w.put_u64(0x1122334455667788ULL);
  w.put_f64(-0.1);
  w.put_string("hello");
  const auto bytes = w.bytes();
  CHECK(bytes[1] == 0x04);
  CHECK(bytes[4] == 0x01);
  ByteReader r(bytes);
  CHECK(r.get_u8() == 7);
  CHECK(r.get_u32() == 0x01020304u);
  CHECK(r.get_u64() == 0x1122334455667788ULL);
  CHECK(r.get_f64() == -0.1);
  CHECK(r.get_string() == "hello");
  CHECK(r.at_end());
  CHECK_THROWS_AS(r.get_u8(), DataError);
}

TEST_CASE("truncated input raises a data error") {
  ByteWriter w;
  w.put_string("longer than the buffer");
  auto bytes = w.take();
  bytes.resize(10);
  ByteReader r(bytes);
  CHECK_THROWS_AS(r.get_string(), DataError);
  ByteReader m(bytes);
  CHECK_THROWS_AS(m.expect_magic("SFXX"), DataError);
}

TEST_CASE("error classes map to exit codes") {
  CHECK(static_cast<int>(UsageError("x").error_class()) == 2);
  CHECK(static_cast<int>(GeometryError("x").error_class()) == 3);
  CHECK(static_cast<int>(TrainingError("x", 3).error_class()) == 4);
  CHECK(TrainingError("x", 3).epoch() == 3);
}
