#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace styleforge {

// Incremental SHA-256, hex encoded.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);
  std::string hex_digest();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::string& path);

// 64-bit FNV-1a, used for compact architecture hashes.
std::uint64_t fnv1a64(std::string_view text) noexcept;

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> zlib_compress(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> zlib_decompress(std::span<const std::uint8_t> bytes, std::size_t expected_size);

}  // namespace styleforge
