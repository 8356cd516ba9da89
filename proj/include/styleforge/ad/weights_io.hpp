#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "styleforge/ad/tensor.hpp"

namespace styleforge::ad {

// Weights container, little-endian:
//   "SFWT" u32 version u64 arch_hash u32 count
//   per parameter: str id, u8 trainable, u32 rank, u64 dims[rank], f64 data[]
inline constexpr std::uint32_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(const ParameterSet& params, std::uint64_t arch_hash);

struct DecodedWeights {
  ParameterSet params;
  std::uint64_t arch_hash = 0;
};

DecodedWeights decode_weights(std::span<const std::uint8_t> bytes);

}  // namespace styleforge::ad
