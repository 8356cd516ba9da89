#include "styleforge/ad/weights_io.hpp"

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::ad {

std::vector<std::uint8_t> encode_weights(const ParameterSet& params, std::uint64_t arch_hash) {
  ByteWriter w;
  w.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>("SFWT"), 4));
  w.put_u32(kWeightsVersion);
  w.put_u64(arch_hash);
  w.put_u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.put_string(p.id);
    w.put_u8(p.trainable ? 1 : 0);
    w.put_u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put_u64(d);
    for (double v : p.value.data()) w.put_f64(v);
  }
  return w.take();
}

DecodedWeights decode_weights(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SFWT");
  const std::uint32_t version = r.get_u32();
  if (version != kWeightsVersion) throw DataError("unsupported weights version " + std::to_string(version));
  DecodedWeights out;
  out.arch_hash = r.get_u64();
  const std::uint32_t count = r.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Parameter p;
    p.id = r.get_string();
    p.trainable = r.get_u8() != 0;
    const std::uint32_t rank = r.get_u32();
    if (rank == 0 || rank > 8) throw DataError("parameter '" + p.id + "' has invalid rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get_u64();
    if (shape_size(shape) > r.remaining() / 8) throw DataError("parameter '" + p.id + "' overruns the container");
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = r.get_f64();
    p.value = Tensor(std::move(shape), std::move(data));
    out.params.add(std::move(p));
  }
  return out;
}

}  // namespace styleforge::ad
