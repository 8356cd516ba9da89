#include "styleforge/nn/models.hpp"

#include <cmath>

#include "styleforge/ad/weights_io.hpp"
#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::nn {

using ad::Mode;
using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

void BdmConfig::validate() const {
  if (conv.size() != 5) throw ConfigError("BDM needs exactly 5 conv layers, got " + std::to_string(conv.size()));
  if (dense.size() != 3 || dense.back() != 3)
    throw ConfigError("BDM needs exactly 3 dense layers ending in 3 outputs");
  if (feature_taps.empty()) throw ConfigError("BDM needs at least one feature tap");
  for (auto t : feature_taps)
    if (t >= conv.size()) throw ConfigError("feature tap " + std::to_string(t) + " is not a conv layer");
  if (!(speed_scale > 0.0)) throw ConfigError("speed_scale must be positive");
  conv_output_shapes();
}

std::vector<std::array<std::size_t, 3>> BdmConfig::conv_output_shapes() const {
  std::vector<std::array<std::size_t, 3>> shapes;
  std::size_t c = 1, h = image_height, w = image_width;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const auto& l = conv[i];
    if (l.filters == 0 || l.kernel == 0 || l.stride == 0 || l.kernel > h || l.kernel > w)
      throw ConfigError("conv" + std::to_string(i + 1) + ": kernel " + std::to_string(l.kernel) +
                        " does not fit input " + std::to_string(h) + "x" + std::to_string(w));
    h = (h - l.kernel) / l.stride + 1;
    w = (w - l.kernel) / l.stride + 1;
    c = l.filters;
    shapes.push_back({c, h, w});
  }
  return shapes;
}

std::size_t BdmConfig::feature_length() const {
  const auto shapes = conv_output_shapes();
  std::size_t n = 0;
  for (auto t : feature_taps) n += shapes[t][0] * shapes[t][1] * shapes[t][2];
  return n;
}

nlohmann::json BdmConfig::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : conv) layers.push_back({{"filters", l.filters}, {"kernel", l.kernel}, {"stride", l.stride}});
  return {{"image_height", image_height}, {"image_width", image_width}, {"conv", layers},
          {"dense", dense},               {"feature_taps", feature_taps}, {"speed_scale", speed_scale}};
}

BdmConfig BdmConfig::from_json(const nlohmann::json& j) {
  BdmConfig c;
  try {
    c.image_height = j.at("image_height").get<std::size_t>();
    c.image_width = j.at("image_width").get<std::size_t>();
    c.conv.clear();
    for (const auto& l : j.at("conv"))
      c.conv.push_back({l.at("filters").get<std::size_t>(), l.at("kernel").get<std::size_t>(),
                        l.at("stride").get<std::size_t>()});
    c.dense = j.at("dense").get<std::vector<std::size_t>>();
    c.feature_taps = j.at("feature_taps").get<std::vector<std::size_t>>();
    c.speed_scale = j.at("speed_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed BDM config: ") + e.what());
  }
  c.validate();
  return c;
}

void PbConfig::validate() const {
  if (action_embed == 0 || feature_embed == 0 || speed_embed == 0 || gap_embed == 0 || feature_length == 0)
    throw ConfigError("PB branch widths and feature_length must be positive");
  if (fusion.size() != 3 || fusion.back() != 3) throw ConfigError("PB needs exactly 3 fusion layers ending in 3");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("PB dropout rate must lie in [0, 1)");
  if (!(speed_scale > 0.0 && gap_scale > 0.0)) throw ConfigError("speed_scale and gap_scale must be positive");
}

nlohmann::json PbConfig::to_json() const {
  return {{"action_embed", action_embed}, {"feature_embed", feature_embed}, {"speed_embed", speed_embed},
          {"gap_embed", gap_embed},       {"feature_length", feature_length}, {"fusion", fusion},
          {"dropout_rate", dropout_rate}, {"speed_scale", speed_scale},
          {"gap_scale", gap_scale}};
}

PbConfig PbConfig::from_json(const nlohmann::json& j) {
  PbConfig c;
  try {
    c.action_embed = j.at("action_embed").get<std::size_t>();
    c.feature_embed = j.at("feature_embed").get<std::size_t>();
    c.speed_embed = j.at("speed_embed").get<std::size_t>();
    c.gap_embed = j.at("gap_embed").get<std::size_t>();
    c.feature_length = j.at("feature_length").get<std::size_t>();
    c.fusion = j.at("fusion").get<std::vector<std::size_t>>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.speed_scale = j.at("speed_scale").get<double>();
    c.gap_scale = j.at("gap_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed PB config: ") + e.what());
  }
  c.validate();
  return c;
}

PbConfig PbConfig::for_bdm(const BdmConfig& bdm) {
  PbConfig c;
  c.feature_length = bdm.feature_length();
  c.speed_scale = bdm.speed_scale;
  return c;
}

std::uint64_t BdmModel::arch_hash() const { return fnv1a64("bdm" + config.to_json().dump()); }
std::uint64_t PbModel::arch_hash() const { return fnv1a64("pb" + config.to_json().dump()); }

namespace {

Tensor uniform_tensor(ad::Shape shape, double limit, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

// He-uniform for ReLU layers, a narrower range for the output layer.
void add_layer(ad::ParameterSet& params, const std::string& name, ad::Shape weight_shape, std::size_t fan_in,
               bool output_layer, std::uint64_t seed) {
  CounterRng rng(seed, params.size());
  const double limit = std::sqrt((output_layer ? 1.0 : 6.0) / static_cast<double>(fan_in));
  const std::size_t out = weight_shape[0];
  const bool is_conv = weight_shape.size() == 4;
  params.add(Parameter{name + (is_conv ? ".kernel" : ".weight"), uniform_tensor(std::move(weight_shape), limit, rng), true});
  params.add(Parameter{name + ".bias", Tensor({out}), true});
}

Var layer_weight(Tape& tape, const std::string& name) {
  const auto* params = tape.parameters();
  return tape.parameter(params->contains(name + ".kernel") ? name + ".kernel" : name + ".weight");
}

Var layer_bias(Tape& tape, const std::string& name) { return tape.parameter(name + ".bias"); }

Var affine(Tape& tape, const std::string& name, Var x) {
  return ad::dense(x, layer_weight(tape, name), layer_bias(tape, name));
}

}  // namespace

BdmModel init_bdm(const BdmConfig& config, std::uint64_t seed) {
  config.validate();
  BdmModel m;
  m.config = config;
  const auto shapes = config.conv_output_shapes();
  std::size_t in_c = 1;
  for (std::size_t i = 0; i < config.conv.size(); ++i) {
    const auto& l = config.conv[i];
    add_layer(m.params, "conv" + std::to_string(i + 1), {l.filters, in_c, l.kernel, l.kernel},
              in_c * l.kernel * l.kernel, false, seed);
    in_c = l.filters;
  }
  const auto& last = shapes.back();
  std::size_t fan_in = last[0] * last[1] * last[2] + 1;
  for (std::size_t j = 0; j < config.dense.size(); ++j) {
    add_layer(m.params, "fc" + std::to_string(j + 1), {config.dense[j], fan_in}, fan_in,
              j + 1 == config.dense.size(), seed);
    fan_in = config.dense[j];
  }
  return m;
}

PbModel init_pb(const PbConfig& config, std::uint64_t seed) {
  config.validate();
  PbModel m;
  m.config = config;
  add_layer(m.params, "embed_action", {config.action_embed, 3}, 3, false, seed);
  add_layer(m.params, "embed_feature", {config.feature_embed, config.feature_length}, config.feature_length, false,
            seed);
  add_layer(m.params, "embed_speed", {config.speed_embed, 1}, 1, false, seed);
  add_layer(m.params, "embed_gap", {config.gap_embed, 1}, 1, false, seed);
  std::size_t fan_in = config.fusion_input();
  for (std::size_t j = 0; j < config.fusion.size(); ++j) {
    add_layer(m.params, "fc" + std::to_string(j + 1), {config.fusion[j], fan_in}, fan_in,
              j + 1 == config.fusion.size(), seed);
    fan_in = config.fusion[j];
  }
  return m;
}

BdmGraph bdm_graph(Tape& tape, const BdmConfig& config, Var image, Var speed_norm) {
  Var x = image;
  std::vector<Var> taps;
  for (std::size_t i = 0; i < config.conv.size(); ++i) {
    const std::string name = "conv" + std::to_string(i + 1);
    x = ad::relu(ad::conv2d(x, layer_weight(tape, name), layer_bias(tape, name), config.conv[i].stride));
    for (auto t : config.feature_taps)
      if (t == i) taps.push_back(ad::flatten(x));
  }
  Var h = ad::concat({ad::flatten(x), speed_norm});
  for (std::size_t j = 0; j < config.dense.size(); ++j) {
    h = affine(tape, "fc" + std::to_string(j + 1), h);
    if (j + 1 < config.dense.size()) h = ad::relu(h);
  }
  return {ad::action_head(h), ad::concat(std::span<const Var>(taps))};
}

Var pb_graph(Tape& tape, const PbConfig& config, Var bdm_action, Var features, Var speed_norm, Var gap_norm,
             Mode mode, CounterRng& rng) {
  Var h = ad::concat({ad::relu(affine(tape, "embed_action", bdm_action)),
                      ad::relu(affine(tape, "embed_feature", features)),
                      ad::relu(affine(tape, "embed_speed", speed_norm)),
                      ad::relu(affine(tape, "embed_gap", gap_norm))});
  h = ad::relu(affine(tape, "fc1", h));
  h = ad::dropout(h, config.dropout_rate, mode, rng);
  h = ad::relu(affine(tape, "fc2", h));
  return ad::action_head(affine(tape, "fc3", h));
}

Tensor observation_tensor(const sim::Observation& obs) {
  return Tensor({1, static_cast<std::size_t>(obs.height), static_cast<std::size_t>(obs.width)}, obs.pixels);
}

sim::ActionTriple to_action(const Tensor& t) { return {t[0], t[1], t[2]}; }

Tensor action_tensor(const sim::ActionTriple& a) { return Tensor({3}, {a.steering, a.throttle, a.brake}); }

BdmOutput bdm_forward(const sim::Observation& obs, double speed, const BdmModel& model, Mode) {
  if (static_cast<std::size_t>(obs.height) != model.config.image_height ||
      static_cast<std::size_t>(obs.width) != model.config.image_width)
    throw ShapeError("observation " + std::to_string(obs.height) + "x" + std::to_string(obs.width) +
                     " does not match BDM input " + std::to_string(model.config.image_height) + "x" +
                     std::to_string(model.config.image_width));
  Tape tape(&model.params);
  const BdmGraph g = bdm_graph(tape, model.config, tape.constant(observation_tensor(obs)),
                               tape.constant(Tensor({1}, {speed / model.config.speed_scale})));
  const auto f = g.features.value().data();
  return {to_action(g.action.value()), std::vector<double>(f.begin(), f.end())};
}

sim::ActionTriple pb_forward(const sim::ActionTriple& bdm_action, std::span<const double> features, double speed,
                             double speed_gap, const PbModel& model, Mode mode, CounterRng* rng) {
  if (features.size() != model.config.feature_length)
    throw ShapeError("PB expects " + std::to_string(model.config.feature_length) + " features, got " +
                     std::to_string(features.size()));
  CounterRng fallback(0);
  Tape tape(&model.params);
  Var out = pb_graph(tape, model.config, tape.constant(action_tensor(bdm_action)),
                     tape.constant(Tensor({features.size()}, std::vector<double>(features.begin(), features.end()))),
                     tape.constant(Tensor({1}, {speed / model.config.speed_scale})),
                     tape.constant(Tensor({1}, {speed_gap / model.config.gap_scale})),
                     mode, rng ? *rng : fallback);
  return to_action(out.value());
}

void check_pair(const BdmModel& bdm, const PbModel& pb) {
  if (pb.config.feature_length != bdm.config.feature_length())
    throw ConfigError("PB expects " + std::to_string(pb.config.feature_length) + " features but the BDM produces " +
                      std::to_string(bdm.config.feature_length()));
}

sim::ActionTriple ndst_forward(const sim::Observation& obs, double speed, double target_speed, const BdmModel& bdm,
                               const PbModel* pb) {
  if (pb) check_pair(bdm, *pb);
  BdmOutput base = bdm_forward(obs, speed, bdm);
  if (!pb) return base.action;
  return pb_forward(base.action, base.features, speed, target_speed - speed, *pb);
}

namespace {

std::vector<std::uint8_t> encode_any(const std::string& kind, const nlohmann::json& config,
                                     const nlohmann::json& provenance, bool trained, const ad::ParameterSet& params,
                                     std::uint64_t arch_hash) {
  ByteWriter w;
  w.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>("SFMB"), 4));
  w.put_u32(kBundleVersion);
  w.put_string(kind);
  w.put_string(config.dump());
  w.put_string(provenance.dump());
  w.put_u8(trained ? 1 : 0);
  const auto weights = ad::encode_weights(params, arch_hash);
  w.put_u64(weights.size());
  w.put_bytes(weights);
  return w.take();
}

struct RawBundle {
  std::string kind;
  nlohmann::json config;
  nlohmann::json provenance;
  bool trained = false;
  ad::DecodedWeights weights;
};

RawBundle decode_any(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SFMB");
  const auto version = r.get_u32();
  if (version != kBundleVersion) throw DataError("unsupported model bundle version " + std::to_string(version));
  RawBundle b;
  b.kind = r.get_string();
  try {
    b.config = nlohmann::json::parse(r.get_string());
    b.provenance = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt model bundle metadata: ") + e.what());
  }
  b.trained = r.get_u8() != 0;
  const auto n = r.get_u64();
  if (n > r.remaining()) throw DataError("model bundle weights overrun the file");
  b.weights = ad::decode_weights(r.get_bytes(static_cast<std::size_t>(n)));
  if (!r.at_end()) throw DataError("trailing bytes after model bundle");
  return b;
}

template <typename Model>
void check_weights(const Model& m, const ad::ParameterSet& loaded, std::uint64_t hash) {
  if (hash != m.arch_hash()) throw DataError("weights architecture hash does not match the bundle config");
  if (loaded.size() != m.params.size()) throw DataError("weights parameter count does not match the architecture");
  for (std::size_t i = 0; i < loaded.size(); ++i)
    if (loaded[i].id != m.params[i].id || loaded[i].value.shape() != m.params[i].value.shape())
      throw DataError("weights parameter '" + loaded[i].id + "' does not match the architecture");
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const BdmModel& m) {
  return encode_any("bdm", m.config.to_json(), m.provenance, m.trained, m.params, m.arch_hash());
}

std::vector<std::uint8_t> encode_bundle(const PbModel& m) {
  return encode_any("pb", m.config.to_json(), m.provenance, m.trained, m.params, m.arch_hash());
}

std::string bundle_kind(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SFMB");
  r.get_u32();
  return r.get_string();
}

BdmModel decode_bdm_bundle(std::span<const std::uint8_t> bytes) {
  RawBundle b = decode_any(bytes);
  if (b.kind != "bdm") throw DataError("model bundle holds a '" + b.kind + "' model, expected 'bdm'");
  BdmModel m = init_bdm(BdmConfig::from_json(b.config), 0);
  check_weights(m, b.weights.params, b.weights.arch_hash);
  m.params = std::move(b.weights.params);
  m.trained = b.trained;
  m.provenance = std::move(b.provenance);
  return m;
}

PbModel decode_pb_bundle(std::span<const std::uint8_t> bytes) {
  RawBundle b = decode_any(bytes);
  if (b.kind != "pb") throw DataError("model bundle holds a '" + b.kind + "' model, expected 'pb'");
  PbModel m = init_pb(PbConfig::from_json(b.config), 0);
  check_weights(m, b.weights.params, b.weights.arch_hash);
  m.params = std::move(b.weights.params);
  m.trained = b.trained;
  m.provenance = std::move(b.provenance);
  return m;
}

void save_bundle(const std::string& path, const BdmModel& model) { write_file_bytes(path, encode_bundle(model)); }
void save_bundle(const std::string& path, const PbModel& model) { write_file_bytes(path, encode_bundle(model)); }

BdmModel load_bdm(const std::string& path) {
  try {
    return decode_bdm_bundle(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

PbModel load_pb(const std::string& path) {
  try {
    return decode_pb_bundle(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace styleforge::nn
