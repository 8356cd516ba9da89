#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styleforge/ad/tape.hpp"
#include "styleforge/ad/tensor.hpp"
#include "styleforge/sim/render.hpp"
#include "styleforge/sim/vehicle.hpp"

namespace styleforge::nn {

struct ConvLayerSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
};

// PilotNet-style baseline: five valid convolutions, flatten, concat speed,
// three dense layers. features = concat(flatten(conv3), flatten(conv5)).
struct BdmConfig {
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::vector<ConvLayerSpec> conv = {{24, 5, 2}, {36, 5, 2}, {48, 5, 2}, {64, 3, 1}, {64, 3, 1}};
  std::vector<std::size_t> dense = {100, 50, 3};
  std::vector<std::size_t> feature_taps = {2, 4};  // zero-based conv indices
  double speed_scale = 40.0;                       // m/s, inputs are divided by this

  void validate() const;
  // [channels, height, width] after each conv layer.
  std::vector<std::array<std::size_t, 3>> conv_output_shapes() const;
  std::size_t feature_length() const;
  nlohmann::json to_json() const;
  static BdmConfig from_json(const nlohmann::json& j);
};

// Four embedding branches -> concat -> dense, dropout, dense, dense.
struct PbConfig {
  std::size_t action_embed = 16;
  std::size_t feature_embed = 64;
  std::size_t speed_embed = 16;
  std::size_t gap_embed = 16;
  std::size_t feature_length = 0;  // must equal the paired BDM's feature_length()
  std::vector<std::size_t> fusion = {128, 64, 3};
  double dropout_rate = 0.5;
  double speed_scale = 40.0;
  // The style lives in how hard the driver reacts to small gaps, so the gap
  // gets a finer scale than the speed.
  double gap_scale = 4.0;

  void validate() const;
  std::size_t fusion_input() const noexcept { return action_embed + feature_embed + speed_embed + gap_embed; }
  nlohmann::json to_json() const;
  static PbConfig from_json(const nlohmann::json& j);
  static PbConfig for_bdm(const BdmConfig& bdm);
};

struct BdmModel {
  BdmConfig config;
  ad::ParameterSet params;
  // Set once baseline training has produced these weights.
  bool trained = false;
  nlohmann::json provenance = nlohmann::json::object();

  std::uint64_t arch_hash() const;
};

struct PbModel {
  PbConfig config;
  ad::ParameterSet params;
  bool trained = false;
  nlohmann::json provenance = nlohmann::json::object();

  std::uint64_t arch_hash() const;
};

BdmModel init_bdm(const BdmConfig& config, std::uint64_t seed);
PbModel init_pb(const PbConfig& config, std::uint64_t seed);

// Graph builders over a tape bound to the model's parameters.
struct BdmGraph {
  ad::Var action;    // [3], squashed
  ad::Var features;  // [feature_length]
};
BdmGraph bdm_graph(ad::Tape& tape, const BdmConfig& config, ad::Var image, ad::Var speed_norm);
ad::Var pb_graph(ad::Tape& tape, const PbConfig& config, ad::Var bdm_action, ad::Var features,
                 ad::Var speed_norm, ad::Var gap_norm, ad::Mode mode, CounterRng& rng);

ad::Tensor observation_tensor(const sim::Observation& obs);
sim::ActionTriple to_action(const ad::Tensor& t);
ad::Tensor action_tensor(const sim::ActionTriple& a);

struct BdmOutput {
  sim::ActionTriple action;
  std::vector<double> features;
};

BdmOutput bdm_forward(const sim::Observation& obs, double speed, const BdmModel& model,
                      ad::Mode mode = ad::Mode::eval);

// rng is only drawn from in train mode.
sim::ActionTriple pb_forward(const sim::ActionTriple& bdm_action, std::span<const double> features, double speed,
                             double speed_gap, const PbModel& model, ad::Mode mode = ad::Mode::eval,
                             CounterRng* rng = nullptr);

// BDM alone when pb is null, otherwise BDM -> PB with gap = target - speed.
sim::ActionTriple ndst_forward(const sim::Observation& obs, double speed, double target_speed,
                               const BdmModel& bdm, const PbModel* pb);

void check_pair(const BdmModel& bdm, const PbModel& pb);

// Model bundle: "SFMB" u32 version, str kind, str config json, str
// provenance json, u8 trained, u64 length + weights container.
inline constexpr std::uint32_t kBundleVersion = 1;
std::vector<std::uint8_t> encode_bundle(const BdmModel& model);
std::vector<std::uint8_t> encode_bundle(const PbModel& model);
BdmModel decode_bdm_bundle(std::span<const std::uint8_t> bytes);
PbModel decode_pb_bundle(std::span<const std::uint8_t> bytes);
// Reads only the kind tag ("bdm" or "pb").
std::string bundle_kind(std::span<const std::uint8_t> bytes);

void save_bundle(const std::string& path, const BdmModel& model);
void save_bundle(const std::string& path, const PbModel& model);
BdmModel load_bdm(const std::string& path);
PbModel load_pb(const std::string& path);

}  // namespace styleforge::nn
