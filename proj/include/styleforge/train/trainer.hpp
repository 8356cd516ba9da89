#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <vector>

#include "styleforge/ad/optim.hpp"
#include "styleforge/nn/models.hpp"
#include "styleforge/train/dataset.hpp"

namespace styleforge::train {

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;
  bool shuffle = true;
  bool early_stopping = true;
  int patience = 5;
  // Samples per gradient shard. Shards run in parallel and are reduced in
  // index order, so results do not depend on the thread count.
  std::size_t shard_size = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_loss = 0.0;
  double best_val_loss = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  std::size_t train_count = 0;
  std::size_t val_count = 0;

  nlohmann::json to_json() const;
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Deterministic function of (dataset digest, seed).
Split split_indices(const Dataset& ds, double validation_fraction, std::uint64_t seed);

nn::BdmModel train_bdm(const Dataset& ds, const nn::BdmConfig& model_config, const TrainConfig& config,
                       TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

// The BDM is frozen. Its eval-mode outputs (action, features) are
// computed once per sample and fed to the PB as constants.
nn::PbModel train_pb(const Dataset& ds, const nn::BdmModel& bdm, const nn::PbConfig& model_config,
                     const TrainConfig& config, TrainReport* report = nullptr, const EpochCallback& on_epoch = {});

// Mean per-sample MSE over the given indices (all samples when empty).
double bdm_loss(const nn::BdmModel& model, const Dataset& ds, std::span<const std::size_t> indices = {});
double pb_loss(const nn::PbModel& pb, const nn::BdmModel& bdm, const Dataset& ds,
               std::span<const std::size_t> indices = {});

// Byte digest of a parameter set, used to check the freeze contract.
std::string parameter_digest(const ad::ParameterSet& params);

}  // namespace styleforge::train
