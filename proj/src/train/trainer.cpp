#include "styleforge/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "styleforge/ad/weights_io.hpp"
#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::train {

using ad::Mode;
using ad::Tape;
using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (shard_size < 1) throw ConfigError("shard_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 0.5))
    throw ConfigError("validation_fraction must lie in [0, 0.5)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"seed", seed},
          {"validation_fraction", validation_fraction},
          {"shuffle", shuffle},
          {"early_stopping", early_stopping},
          {"patience", patience},
          {"shard_size", shard_size}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.seed = j.value("seed", c.seed);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.early_stopping = j.value("early_stopping", c.early_stopping);
    c.patience = j.value("patience", c.patience);
    c.shard_size = j.value("shard_size", c.shard_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : epochs)
    curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                     {"best_val_loss", e.best_val_loss}});
  return {{"epochs", curve}, {"best_epoch", best_epoch}, {"train_count", train_count}, {"val_count", val_count}};
}

Split split_indices(const Dataset& ds, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(derive_seed(seed, fnv1a64(ds.digest())), 0x5b1);
  rng.shuffle(std::span(order));
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(ds.size())));
  Split split;
  split.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

std::string parameter_digest(const ad::ParameterSet& params) { return sha256_hex(ad::encode_weights(params, 0)); }

namespace {

// Builds the per-sample loss on a tape bound to the trained parameters.
using SampleLoss = std::function<Var(std::size_t index, Tape& tape, Mode mode, CounterRng& rng)>;

Tensor image_tensor(const Sample& s, const sim::CameraConfig& cam) {
  Tensor t({1, static_cast<std::size_t>(cam.height), static_cast<std::size_t>(cam.width)});
  auto d = t.data();
  for (std::size_t i = 0; i < s.image.size(); ++i) d[i] = sim::level_to_intensity(s.image[i]);
  return t;
}

CounterRng dropout_rng(std::uint64_t seed, int epoch, std::size_t index) {
  return CounterRng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(epoch)), index), 0xd0);
}

template <typename Body>
void parallel_indexed(std::size_t n, Body body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      body(k);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

// Mean loss over indices in eval mode. Per-sample losses are summed in index
// order after the parallel pass.
double mean_loss(const ad::ParameterSet& params, std::span<const std::size_t> indices, const SampleLoss& loss) {
  if (indices.empty()) return 0.0;
  std::vector<double> values(indices.size());
  parallel_indexed(indices.size(), [&](std::size_t k) {
    Tape tape(&params);
    CounterRng unused(0);
    values[k] = loss(indices[k], tape, Mode::eval, unused).value()[0];
  });
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(indices.size());
}

// Gradient of the mean loss over one batch.
double batch_gradient(const ad::ParameterSet& params, std::span<const std::size_t> batch, std::size_t shard_size,
                      const SampleLoss& loss, std::uint64_t seed, int epoch, ad::Gradients& out) {
  const std::size_t shards = (batch.size() + shard_size - 1) / shard_size;
  std::vector<ad::Gradients> grads(shards);
  std::vector<double> losses(shards, 0.0);
  parallel_indexed(shards, [&](std::size_t k) {
    grads[k] = ad::zero_gradients(params);
    const std::size_t end = std::min(batch.size(), (k + 1) * shard_size);
    for (std::size_t i = k * shard_size; i < end; ++i) {
      Tape tape(&params);
      CounterRng rng = dropout_rng(seed, epoch, batch[i]);
      const Var l = loss(batch[i], tape, Mode::train, rng);
      losses[k] += l.value()[0];
      tape.backward(l, grads[k]);
    }
  });
  out = ad::zero_gradients(params);
  double total = 0.0;
  for (std::size_t k = 0; k < shards; ++k) {
    ad::add_into(out, grads[k]);
    total += losses[k];
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (auto& g : out)
    for (auto& v : g.data()) v *= scale;
  return total * scale;
}

void check_finite(double loss, int epoch) {
  if (!std::isfinite(loss))
    throw TrainingError("loss diverged (non-finite) in epoch " + std::to_string(epoch), epoch);
}

void fit(ad::ParameterSet& params, const Split& split, const TrainConfig& cfg, const SampleLoss& loss,
         TrainReport& report, const EpochCallback& on_epoch) {
  if (split.train.empty()) throw DataError("no training samples after the validation split");
  report.train_count = split.train.size();
  report.val_count = split.val.size();
  const auto& val = split.val.empty() ? split.train : split.val;

  EpochStats e0;
  e0.train_loss = mean_loss(params, split.train, loss);
  e0.val_loss = split.val.empty() ? e0.train_loss : mean_loss(params, val, loss);
  check_finite(e0.train_loss, 0);
  e0.best_val_loss = e0.val_loss;
  report.epochs.push_back(e0);
  if (on_epoch) on_epoch(e0);

  ad::AdamState adam = ad::make_adam_state(params);
  const ad::AdamConfig adam_cfg{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  ad::ParameterSet best = params;
  double best_val = e0.val_loss;
  report.best_epoch = 0;
  std::vector<std::size_t> order = split.train;
  ad::Gradients grads;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      order = split.train;
      CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)), 0x5f);
      rng.shuffle(std::span(order));
    }
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::span<const std::size_t> batch(order.data() + b, std::min(cfg.batch_size, order.size() - b));
      const double l = batch_gradient(params, batch, cfg.shard_size, loss, cfg.seed, epoch, grads);
      check_finite(l, epoch);
      sum += l * static_cast<double>(batch.size());
      ad::adam_step(params, grads, adam, adam_cfg);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = sum / static_cast<double>(order.size());
    st.val_loss = split.val.empty() ? mean_loss(params, split.train, loss) : mean_loss(params, val, loss);
    check_finite(st.val_loss, epoch);
    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      report.best_epoch = epoch;
      if (cfg.early_stopping) best = params;
    }
    st.best_val_loss = best_val;
    report.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
    if (cfg.early_stopping && epoch - report.best_epoch >= cfg.patience) break;
  }
  if (cfg.early_stopping) params = std::move(best);
}

void check_camera(const Dataset& ds, std::size_t height, std::size_t width) {
  if (static_cast<std::size_t>(ds.header.camera.height) != height ||
      static_cast<std::size_t>(ds.header.camera.width) != width)
    throw ShapeError("dataset images are " + std::to_string(ds.header.camera.height) + "x" +
                     std::to_string(ds.header.camera.width) + " but the model expects " + std::to_string(height) +
                     "x" + std::to_string(width));
}

SampleLoss bdm_sample_loss(const Dataset& ds, const nn::BdmConfig& cfg) {
  return [&ds, &cfg](std::size_t i, Tape& tape, Mode, CounterRng&) {
    const Sample& s = ds.samples[i];
    const nn::BdmGraph g = nn::bdm_graph(tape, cfg, tape.constant(image_tensor(s, ds.header.camera)),
                                         tape.constant(Tensor({1}, s.speed / cfg.speed_scale)));
    return ad::mse_loss(g.action, tape.constant(nn::action_tensor(s.action)));
  };
}

// Frozen-BDM outputs per sample.
struct BdmCache {
  std::vector<Tensor> actions;
  std::vector<Tensor> features;
};

BdmCache bdm_outputs(const nn::BdmModel& bdm, const Dataset& ds, std::span<const std::size_t> indices) {
  BdmCache c;
  c.actions.resize(ds.size());
  c.features.resize(ds.size());
  parallel_indexed(indices.size(), [&](std::size_t k) {
    const std::size_t i = indices[k];
    const nn::BdmOutput out = nn::bdm_forward(ds.observation(i), ds.samples[i].speed, bdm, Mode::eval);
    c.actions[i] = nn::action_tensor(out.action);
    c.features[i] = Tensor({out.features.size()}, out.features);
  });
  return c;
}

SampleLoss pb_sample_loss(const Dataset& ds, const nn::PbConfig& cfg, const BdmCache& cache) {
  return [&ds, &cfg, &cache](std::size_t i, Tape& tape, Mode mode, CounterRng& rng) {
    const Sample& s = ds.samples[i];
    const Var out =
        nn::pb_graph(tape, cfg, tape.constant(cache.actions[i]), tape.constant(cache.features[i]),
                     tape.constant(Tensor({1}, s.speed / cfg.speed_scale)),
                     tape.constant(Tensor({1}, (s.target_speed - s.speed) / cfg.gap_scale)), mode, rng);
    return ad::mse_loss(out, tape.constant(nn::action_tensor(s.action)));
  };
}

std::vector<std::size_t> all_or(const Dataset& ds, std::span<const std::size_t> indices) {
  if (!indices.empty()) return {indices.begin(), indices.end()};
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

void require_trained(const nn::BdmModel& bdm) {
  if (!bdm.trained) throw UsageError("the baseline model is untrained; train it before the personalized block");
}

}  // namespace

nn::BdmModel train_bdm(const Dataset& ds, const nn::BdmConfig& model_config, const TrainConfig& config,
                       TrainReport* report, const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  ds.validate();
  check_camera(ds, model_config.image_height, model_config.image_width);
  nn::BdmModel model = nn::init_bdm(model_config, config.seed);
  const Split split = split_indices(ds, config.validation_fraction, config.seed);
  TrainReport local;
  fit(model.params, split, config, bdm_sample_loss(ds, model.config), local, on_epoch);
  model.trained = true;
  model.provenance = {{"dataset_digest", ds.digest()},
                      {"dataset_driver", ds.header.driver},
                      {"seed", config.seed},
                      {"train_config", config.to_json()},
                      {"epochs_run", static_cast<int>(local.epochs.size()) - 1},
                      {"best_epoch", local.best_epoch},
                      {"best_val_loss", local.epochs.empty() ? 0.0 : local.epochs.back().best_val_loss}};
  if (report) *report = std::move(local);
  return model;
}

nn::PbModel train_pb(const Dataset& ds, const nn::BdmModel& bdm, const nn::PbConfig& model_config,
                     const TrainConfig& config, TrainReport* report, const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  require_trained(bdm);
  ds.validate();
  check_camera(ds, bdm.config.image_height, bdm.config.image_width);
  nn::PbModel model = nn::init_pb(model_config, config.seed);
  nn::check_pair(bdm, model);
  const std::string frozen_before = parameter_digest(bdm.params);

  const auto all = all_or(ds, {});
  const BdmCache cache = bdm_outputs(bdm, ds, all);
  const Split split = split_indices(ds, config.validation_fraction, config.seed);
  TrainReport local;
  fit(model.params, split, config, pb_sample_loss(ds, model.config, cache), local, on_epoch);

  const std::string frozen_after = parameter_digest(bdm.params);
  if (frozen_after != frozen_before) throw TrainingError("baseline model parameters changed during PB training", 0);
  model.trained = true;
  model.provenance = {{"dataset_digest", ds.digest()},
                      {"dataset_driver", ds.header.driver},
                      {"seed", config.seed},
                      {"train_config", config.to_json()},
                      {"bdm_digest", frozen_before},
                      {"epochs_run", static_cast<int>(local.epochs.size()) - 1},
                      {"best_epoch", local.best_epoch},
                      {"best_val_loss", local.epochs.empty() ? 0.0 : local.epochs.back().best_val_loss}};
  if (report) *report = std::move(local);
  return model;
}

double bdm_loss(const nn::BdmModel& model, const Dataset& ds, std::span<const std::size_t> indices) {
  ds.validate();
  check_camera(ds, model.config.image_height, model.config.image_width);
  const auto idx = all_or(ds, indices);
  return mean_loss(model.params, idx, bdm_sample_loss(ds, model.config));
}

double pb_loss(const nn::PbModel& pb, const nn::BdmModel& bdm, const Dataset& ds,
               std::span<const std::size_t> indices) {
  ds.validate();
  nn::check_pair(bdm, pb);
  check_camera(ds, bdm.config.image_height, bdm.config.image_width);
  const auto idx = all_or(ds, indices);
  const BdmCache cache = bdm_outputs(bdm, ds, idx);
  return mean_loss(pb.params, idx, pb_sample_loss(ds, pb.config, cache));
}

}  // namespace styleforge::train
