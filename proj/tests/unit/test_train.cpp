#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "styleforge/common/errors.hpp"
#include "styleforge/train/collect.hpp"
#include "styleforge/train/trainer.hpp"

using namespace styleforge;
using namespace styleforge::train;

namespace {

const std::string kFixtures = SF_FIXTURES;

sim::TrackGeometry test_track() { return sim::build_track(sim::load_track_spec(kFixtures + "/tracks/test.json")); }

CollectConfig small_collect(int episodes, std::size_t steps, std::uint64_t seed = 1) {
  CollectConfig c;
  c.episodes = episodes;
  c.steps_per_episode = steps;
  c.seed = seed;
  return c;
}

// A few samples from both presets, cached across cases.
const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    auto r = collect_mixed(style::preset_a(), style::preset_b(), test_track(), small_collect(2, 24, 9));
    return r.dataset;
  }();
  return ds;
}

TrainConfig quick_train(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.validation_fraction = 0.25;
  tc.early_stopping = false;
  return tc;
}

}  // namespace

TEST_CASE("one episode of 100 steps") {
  const auto r = collect_scripted(style::preset_a(), test_track(), small_collect(1, 100));
  CHECK(r.aborted.empty());
  REQUIRE(r.dataset.size() == 100);
  for (std::size_t i = 1; i < 100; ++i) CHECK(r.dataset.samples[i].timestamp > r.dataset.samples[i - 1].timestamp);
  for (const auto& s : r.dataset.samples) CHECK(s.target_speed == 20.0);
  CHECK(r.dataset.header.driver == "A");
  r.dataset.validate();
}

TEST_CASE("collection is deterministic per seed") {
  const auto track = test_track();
  const auto a = collect_scripted(style::preset_b(), track, small_collect(2, 50, 4));
  const auto b = collect_scripted(style::preset_b(), track, small_collect(2, 50, 4));
  const auto c = collect_scripted(style::preset_b(), track, small_collect(2, 50, 5));
  CHECK(a.dataset.digest() == b.dataset.digest());
  CHECK(a.dataset.digest() != c.dataset.digest());
}

TEST_CASE("mixed collection cycles target speeds") {
  const auto r = collect_mixed(style::preset_a(), style::preset_b(), test_track(), small_collect(4, 10));
  std::set<double> targets;
  for (const auto& s : r.dataset.samples) targets.insert(s.target_speed);
  CHECK(targets == std::set<double>{12.0, 16.0, 20.0, 24.0});
  CHECK(r.dataset.header.driver == "mixed");
}

TEST_CASE("style blend endpoints") {
  const auto a = style::preset_a().params, b = style::preset_b().params;
  const auto zero = blend_styles(a, b, 0.0);
  CHECK(zero.throttle_kp == doctest::Approx(a.throttle_kp));
  CHECK(zero.max_jerk == doctest::Approx(a.max_jerk));
  CHECK(zero.anticipation_distance == doctest::Approx(a.anticipation_distance));
  const auto one = blend_styles(a, b, 1.0);
  CHECK(one.throttle_kp == doctest::Approx(b.throttle_kp));
  CHECK(one.anticipation_distance == doctest::Approx(b.anticipation_distance));
  const auto mid = blend_styles(a, b, 0.5);
  CHECK(mid.throttle_kp > a.throttle_kp);
  CHECK(mid.throttle_kp < b.throttle_kp);
}

TEST_CASE("off-track episodes are discarded and reported") {
  CollectConfig c = small_collect(2, 600);
  c.steer_noise = 3.0;
  c.noise_hold = 2.0;
  const auto r = collect_scripted(style::preset_b(), test_track(), c);
  REQUIRE_FALSE(r.aborted.empty());
  CHECK(r.dataset.header.meta.at("aborted").size() == r.aborted.size());
  for (const auto& s : r.dataset.samples)
    for (const auto& ab : r.aborted) CHECK(s.episode != ab.episode);
}

TEST_CASE("dataset container round trip is byte stable") {
  const Dataset& ds = tiny_dataset();
  const auto bytes = encode_dataset(ds);
  const Dataset back = decode_dataset(bytes);
  CHECK(back.digest() == ds.digest());
  CHECK(encode_dataset(back) == bytes);
  CHECK(back.header.meta == ds.header.meta);

  const auto dir = std::filesystem::temp_directory_path() / "sf_test_train";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "tiny.sfds").string();
  save_dataset(path, ds);
  CHECK(std::filesystem::exists(path + ".json"));
  CHECK(load_dataset(path).digest() == ds.digest());
  CHECK(dataset_manifest(ds).at("digest") == ds.digest());

  auto cut = bytes;
  cut.resize(cut.size() - 10);
  CHECK_THROWS_AS(decode_dataset(cut), DataError);
}

TEST_CASE("missing target speed is a data error") {
  Dataset ds = tiny_dataset();
  ds.samples[3].target_speed = 0.0;
  try {
    ds.validate();
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("V^g") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_dataset(encode_dataset(ds)), DataError);
  const auto bdm = [] {
    auto m = nn::init_bdm(nn::BdmConfig{}, 1);
    m.trained = true;
    return m;
  }();
  CHECK_THROWS_AS(train_pb(ds, bdm, nn::PbConfig::for_bdm(bdm.config), quick_train(1)), DataError);
  Dataset empty = tiny_dataset();
  empty.samples.clear();
  CHECK_THROWS_AS(empty.validate(), DataError);
}

TEST_CASE("split is a deterministic partition") {
  const Dataset& ds = tiny_dataset();
  const Split a = split_indices(ds, 0.25, 3), b = split_indices(ds, 0.25, 3), c = split_indices(ds, 0.25, 4);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK((a.train != c.train || a.val != c.val));
  CHECK(a.val.size() == ds.size() / 4);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.val.begin(), a.val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  TrainConfig bad;
  bad.validation_fraction = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("N identical samples: the model fits that action") {
  Dataset ds = tiny_dataset();
  ds.samples.resize(16, ds.samples.front());
  for (auto& s : ds.samples) {
    s = ds.samples.front();
    s.action = {0.1, 0.5, 0.02};
  }
  TrainConfig tc = quick_train(40);
  tc.learning_rate = 3e-3;
  tc.validation_fraction = 0.0;
  TrainReport report;
  const auto model = train_bdm(ds, nn::BdmConfig{}, tc, &report);
  CHECK(model.trained);
  CHECK(report.epochs.back().train_loss < 1e-3);
  CHECK(bdm_loss(model, ds) < 1e-3);
}

TEST_CASE("seed replay and thread count give identical weights") {
  const Dataset& ds = tiny_dataset();
  const TrainConfig tc = quick_train(2);
  const int threads = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = train_bdm(ds, nn::BdmConfig{}, tc);
  omp_set_num_threads(4);
  const auto four = train_bdm(ds, nn::BdmConfig{}, tc);
  omp_set_num_threads(threads);
  const auto again = train_bdm(ds, nn::BdmConfig{}, tc);
  CHECK(parameter_digest(one.params) == parameter_digest(four.params));
  CHECK(parameter_digest(one.params) == parameter_digest(again.params));
  TrainConfig other = tc;
  other.seed = 2;
  CHECK(parameter_digest(train_bdm(ds, nn::BdmConfig{}, other).params) != parameter_digest(one.params));
}

TEST_CASE("epoch reporting and best-so-far validation loss") {
  const Dataset& ds = tiny_dataset();
  TrainConfig tc = quick_train(4);
  tc.early_stopping = true;
  tc.patience = 2;
  TrainReport report;
  std::vector<int> seen;
  train_bdm(ds, nn::BdmConfig{}, tc, &report, [&](const EpochStats& e) { seen.push_back(e.epoch); });
  REQUIRE(!report.epochs.empty());
  CHECK(report.epochs.front().epoch == 0);
  CHECK(seen.front() == 0);
  for (std::size_t i = 1; i < report.epochs.size(); ++i)
    CHECK(report.epochs[i].best_val_loss <= report.epochs[i - 1].best_val_loss);
  CHECK(report.train_count + report.val_count == ds.size());
  CHECK(report.to_json().at("epochs").size() == report.epochs.size());
}

TEST_CASE("divergence names the epoch") {
  TrainConfig tc = quick_train(3);
  tc.learning_rate = 1e308;
  try {
    train_bdm(tiny_dataset(), nn::BdmConfig{}, tc);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() >= 1);
    CHECK(std::string(e.what()).find(std::to_string(e.epoch())) != std::string::npos);
  }
}

TEST_CASE("PB training refuses an untrained BDM and never touches the BDM") {
  const Dataset& ds = tiny_dataset();
  nn::BdmModel bdm = nn::init_bdm(nn::BdmConfig{}, 5);
  CHECK_THROWS_AS(train_pb(ds, bdm, nn::PbConfig::for_bdm(bdm.config), quick_train(1)), UsageError);
  bdm.trained = true;
  const std::string before = parameter_digest(bdm.params);
  const auto bundle_before = nn::encode_bundle(bdm);
  TrainReport report;
  const auto pb = train_pb(ds, bdm, nn::PbConfig::for_bdm(bdm.config), quick_train(3), &report);
  CHECK(parameter_digest(bdm.params) == before);
  CHECK(nn::encode_bundle(bdm) == bundle_before);
  CHECK(pb.trained);
  CHECK(report.epochs.back().train_loss < report.epochs.front().train_loss);
  CHECK(pb.provenance.contains("dataset_digest"));
}
