#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "styleforge/ad/kernels.hpp"
#include "styleforge/common/errors.hpp"
#include "styleforge/common/rng.hpp"
#include "styleforge/nn/models.hpp"
#include "fd_check.hpp"

using namespace styleforge;
using namespace styleforge::nn;

namespace {

sim::Observation random_obs(std::uint64_t seed, int w = 64, int h = 64) {
  sim::Observation o;
  o.width = w;
  o.height = h;
  o.pixels.resize(static_cast<std::size_t>(w * h));
  CounterRng rng(seed);
  for (auto& p : o.pixels) p = static_cast<double>(rng.below(256)) / 255.0;
  return o;
}

bool in_range(const sim::ActionTriple& a) {
  return std::isfinite(a.steering) && std::isfinite(a.throttle) && std::isfinite(a.brake) && a.in_range();
}

// Conv stack recomputed with the serial kernels, no tape.
std::vector<double> serial_features(const BdmModel& m, const sim::Observation& obs) {
  std::vector<double> x = obs.pixels, feats;
  std::size_t c = 1, h = m.config.image_height, w = m.config.image_width;
  for (std::size_t i = 0; i < m.config.conv.size(); ++i) {
    const auto& l = m.config.conv[i];
    const kernels::ConvGeometry g{c, h, w, l.filters, l.kernel, l.kernel, l.stride};
    const auto& k = m.params[m.params.index_of("conv" + std::to_string(i + 1) + ".kernel")].value;
    const auto& b = m.params[m.params.index_of("conv" + std::to_string(i + 1) + ".bias")].value;
    std::vector<double> y(g.filters * g.positions());
    kernels::serial::conv2d_forward(g, x, k.data(), b.data(), y);
    for (auto& v : y) v = std::max(v, 0.0);
    if (i == 2 || i == 4) feats.insert(feats.end(), y.begin(), y.end());
    x = std::move(y);
    c = g.filters;
    h = g.out_h();
    w = g.out_w();
  }
  return feats;
}

}  // namespace

TEST_CASE("feature length for the default config") {
  // 64 -> (64-5)/2+1 = 30 -> (30-5)/2+1 = 13 -> (13-5)/2+1 = 5 -> 5-3+1 = 3 -> 3-3+1 = 1
  // phi = 48*5*5 + 64*1*1 = 1264
  const BdmConfig cfg;
  CHECK(cfg.feature_length() == 1264);
  const auto shapes = cfg.conv_output_shapes();
  REQUIRE(shapes.size() == 5);
  const std::array<std::size_t, 3> expect[] = {{24, 30, 30}, {36, 13, 13}, {48, 5, 5}, {64, 3, 3}, {64, 1, 1}};
  for (std::size_t i = 0; i < 5; ++i) CHECK(shapes[i] == expect[i]);
  CHECK(PbConfig::for_bdm(cfg).feature_length == 1264);
  CHECK(PbConfig::for_bdm(cfg).fusion_input() == 112);
}

TEST_CASE("config invariants") {
  BdmConfig cfg;
  cfg.conv.pop_back();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.image_height = 40;  // conv stack no longer fits
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.dense = {100, 50, 4};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  PbConfig pb = PbConfig::for_bdm(BdmConfig{});
  pb.dropout_rate = 1.0;
  CHECK_THROWS_AS(pb.validate(), ConfigError);
  CHECK(BdmConfig::from_json(BdmConfig{}.to_json()).to_json() == BdmConfig{}.to_json());
}

TEST_CASE("fresh models produce finite in-range actions") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 3);
  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 4);
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto obs = random_obs(s);
    const auto out = bdm_forward(obs, 3.0 * static_cast<double>(s), bdm);
    CHECK(in_range(out.action));
    CHECK(out.features.size() == 1264);
    CHECK(in_range(pb_forward(out.action, out.features, 10.0, 0.0, pb)));
    // Extreme but finite inputs.
    CHECK(in_range(pb_forward({1, 1, 1}, out.features, 1e6, -1e6, pb)));
  }
}

TEST_CASE("eval mode is deterministic") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 5);
  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 6);
  const auto obs = random_obs(9);
  const auto a = bdm_forward(obs, 12.0, bdm), b = bdm_forward(obs, 12.0, bdm);
  CHECK(a.action == b.action);
  CHECK(a.features == b.features);
  CHECK(pb_forward(a.action, a.features, 12.0, 3.0, pb) == pb_forward(a.action, a.features, 12.0, 3.0, pb));
  // Same seed, same weights.
  CHECK(init_bdm(BdmConfig{}, 5).params[0].value == bdm.params[0].value);
  CHECK_FALSE(init_bdm(BdmConfig{}, 7).params[0].value == bdm.params[0].value);
}

TEST_CASE("train-mode dropout depends only on the rng") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 5);
  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 6);
  const auto out = bdm_forward(random_obs(2), 12.0, bdm);
  CounterRng r1(1), r2(1);
  CHECK(pb_forward(out.action, out.features, 12, 2, pb, ad::Mode::train, &r1) ==
        pb_forward(out.action, out.features, 12, 2, pb, ad::Mode::train, &r2));
}

TEST_CASE("toggle off returns the BDM action bitwise") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 8);
  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 9);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto obs = random_obs(100 + s);
    const auto base = bdm_forward(obs, 15.0, bdm);
    const auto off = ndst_forward(obs, 15.0, 20.0, bdm, nullptr);
    CHECK(std::memcmp(&off, &base.action, sizeof off) == 0);
    CHECK(ndst_forward(obs, 15.0, 20.0, bdm, &pb) == pb_forward(base.action, base.features, 15.0, 5.0, pb));
  }
}

TEST_CASE("the PB output depends on the BDM action it receives") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 8);
  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 9);
  const auto base = bdm_forward(random_obs(140), 15.0, bdm);
  const auto a = pb_forward(base.action, base.features, 15.0, 0.0, pb);
  const auto b = pb_forward({-base.action.steering, 1.0 - base.action.throttle, 1.0}, base.features, 15.0, 0.0, pb);
  CHECK_FALSE(a == b);
}

TEST_CASE("features match an independent serial recomputation") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 10);
  const auto obs = random_obs(11);
  const auto f = bdm_forward(obs, 5.0, bdm).features;
  const auto ref = serial_features(bdm, obs);
  REQUIRE(f.size() == ref.size());
  for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(std::abs(f[i] - ref[i]) <= 1e-12 * std::max(1.0, std::abs(ref[i])));
}

TEST_CASE("mismatches are reported") {
  const BdmModel bdm = init_bdm(BdmConfig{}, 1);
  CHECK_THROWS_AS(bdm_forward(random_obs(1, 64, 48), 1.0, bdm), ShapeError);
  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 2);
  CHECK_THROWS_AS(pb_forward({}, std::vector<double>(10, 0.0), 1.0, 0.0, pb), ShapeError);
  PbConfig other = PbConfig::for_bdm(bdm.config);
  other.feature_length = 1000;
  const PbModel wrong = init_pb(other, 3);
  CHECK_THROWS_AS(ndst_forward(random_obs(1), 1.0, 2.0, bdm, &wrong), ConfigError);
}

TEST_CASE("model bundles round trip") {
  BdmModel bdm = init_bdm(BdmConfig{}, 12);
  bdm.trained = true;
  bdm.provenance = {{"seed", 12}, {"dataset", "abc"}};
  const auto bytes = encode_bundle(bdm);
  CHECK(bundle_kind(bytes) == "bdm");
  const BdmModel back = decode_bdm_bundle(bytes);
  CHECK(back.trained);
  CHECK(back.provenance == bdm.provenance);
  CHECK(back.arch_hash() == bdm.arch_hash());
  CHECK(encode_bundle(back) == bytes);
  CHECK_THROWS_AS(decode_pb_bundle(bytes), DataError);

  const PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 13);
  const auto pbytes = encode_bundle(pb);
  CHECK(bundle_kind(pbytes) == "pb");
  const PbModel pback = decode_pb_bundle(pbytes);
  CHECK_FALSE(pback.trained);
  for (std::size_t i = 0; i < pb.params.size(); ++i) CHECK(pback.params[i].value == pb.params[i].value);

  auto cut = bytes;
  cut.resize(cut.size() / 2);
  CHECK_THROWS_AS(decode_bdm_bundle(cut), DataError);
}

TEST_CASE("finite differences through the full BDM") {
  BdmModel bdm = init_bdm(BdmConfig{}, 21);
  const auto obs = random_obs(22);
  const ad::Tensor target({3}, {0.2, 0.4, 0.1});
  const sf_test::LossFn fn = [&](ad::Tape& t) {
    const BdmGraph g = bdm_graph(t, bdm.config, t.constant(observation_tensor(obs)), t.constant(ad::Tensor({1}, {0.3})));
    return ad::mse_loss(g.action, t.constant(target));
  };
  {
    const auto fd = sf_test::fd_check(bdm.params, fn, 12);
    CHECK(fd.max_rel < 1e-4);
    CHECK(fd.checked >= 100);
    CHECK(fd.kinks * 10 <= fd.checked);
  }
}

TEST_CASE("finite differences through the full PB with a frozen BDM") {
  BdmModel bdm = init_bdm(BdmConfig{}, 23);
  bdm.params.set_trainable(false);
  PbModel pb = init_pb(PbConfig::for_bdm(bdm.config), 24);
  const auto base = bdm_forward(random_obs(25), 9.0, bdm);
  const ad::Tensor target({3}, {-0.1, 0.7, 0.0});
  const sf_test::LossFn fn = [&](ad::Tape& t) {
    CounterRng rng(26);
    const ad::Var out = pb_graph(t, pb.config, t.constant(action_tensor(base.action)),
                                 t.constant(ad::Tensor({base.features.size()}, base.features)),
                                 t.constant(ad::Tensor({1}, {9.0 / 40})), t.constant(ad::Tensor({1}, {6.0 / 4})),
                                 ad::Mode::train, rng);
    return ad::mse_loss(out, t.constant(target));
  };
  {
    const auto fd = sf_test::fd_check(pb.params, fn, 40);
    CHECK(fd.max_rel < 1e-4);
    CHECK(fd.checked >= 100);
    CHECK(fd.kinks * 10 <= fd.checked);
  }
}
