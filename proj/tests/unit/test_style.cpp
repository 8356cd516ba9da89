#include <doctest.h>

#include <cmath>
#include <string>

#include "styleforge/common/errors.hpp"
#include "styleforge/eval/metrics.hpp"
#include "styleforge/eval/rollout.hpp"
#include "styleforge/sim/frame.hpp"
#include "styleforge/style/driver.hpp"

using namespace styleforge;
using namespace styleforge::style;

namespace {

const std::string kFixtures = SF_FIXTURES;

sim::TrackGeometry fixture(const std::string& name) {
  return sim::build_track(sim::load_track_spec(kFixtures + "/tracks/" + name + ".json"));
}

sim::TrackFrame frame_at(const sim::TrackGeometry& g, double s, double speed, sim::VehicleState* out = nullptr) {
  const sim::Pose p = g.point_at(s);
  const sim::VehicleState st{p.x, p.y, p.heading, speed};
  if (out) *out = st;
  return sim::track_frame(st, g);
}

struct Run {
  eval::Trajectory traj;
  eval::MetricsReport metrics;
};

Run run_preset(const StylePreset& preset, const sim::TrackGeometry& g) {
  eval::RolloutConfig rc;
  rc.render = false;
  auto traj = eval::rollout(eval::scripted_policy(preset.params, rc.vehicle, rc.dt), g, rc, preset.name);
  auto m = eval::compute_metrics(traj, g);
  return {std::move(traj), std::move(m)};
}

}  // namespace

TEST_CASE("no curve inside the anticipation window plans the target speed") {
  const auto g = fixture("test");
  const StyleParams p = preset_a().params;
  CHECK(plan_target_speed(frame_at(g, 100.0, 20.0), p) == p.target_speed);
}

TEST_CASE("fixture curve radius yields a 15 m/s curve speed") {
  const auto g = fixture("test");
  for (const auto& preset : {preset_a(), preset_b()}) {
    // Middle of the first left arc.
    CHECK(plan_target_speed(frame_at(g, 950.0, 15.0), preset.params) == doctest::Approx(15.0).epsilon(1e-12));
  }
}

TEST_CASE("approaching a curve inside the window plans below target") {
  const auto g = fixture("test");
  const StyleParams p = preset_a().params;
  // The first arc starts at s = 900; distance 50 < 110.
  const double v = plan_target_speed(frame_at(g, 850.0, 20.0), p);
  CHECK(v < p.target_speed);
  CHECK(v == doctest::Approx(std::sqrt(kComfortLateralAccel * 75.0)));
  // Outside B's 15 m window the plan stays at target.
  CHECK(plan_target_speed(frame_at(g, 850.0, 20.0), preset_b().params) == 20.0);
}

TEST_CASE("equilibrium on a straight centerline") {
  const auto g = fixture("test");
  sim::VehicleParams vehicle;
  for (const auto& preset : {preset_a(), preset_b()}) {
    sim::VehicleState st;
    const auto f = frame_at(g, 100.0, preset.params.target_speed, &st);
    DriverState mem;
    const auto a = control(st, f, preset.params, vehicle, mem, 0.05);
    const double v = st.speed;
    const double drag_level = vehicle.drag_coeff * v / (vehicle.throttle_gain * (1.0 - v / vehicle.max_speed));
    CHECK(a.throttle == doctest::Approx(drag_level).epsilon(1e-12));
    CHECK(a.brake == 0.0);
    CHECK(a.steering == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("speed above plan brakes") {
  const auto g = fixture("test");
  sim::VehicleState st;
  const auto f = frame_at(g, 950.0, 20.0, &st);
  for (const auto& preset : {preset_a(), preset_b()}) {
    DriverState mem;
    const auto a = control(st, f, preset.params, sim::VehicleParams{}, mem, 0.05);
    CHECK(a.brake > 0.0);
    CHECK(a.throttle == 0.0);
  }
}

TEST_CASE("preset ordering invariants") {
  const StyleParams a = preset_a().params, b = preset_b().params;
  CHECK(b.throttle_kp > a.throttle_kp);
  CHECK(b.brake_kp > a.brake_kp);
  CHECK(b.anticipation_distance < a.anticipation_distance);
}

TEST_CASE("shipped preset file matches the built-in presets") {
  const auto presets = load_presets(kFixtures + "/presets/styles.json");
  CHECK(find_preset(presets, "A").params == preset_a().params);
  CHECK(find_preset(presets, "B").params == preset_b().params);
  CHECK_THROWS_AS(find_preset(presets, "C"), ConfigError);
}

TEST_CASE("style parameter validation") {
  StyleParams p;
  p.anticipation_distance = 501.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.brake_kp = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.curve_speed_factor = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  auto j = style_params_to_json(preset_b().params);
  CHECK(style_params_from_json(j) == preset_b().params);
  j.erase("lookahead");
  CHECK_THROWS_AS(style_params_from_json(j), ConfigError);
}

TEST_CASE("closed loop: mutual exclusion, jerk bound and determinism") {
  const auto g = fixture("test");
  const sim::VehicleParams vehicle;
  const double dt = 0.05;
  for (const auto& preset : {preset_a(), preset_b()}) {
    auto drive = [&] {
      sim::VehicleState st{0, 0, 0, 0};
      DriverState mem;
      std::vector<double> trace;
      for (int i = 0; i < 4000; ++i) {
        const auto f = sim::track_frame(st, g);
        const double prev = mem.accel_cmd;
        const auto a = control(st, f, preset.params, vehicle, mem, dt);
        REQUIRE(a.throttle * a.brake == 0.0);
        REQUIRE(std::abs(mem.accel_cmd - prev) <= preset.params.max_jerk * dt + 1e-12);
        REQUIRE(a.in_range());
        st = sim::step(st, a, vehicle, dt);
        trace.push_back(st.x);
        trace.push_back(st.speed);
      }
      return trace;
    };
    CHECK(drive() == drive());
  }
}

TEST_CASE("both presets keep the lane for two laps on both tracks") {
  for (const char* name : {"test", "train"}) {
    const auto g = fixture(name);
    for (const auto& preset : {preset_a(), preset_b()}) {
      const Run r = run_preset(preset, g);
      CAPTURE(name);
      CAPTURE(preset.name);
      CHECK(r.traj.termination == eval::Termination::laps_completed);
      CHECK(r.traj.laps_completed == 2);
      CHECK(r.traj.max_abs_cte() < g.lane_half_width());
    }
  }
}

TEST_CASE("style separation on the test track") {
  const auto g = fixture("test");
  const Run a = run_preset(preset_a(), g);
  const Run b = run_preset(preset_b(), g);
  // 95th percentile of |longitudinal accel|.
  CHECK(b.metrics.a_long_p95_abs >= 2.0 * a.metrics.a_long_p95_abs);
  // G-G longitudinal extent.
  CHECK(b.metrics.a_long_max - b.metrics.a_long_min >= 2.0 * (a.metrics.a_long_max - a.metrics.a_long_min));
  REQUIRE(a.metrics.headline());
  REQUIRE(b.metrics.headline());
  REQUIRE(a.metrics.headline()->result.reached);
  REQUIRE(b.metrics.headline()->result.reached);
  CHECK(b.metrics.headline()->result.distance <= 0.6 * a.metrics.headline()->result.distance);
}

TEST_CASE("both presets hold about 15 m/s through the curves") {
  const auto g = fixture("test");
  for (const auto& preset : {preset_a(), preset_b()}) {
    const Run r = run_preset(preset, g);
    double sum = 0.0;
    int n = 0;
    for (const auto& step : r.traj.steps) {
      // Skip the first 30 m of each arc where B is still braking.
      if (step.curvature == 0.0) continue;
      const auto& seg = g.segments()[g.segment_index(step.s)];
      const double into = g.wrap(step.s) - seg.s_begin;
      if (into < 30.0) continue;
      sum += step.state.speed;
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(sum / n == doctest::Approx(15.0).epsilon(0.02));
  }
}
