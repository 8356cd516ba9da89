#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/eval/metrics.hpp"
#include "styleforge/eval/report.hpp"
#include "styleforge/eval/rollout.hpp"
#include "styleforge/style/driver.hpp"

using namespace styleforge;
using namespace styleforge::eval;

namespace {

const std::string kFixtures = SF_FIXTURES;

sim::TrackGeometry fixture(const std::string& name) {
  return sim::build_track(sim::load_track_spec(kFixtures + "/tracks/" + name + ".json"));
}

// Synthetic straight-line trajectory from a speed profile, progress by the
// trapezoid rule.
Trajectory synthetic(const std::vector<double>& speeds, double dt, double curvature = 0.0) {
  Trajectory tr;
  tr.name = "synthetic";
  tr.dt = dt;
  double p = 0.0;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (i > 0) p += 0.5 * (speeds[i] + speeds[i - 1]) * dt;
    TrajectoryStep st;
    st.t = static_cast<double>(i) * dt;
    st.state.speed = speeds[i];
    st.s = st.progress = p;
    st.curvature = curvature;
    st.section = curvature == 0.0 ? sim::SectionType::straight
                                  : (curvature > 0 ? sim::SectionType::left : sim::SectionType::right);
    tr.steps.push_back(st);
  }
  return tr;
}

Trajectory run_preset(const style::StylePreset& preset, const sim::TrackGeometry& g, bool render = false) {
  RolloutConfig rc;
  rc.render = render;
  return rollout(scripted_policy(preset.params, rc.vehicle, rc.dt), g, rc, preset.name);
}

}  // namespace

TEST_CASE("convex hull and polygon area") {
  std::vector<Point2> pts{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.5, 0}, {0.2, 0.9}};
  const auto hull = convex_hull(pts);
  CHECK(hull.size() == 4);
  CHECK(polygon_area(hull) == doctest::Approx(1.0));
  CHECK(polygon_area(convex_hull({{0, 0}, {4, 0}, {0, 3}})) == doctest::Approx(6.0));
  CHECK(polygon_area(convex_hull({{0, 0}, {1, 1}, {2, 2}})) == 0.0);
  CHECK(convex_hull({}).empty());
}

TEST_CASE("constant speed on a straight: G-G collapses to the origin") {
  const GgDiagram g = gg_diagram(synthetic(std::vector<double>(50, 10.0), 0.05));
  for (const auto& p : g.points) {
    CHECK(p.a_long == doctest::Approx(0.0));
    CHECK(p.a_lat == 0.0);
  }
  CHECK(g.section(sim::SectionType::straight).hull_area < 1e-6);
}

TEST_CASE("15 m/s on a radius-75 arc gives 3 m/s^2 lateral") {
  const GgDiagram g = gg_diagram(synthetic(std::vector<double>(50, 15.0), 0.05, 1.0 / 75.0));
  for (const auto& p : g.points) {
    CHECK(p.a_lat == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(p.a_long == doctest::Approx(0.0));
    CHECK(p.section == sim::SectionType::left);
  }
  CHECK(g.section(sim::SectionType::left).count == 50);
}

TEST_CASE("constant 1 m/s^2 from 15 to 20 m/s takes 87.5 m") {
  const double dt = 0.05;
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(std::min(20.0, 15.0 + i * dt));
  const Trajectory tr = synthetic(v, dt);
  const DistanceResult r = distance_to_target_speed(tr, 0.0, 20.0, 1e-9);
  REQUIRE(r.reached);
  // (20^2 - 15^2) / 2
  CHECK(r.distance == doctest::Approx(87.5).epsilon(1e-6));
  const GgDiagram g = gg_diagram(tr);
  CHECK(g.points[50].a_long == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("distance is zero at target and unreached reports max speed") {
  const Trajectory at = synthetic(std::vector<double>(60, 20.1), 0.05);
  const DistanceResult r0 = distance_to_target_speed(at, 0.0, 20.0, 0.25);
  CHECK(r0.reached);
  CHECK(r0.distance == 0.0);
  std::vector<double> v;
  for (int i = 0; i < 60; ++i) v.push_back(10.0 + 0.1 * i);
  const DistanceResult r1 = distance_to_target_speed(synthetic(v, 0.05), 0.0, 20.0, 0.25);
  CHECK_FALSE(r1.reached);
  CHECK(r1.max_speed == doctest::Approx(15.9));
  // Touching the band for less than the sustain window does not count.
  std::vector<double> blip(60, 15.0);
  for (int i = 10; i < 20; ++i) blip[i] = 20.0;
  CHECK_FALSE(distance_to_target_speed(synthetic(blip, 0.05), 0.0, 20.0, 0.25).reached);
}

TEST_CASE("percentile interpolation") {
  const std::vector<double> v{-4, 1, 2, 3};
  CHECK(abs_percentile(v, 0.0) == 1.0);
  CHECK(abs_percentile(v, 1.0) == 4.0);
  CHECK(abs_percentile(v, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("zero-action policy coasts to rest and is flagged incomplete") {
  const auto g = fixture("test");
  RolloutConfig rc;
  rc.render = false;
  rc.start_speed = 10.0;
  const Trajectory tr = rollout([](const PolicyInput&) { return sim::ActionTriple{}; }, g, rc, "coast");
  CHECK(tr.termination == Termination::stopped);
  CHECK_FALSE(tr.completed());
  CHECK(tr.steps.back().state.speed < 0.01);
  CHECK(tr.max_abs_cte() < 1e-9);
  // Exponential drag decay covers v0 / drag = 200 m at most.
  CHECK(tr.steps.back().progress <= 200.0);
}

TEST_CASE("scripted preset A completes two laps") {
  const auto g = fixture("test");
  const Trajectory tr = run_preset(style::preset_a(), g);
  CHECK(tr.completed());
  CHECK(tr.laps_completed == 2);
  CHECK(tr.max_abs_cte() < g.lane_half_width());
  for (std::size_t i = 1; i < tr.steps.size(); ++i) {
    REQUIRE(tr.steps[i].progress >= tr.steps[i - 1].progress);
    REQUIRE(tr.steps[i].t - tr.steps[i - 1].t == doctest::Approx(tr.dt));
  }
}

TEST_CASE("replay gives identical trajectories and metrics") {
  const auto g = fixture("mixed");
  const Trajectory a = run_preset(style::preset_b(), g, true);
  const Trajectory b = run_preset(style::preset_b(), g, true);
  CHECK(a.completed());
  CHECK(trajectory_digest(a) == trajectory_digest(b));
  CHECK(compute_metrics(a, g).to_json().dump() == compute_metrics(b, g).to_json().dump());
}

TEST_CASE("section tags follow curvature sign and v^2 kappa matches position curvature") {
  const auto g = fixture("test");
  const Trajectory tr = run_preset(style::preset_a(), g);
  const GgDiagram gg = gg_diagram(tr);
  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    const double k = g.curvature(tr.steps[i].s);
    const auto expect = k == 0.0 ? sim::SectionType::straight : (k > 0 ? sim::SectionType::left : sim::SectionType::right);
    REQUIRE(gg.points[i].section == expect);
  }
  // Steady arc steps: at least 30 m in, 10 m before the end.
  double pos_sum = 0.0, model_sum = 0.0, along = 0.0;
  std::size_t n = 0;
  const double dt = tr.dt;
  for (std::size_t i = 1; i + 1 < tr.steps.size(); ++i) {
    const auto& seg = g.segments()[g.segment_index(tr.steps[i].s)];
    const double into = g.wrap(tr.steps[i].s) - seg.s_begin;
    if (seg.curvature == 0.0 || into < 30.0 || into > seg.length - 10.0) continue;
    const auto& p0 = tr.steps[i - 1].state;
    const auto& p1 = tr.steps[i].state;
    const auto& p2 = tr.steps[i + 1].state;
    const double ax = (p2.x - 2 * p1.x + p0.x) / (dt * dt), ay = (p2.y - 2 * p1.y + p0.y) / (dt * dt);
    pos_sum += std::hypot(ax, ay);
    model_sum += std::abs(gg.points[i].a_lat);
    along += gg.points[i].a_long;
    ++n;
  }
  REQUIRE(n > 100);
  CHECK(std::abs(pos_sum - model_sum) / model_sum < 0.02);
  CHECK(std::abs(along / static_cast<double>(n)) < 0.05);
  // Mean lateral acceleration on the R = 75 arcs at the planned 15 m/s.
  CHECK(std::abs(model_sum / static_cast<double>(n) - 3.0) / 3.0 < 0.02);
}

TEST_CASE("curve events and headline exit") {
  const auto g = fixture("test");
  const Trajectory tr = run_preset(style::preset_a(), g);
  const auto exits = curve_exit_events(tr, g);
  const auto entries = curve_entry_events(tr, g);
  CHECK(exits.size() >= 8);  // two laps of at least four arcs
  // The final exit coincides with the finish line and is not observed.
  CHECK(entries.size() == exits.size() + 1);
  const auto headline = headline_exit_event(tr, g);
  REQUIRE(headline);
  CHECK(*headline == doctest::Approx(g.total_length()).epsilon(1e-9));
  const MetricsReport m = compute_metrics(tr, g);
  REQUIRE(m.headline());
  CHECK(m.headline()->result.reached);
  CHECK(m.max_curve_entry_speed() < 20.0);
  CHECK(m.curve_hull_area >= 0.0);
}

TEST_CASE("empty comparison writes header-only files") {
  const auto dir = std::filesystem::temp_directory_path() / "sf_test_eval_empty";
  std::filesystem::remove_all(dir);
  emit_report(dir.string(), {}, {});
  const std::string csv = read_text_file((dir / "metrics.csv").string());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  const auto summary = nlohmann::json::parse(read_text_file((dir / "summary.json").string()));
  CHECK(summary.at("models").empty());
}

TEST_CASE("two-model summary names both models") {
  const auto g = fixture("test");
  const Trajectory a = run_preset(style::preset_a(), g), b = run_preset(style::preset_b(), g);
  const std::vector<MetricsReport> reports{compute_metrics(a, g), compute_metrics(b, g)};
  const auto dir = std::filesystem::temp_directory_path() / "sf_test_eval_two";
  std::filesystem::remove_all(dir);
  const auto files = emit_report(dir.string(), {a, b}, reports);
  CHECK(files.paths.size() == 4);
  const auto summary = summary_json(reports);
  CHECK(summary.at("models")[0].at("name") == "A");
  CHECK(summary.at("models")[1].at("name") == "B");
  CHECK(summary.at("comparisons")[0].at("exit_distance_ratio").get<double>() < 0.6);
  const std::string csv = read_text_file((dir / "metrics.csv").string());
  CHECK(csv.find("\nA,") != std::string::npos);
  CHECK(csv.find("\nB,") != std::string::npos);
}

TEST_CASE("trajectory file matches the golden rows") {
  Trajectory tr = synthetic({10.0, 11.0, 12.0}, 0.5);
  tr.name = "tiny";
  tr.track_id = "golden";
  for (auto& s : tr.steps) {
    s.state.x = s.progress;
    s.action.throttle = 0.5;
  }
  CHECK(trajectory_csv(tr) == read_text_file(kFixtures + "/golden/tiny_trajectory.csv"));
}
