#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "styleforge/cli/cli.hpp"
#include "styleforge/common/digest.hpp"
#include "styleforge/service/session.hpp"
#include "styleforge/train/collect.hpp"
#include "styleforge/train/trainer.hpp"

using namespace styleforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = SF_FIXTURES;

struct Result {
  int code;
  std::string out, err;
};

Result sf(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "sf_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (scratch_dir() / name).string(); }

void write_text(const std::string& p, const std::string& text) { std::ofstream(p) << text; }

json read_json(const std::string& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string track(const std::string& id) { return kFixtures + "/tracks/" + id + ".json"; }

// Small dataset written through the library, so training runs stay short.
const std::string& tiny_dataset() {
  static const std::string p = [] {
    train::CollectConfig cc;
    cc.episodes = 2;
    cc.steps_per_episode = 120;
    const auto g = sim::build_track(sim::load_track_spec(track("train")));
    train::save_dataset(path("tiny.sfds"), train::collect_scripted(style::preset_b(), g, cc).dataset);
    return path("tiny.sfds");
  }();
  return p;
}

const std::string& tiny_config() {
  static const std::string p = [] {
    write_text(path("tiny.json"), R"({"train": {"epochs": 1, "batch_size": 32, "seed": 5}})");
    return path("tiny.json");
  }();
  return p;
}

const std::string& tiny_bdm() {
  static const std::string p = [] {
    const auto r = sf({"train", "bdm", "--data", tiny_dataset(), "--config", tiny_config(), "--out", path("bdm.sfmb")});
    REQUIRE(r.code == 0);
    return path("bdm.sfmb");
  }();
  return p;
}

struct SeedEnv {
  explicit SeedEnv(const char* v) { setenv("STYLEFORGE_SEED", v, 1); }
  ~SeedEnv() { unsetenv("STYLEFORGE_SEED"); }
};

}  // namespace

TEST_CASE("track validate and info") {
  const auto ok = sf({"track", "validate", track("test")});
  CHECK(ok.code == 0);
  CHECK(ok.out.rfind("ok: test, ", 0) == 0);
  CHECK(json::parse(ok.err).at("command") == "track validate");

  const auto bad = sf({"track", "validate", track("broken")});
  CHECK(bad.code == 3);
  CHECK(bad.err.find("gap") != std::string::npos);

  // 50 m + a quarter circle of radius 20 + 50 m.
  const auto info = sf({"track", "info", track("mixed")});
  REQUIRE(info.code == 0);
  CHECK(json::parse(info.out).at("total_length").get<double>() ==
        doctest::Approx(100.0 + 10.0 * std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("usage errors exit 2") {
  CHECK(sf({}).code == 2);
  CHECK(sf({"bogus"}).code == 2);
  CHECK(sf({"track", "check", track("test")}).code == 2);
  CHECK(sf({"collect", "--driver", "C", "--track", track("test"), "--out", path("x.sfds")}).code == 2);
  const auto pb = sf({"train", "pb", "--data", tiny_dataset(), "--out", path("x.sfmb")});
  CHECK(pb.code == 2);
  CHECK(pb.err.find("--bdm") != std::string::npos);
  SeedEnv env("twelve");
  CHECK(sf({"collect", "--driver", "A", "--track", track("test"), "--out", path("x.sfds")}).code == 2);
}

TEST_CASE("collect writes a dataset, sidecar and manifest; the env seed wins") {
  const auto r = sf({"collect", "--driver", "mixed", "--track", track("train"), "--episodes", "1", "--seed", "3",
                     "--out", path("c1.sfds")});
  REQUIRE(r.code == 0);
  const auto ds = train::load_dataset(path("c1.sfds"));
  CHECK(ds.size() == 2000);
  CHECK(ds.header.driver == "mixed");
  const json m = read_json(path("c1.sfds.manifest.json"));
  CHECK(m.at("seeds").at("effective") == 3);
  CHECK(m.at("config").at("collect").at("steer_noise") == 0.1);
  CHECK(m.at("outputs")[0].at("sha256") == sha256_file(path("c1.sfds")));

  SeedEnv env("3");
  const auto again = sf({"collect", "--driver", "mixed", "--track", track("train"), "--episodes", "1", "--seed",
                         "99", "--out", path("c2.sfds")});
  REQUIRE(again.code == 0);
  CHECK(read_json(path("c2.sfds.manifest.json")).at("seeds").at("env") == 3);
  CHECK(sha256_file(path("c1.sfds")) == sha256_file(path("c2.sfds")));
}

TEST_CASE("train bdm writes a trained bundle and replays to the same digest") {
  const std::string bundle = tiny_bdm();
  CHECK(nn::load_bdm(bundle).trained);
  const json m = read_json(bundle + ".manifest.json");
  CHECK(m.at("config").at("train").at("epochs") == 1);
  CHECK(m.at("config").at("model").at("image_width") == 64);
  const std::string before = sha256_file(bundle);
  const auto r = sf({"replay", bundle + ".manifest.json"});
  CHECK(r.code == 0);
  CHECK(r.out.find("replay ok") != std::string::npos);
  CHECK(sha256_file(bundle) == before);
}

TEST_CASE("replay refuses changed inputs") {
  fs::copy_file(track("test"), path("moving.json"));
  REQUIRE(sf({"track", "info", path("moving.json")}).code == 0);
  // A manifest pointing at a file that then changes.
  cli::RunManifest m;
  m.command = "track info";
  m.args = {"track", "info", path("moving.json")};
  m.inputs = {{path("moving.json"), sha256_file(path("moving.json"))}};
  write_text(path("moving.manifest.json"), m.to_json().dump());
  CHECK(sf({"replay", path("moving.manifest.json")}).code == 0);
  write_text(path("moving.json"), "{}");
  const auto changed = sf({"replay", path("moving.manifest.json")});
  CHECK(changed.code == 3);
  CHECK(changed.err.find("changed") != std::string::npos);
}

TEST_CASE("train pb needs a trained baseline and keeps it unchanged") {
  nn::save_bundle(path("raw.sfmb"), nn::init_bdm(nn::BdmConfig{}, 1));
  CHECK(sf({"train", "pb", "--data", tiny_dataset(), "--bdm", path("raw.sfmb"), "--config", tiny_config(), "--out",
            path("pb.sfmb")})
            .code == 2);
  const std::string bdm_digest = sha256_file(tiny_bdm());
  const auto r = sf({"train", "pb", "--data", tiny_dataset(), "--bdm", tiny_bdm(), "--config", tiny_config(), "--out",
                     path("pb.sfmb")});
  REQUIRE(r.code == 0);
  CHECK(sha256_file(tiny_bdm()) == bdm_digest);
  CHECK(nn::load_pb(path("pb.sfmb")).config.gap_scale == 4.0);
  CHECK(read_json(path("pb.sfmb.manifest.json")).at("config").at("model").at("gap_scale") == 4.0);
}

TEST_CASE("training divergence exits 4, bad files exit 3") {
  write_text(path("hot.json"), R"({"train": {"epochs": 2, "learning_rate": 1e308}})");
  const auto hot = sf({"train", "bdm", "--data", tiny_dataset(), "--config", path("hot.json"), "--out", path("h.sfmb")});
  CHECK(hot.code == 4);
  CHECK(hot.err.find("epoch") != std::string::npos);

  write_text(path("typo.json"), R"({"trian": {}})");
  CHECK(sf({"train", "bdm", "--data", tiny_dataset(), "--config", path("typo.json"), "--out", path("t.sfmb")}).code ==
        3);
  write_text(path("junk.sfmb"), "not a bundle");
  const auto junk = sf({"eval", "--bdm", path("junk.sfmb"), "--track", track("mixed"), "--out", path("ev0")});
  CHECK(junk.code == 3);
  CHECK(junk.err.find("junk.sfmb") != std::string::npos);
  CHECK(sf({"eval", "--bdm", path("missing.sfmb"), "--track", track("mixed"), "--out", path("ev0")}).code == 3);
}

TEST_CASE("eval: baseline alone, then two blocks with a comparison") {
  const auto solo = sf({"eval", "--bdm", tiny_bdm(), "--track", track("mixed"), "--out", path("ev1")});
  REQUIRE(solo.code == 0);
  const json s1 = read_json(path("ev1/summary.json"));
  CHECK(s1.at("models").size() == 1);
  CHECK(s1.at("models")[0].at("name") == "bdm");
  CHECK(fs::exists(path("ev1/bdm.csv")));
  CHECK(fs::exists(path("ev1/manifest.json")));

  for (const char* name : {"pb1.sfmb", "pb2.sfmb"})
    REQUIRE(sf({"train", "pb", "--data", tiny_dataset(), "--bdm", tiny_bdm(), "--out", path(name), "--config",
                tiny_config()})
                .code == 0);
  const auto duo = sf({"eval", "--bdm", tiny_bdm(), "--pb", path("pb1.sfmb"), "--pb", path("pb2.sfmb"), "--track",
                       track("mixed"), "--target-speed", "12", "--out", path("ev2")});
  REQUIRE_MESSAGE(duo.code == 0, duo.err);
  const json s2 = read_json(path("ev2/summary.json"));
  REQUIRE(s2.at("models").size() == 2);
  CHECK(s2.at("comparisons")[0].at("model") == "pb2");
  CHECK(s2.at("models")[0].at("target_speed") == 12.0);
  CHECK_MESSAGE(duo.out.find("pb2 vs pb1") != std::string::npos, duo.out);
  CHECK(sf({"replay", path("ev2/manifest.json")}).code == 0);
}

TEST_CASE("a recorded teleop session trains a PB through the CLI") {
  const auto g = sim::build_track(sim::load_track_spec(track("test")));
  service::Session s("cli", g, {});
  auto msg = [&](json body) {
    body["v"] = service::kProtocolVersion;
    body["session"] = s.id();
    return body;
  };
  s.handle(msg({{"type", "record"}, {"on", true}, {"target_speed", 14}}));
  for (int i = 0; i < 150; ++i) {
    s.handle(msg({{"type", "control"}, {"steering", 0.0}, {"throttle", i < 100 ? 0.5 : 0.0}, {"brake", 0.0}}));
    s.tick();
  }
  s.handle(msg({{"type", "record"}, {"on", false}}));
  REQUIRE(s.finished_recordings().size() == 1);
  train::save_dataset(path("teleop.sfds"), s.finished_recordings().front());
  const auto r = sf({"train", "pb", "--data", path("teleop.sfds"), "--bdm", tiny_bdm(), "--config", tiny_config(),
                     "--out", path("teleop_pb.sfmb")});
  CHECK(r.code == 0);
}
