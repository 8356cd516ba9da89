#include "styleforge/cli/cli.hpp"

#include <CLI11.hpp>

#include <pthread.h>

#include <algorithm>
#include <csignal>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"
#include "styleforge/eval/metrics.hpp"
#include "styleforge/eval/report.hpp"
#include "styleforge/eval/rollout.hpp"
#include "styleforge/service/server.hpp"
#include "styleforge/train/collect.hpp"
#include "styleforge/train/trainer.hpp"

namespace styleforge::cli {

using nlohmann::json;
namespace fs = std::filesystem;

json RunManifest::to_json() const {
  auto files = [](const auto& v) {
    json a = json::array();
    for (const auto& [p, d] : v) a.push_back({{"path", p}, {"sha256", d}});
    return a;
  };
  return {{"format", "styleforge-run"}, {"tool_version", tool_version}, {"command", command},
          {"args", args},               {"config_paths", config_paths}, {"config", config},
          {"seeds", seeds},             {"inputs", files(inputs)},     {"outputs", files(outputs)}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    if (j.at("format") != "styleforge-run") throw DataError("not a run manifest");
    m.tool_version = j.at("tool_version");
    m.command = j.at("command");
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config_paths = j.at("config_paths").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seeds = j.at("seeds");
    for (const auto& f : j.at("inputs")) m.inputs.emplace_back(f.at("path"), f.at("sha256"));
    for (const auto& f : j.at("outputs")) m.outputs.emplace_back(f.at("path"), f.at("sha256"));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

namespace {

constexpr const char* kSeedEnv = "STYLEFORGE_SEED";

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv(kSeedEnv);
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used != std::strlen(v)) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw UsageError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + v + "'");
  }
}

// Environment beats flag beats config file.
std::uint64_t resolve_seed(RunManifest& m, std::uint64_t from_config, std::optional<std::uint64_t> flag = {}) {
  const auto env = env_seed();
  const std::uint64_t seed = env ? *env : flag ? *flag : from_config;
  m.seeds = {{"effective", seed}, {"config", from_config}};
  if (flag) m.seeds["flag"] = *flag;
  if (env) m.seeds["env"] = *env;
  return seed;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return j;
}

void add_input(RunManifest& m, const std::string& path) { m.inputs.emplace_back(path, sha256_file(path)); }
void add_output(RunManifest& m, const std::string& path) { m.outputs.emplace_back(path, sha256_file(path)); }

void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << m.to_json().dump(2) << "\n";
}

sim::TrackGeometry load_track(RunManifest& m, const std::string& path) {
  add_input(m, path);
  return sim::build_track(sim::load_track_spec(path));
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---- track --------------------------------------------------------------

int cmd_track(const std::string& action, const std::string& file, RunManifest& m, std::ostream& out,
              std::ostream& err) {
  const sim::TrackGeometry g = load_track(m, file);
  if (action == "validate") {
    out << "ok: " << g.id() << ", " << fixed(g.total_length(), 3) << " m, " << g.segments().size() << " segments, "
        << (g.closed() ? "closed" : "open") << "\n";
  } else {
    json segs = json::array();
    for (const auto& s : g.segments()) {
      json j{{"type", sim::to_string(s.type())}, {"s_begin", s.s_begin}, {"length", s.length}};
      if (s.curvature != 0.0) j["radius"] = s.radius;
      segs.push_back(j);
    }
    const json info{{"id", g.id()},
                    {"total_length", g.total_length()},
                    {"lane_half_width", g.lane_half_width()},
                    {"closed", g.closed()},
                    {"segments", segs}};
    out << info.dump(2) << "\n";
  }
  // Nothing is written, so the manifest goes to stderr.
  err << m.to_json().dump() << "\n";
  return 0;
}

// ---- collect ------------------------------------------------------------

int cmd_collect(const std::string& driver, const std::string& track_path, std::optional<int> episodes,
                std::optional<std::uint64_t> seed, const std::string& out_path, RunManifest& m, std::ostream& out) {
  train::CollectConfig cfg;
  if (episodes) cfg.episodes = *episodes;
  cfg.seed = resolve_seed(m, cfg.seed, seed);
  cfg.validate();
  const sim::TrackGeometry track = load_track(m, track_path);
  train::CollectResult r;
  if (driver == "mixed") {
    r = train::collect_mixed(style::preset_a(), style::preset_b(), track, cfg);
  } else if (driver == "A" || driver == "B") {
    r = train::collect_scripted(driver == "A" ? style::preset_a() : style::preset_b(), track, cfg);
  } else {
    throw UsageError("--driver must be A, B or mixed, got '" + driver + "'");
  }
  m.config = {{"driver", driver}, {"collect", cfg.to_json()}};
  if (driver == "mixed")
    m.config["presets"] = {{"A", style::style_params_to_json(style::preset_a().params)},
                           {"B", style::style_params_to_json(style::preset_b().params)}};
  else
    m.config["preset"] = style::style_params_to_json(
        (driver == "A" ? style::preset_a() : style::preset_b()).params);
  for (const auto& a : r.aborted)
    out << "episode " << a.episode << " aborted at t=" << fixed(a.time) << " s: " << a.reason << "\n";
  train::save_dataset(out_path, r.dataset);
  add_output(m, out_path);
  add_output(m, out_path + ".json");
  write_manifest(m, out_path + ".manifest.json");
  out << "wrote " << out_path << ": " << r.dataset.size() << " samples, digest " << r.dataset.digest() << "\n";
  return 0;
}

// ---- train --------------------------------------------------------------

struct TrainFile {
  json train = json::object();
  json model = json::object();
};

TrainFile read_train_config(RunManifest& m, const std::string& path) {
  TrainFile f;
  if (path.empty()) return f;
  add_input(m, path);
  m.config_paths.push_back(path);
  const json j = read_json(path);
  if (!j.is_object()) throw ConfigError(path + ": expected an object with optional 'train' and 'model'");
  for (const auto& it : j.items())
    if (it.key() != "train" && it.key() != "model")
      throw ConfigError(path + ": unknown key '" + it.key() + "' (train, model)");
  if (j.contains("train")) f.train = j["train"];
  if (j.contains("model")) f.model = j["model"];
  return f;
}

int cmd_train(const std::string& kind, const std::string& data, const std::string& bdm_path,
              const std::string& config_path, const std::string& out_path, RunManifest& m, std::ostream& out) {
  if (kind == "pb" && bdm_path.empty())
    throw UsageError("train pb needs --bdm: train the baseline model first");
  if (kind == "bdm" && !bdm_path.empty()) throw UsageError("--bdm only applies to train pb");
  const TrainFile file = read_train_config(m, config_path);
  train::TrainConfig tc = train::TrainConfig::from_json(file.train);
  tc.seed = resolve_seed(m, tc.seed);
  add_input(m, data);
  const train::Dataset ds = train::load_dataset(data);
  auto progress = [&](const train::EpochStats& e) {
    out << "epoch " << e.epoch << " train " << fixed(e.train_loss, 6) << " val " << fixed(e.val_loss, 6) << "\n";
    out.flush();
  };
  if (kind == "bdm") {
    json model = nn::BdmConfig{}.to_json();
    model.merge_patch(file.model);
    const nn::BdmConfig mc = nn::BdmConfig::from_json(model);
    m.config = {{"train", tc.to_json()}, {"model", mc.to_json()}};
    nn::save_bundle(out_path, train::train_bdm(ds, mc, tc, nullptr, progress));
  } else {
    add_input(m, bdm_path);
    const nn::BdmModel bdm = nn::load_bdm(bdm_path);
    json model = nn::PbConfig::for_bdm(bdm.config).to_json();
    model.merge_patch(file.model);
    const nn::PbConfig mc = nn::PbConfig::from_json(model);
    m.config = {{"train", tc.to_json()}, {"model", mc.to_json()}};
    const auto before = nn::encode_bundle(bdm);
    const nn::PbModel pb = train::train_pb(ds, bdm, mc, tc, nullptr, progress);
    if (nn::encode_bundle(bdm) != before) throw TrainingError("baseline model changed during PB training");
    nn::save_bundle(out_path, pb);
  }
  add_output(m, out_path);
  write_manifest(m, out_path + ".manifest.json");
  out << "wrote " << out_path << "\n";
  return 0;
}

// ---- eval ---------------------------------------------------------------

int cmd_eval(const std::string& bdm_path, const std::vector<std::string>& pb_paths, const std::string& track_path,
             double target_speed, const std::string& out_dir, RunManifest& m, std::ostream& out) {
  if (!(target_speed > 0.0)) throw UsageError("--target-speed must be positive");
  const sim::TrackGeometry track = load_track(m, track_path);
  add_input(m, bdm_path);
  const nn::BdmModel bdm = nn::load_bdm(bdm_path);
  std::vector<nn::PbModel> pbs;
  std::vector<std::string> names;
  for (const auto& p : pb_paths) {
    add_input(m, p);
    pbs.push_back(nn::load_pb(p));
    nn::check_pair(bdm, pbs.back());
    std::string name = fs::path(p).stem().string();
    while (std::find(names.begin(), names.end(), name) != names.end()) name += "_";
    names.push_back(name);
  }
  eval::RolloutConfig rc;
  rc.target_speed = target_speed;
  m.config = {{"rollout",
               {{"target_speed", rc.target_speed},
                {"laps", rc.laps},
                {"max_steps", rc.max_steps},
                {"dt", rc.dt},
                {"start_s", rc.start_s},
                {"stall_timeout", rc.stall_timeout},
                {"vehicle", sim::vehicle_to_json(rc.vehicle)},
                {"camera", sim::camera_to_json(rc.camera)}}},
              {"metrics", {{"tol", eval::MetricsConfig{}.tol}, {"sustain", eval::MetricsConfig{}.sustain}}}};

  std::vector<eval::Trajectory> trajs;
  std::vector<eval::MetricsReport> reports;
  auto run_one = [&](const nn::PbModel* pb, const std::string& name) {
    trajs.push_back(eval::rollout(eval::model_policy(bdm, pb), track, rc, name));
    reports.push_back(eval::compute_metrics(trajs.back(), track));
    const auto& r = reports.back();
    const auto* h = r.headline();
    out << name << ": " << r.termination << ", " << r.laps_completed << " laps, max|cte| " << fixed(r.max_abs_cte, 3)
        << " m, curve hull " << fixed(r.curve_hull_area, 3) << ", exit distance "
        << (h && h->result.reached ? fixed(h->result.distance, 1) + " m" : std::string("unreached"))
        << ", max entry speed " << fixed(r.max_curve_entry_speed()) << " m/s\n";
  };
  if (pbs.empty()) run_one(nullptr, "bdm");
  for (std::size_t i = 0; i < pbs.size(); ++i) run_one(&pbs[i], names[i]);

  const auto files = eval::emit_report(out_dir, trajs, reports);
  for (const auto& p : files.paths) add_output(m, p);
  write_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  if (reports.size() >= 2) {
    const json summary = eval::summary_json(reports);
    for (const auto& c : summary.at("comparisons"))
      out << c.at("model").get<std::string>() << " vs " << c.at("baseline").get<std::string>()
          << ": exit distance ratio " << c.at("exit_distance_ratio").dump() << ", hull ratio "
          << c.at("curve_hull_area_ratio").dump() << "\n";
  }
  out << "wrote " << out_dir << "\n";
  return 0;
}

// ---- serve --------------------------------------------------------------

int cmd_serve(int port, const std::string& track_path, const std::string& bdm_path, const std::string& pb_path,
              const std::string& record_dir, RunManifest& m, std::ostream& out, std::ostream& err) {
  if (port < 0 || port > 65535) throw UsageError("--port must be in [0, 65535]");
  if (!pb_path.empty() && bdm_path.empty()) throw UsageError("--pb needs --bdm");
  const sim::TrackGeometry track = load_track(m, track_path);
  std::optional<nn::BdmModel> bdm;
  std::optional<nn::PbModel> pb;
  if (!bdm_path.empty()) {
    add_input(m, bdm_path);
    bdm = nn::load_bdm(bdm_path);
  }
  if (!pb_path.empty()) {
    add_input(m, pb_path);
    pb = nn::load_pb(pb_path);
  }
  service::ServerConfig sc;
  sc.port = static_cast<unsigned short>(port);
  sc.record_dir = record_dir;
  m.config = {{"address", sc.address}, {"tick_rate", sc.tick_rate}, {"record_dir", sc.record_dir},
              {"max_queue", sc.max_queue}, {"session", sc.session.to_json()}};
  err << m.to_json().dump() << "\n";

  // Block the stop signals here so a dedicated thread can wait for them.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
  service::Server server(sc, track, bdm ? &*bdm : nullptr, pb ? &*pb : nullptr);
  const unsigned short bound = server.listen();
  out << "serving ws://" << sc.address << ":" << bound << "/ on track " << track.id() << "\n";
  out.flush();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    server.stop();
  });
  server.run();
  // run() only returns after stop(); wake the waiter if something else stopped us.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &sigs, nullptr);
  out << "stopped\n";
  return 0;
}

// ---- replay -------------------------------------------------------------

int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err) {
  const RunManifest m = RunManifest::from_json(read_json(path));
  for (const auto& [p, d] : m.inputs)
    if (sha256_file(p) != d) throw DataError("input " + p + " changed since the recorded run");
  // Reproduce the seed environment of the original run.
  const std::optional<std::string> saved = std::getenv(kSeedEnv) ? std::optional(std::getenv(kSeedEnv)) : std::nullopt;
  if (m.seeds.contains("env"))
    setenv(kSeedEnv, std::to_string(m.seeds["env"].get<std::uint64_t>()).c_str(), 1);
  else
    unsetenv(kSeedEnv);
  const int code = run(m.args, out, err);
  if (saved)
    setenv(kSeedEnv, saved->c_str(), 1);
  else
    unsetenv(kSeedEnv);
  if (code != 0) return code;
  std::size_t same = 0;
  for (const auto& [p, d] : m.outputs) {
    if (sha256_file(p) != d) throw DataError("replayed output " + p + " differs from the manifest");
    ++same;
  }
  out << "replay ok: " << same << " outputs identical\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"styleforge: baseline driving model and personalized style blocks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* track = app.add_subcommand("track", "Validate or describe a track file");
  std::string track_action, track_file;
  track->add_option("action", track_action, "validate | info")->required()->check(CLI::IsMember({"validate", "info"}));
  track->add_option("file", track_file, "Track JSON")->required();

  auto* collect = app.add_subcommand("collect", "Record scripted demonstrations");
  std::string driver, collect_track, collect_out;
  std::optional<int> episodes;
  std::optional<std::uint64_t> seed;
  collect->add_option("--driver", driver, "A, B or mixed")->required();
  collect->add_option("--track", collect_track, "Track JSON")->required();
  collect->add_option("--episodes", episodes, "Episode count")->check(CLI::PositiveNumber);
  collect->add_option("--seed", seed, "RNG seed (STYLEFORGE_SEED overrides)");
  collect->add_option("--out", collect_out, "Dataset file")->required();

  auto* trn = app.add_subcommand("train", "Train the baseline model or a personalized block");
  std::string kind, data, bdm_path, config_path, train_out;
  trn->add_option("kind", kind, "bdm | pb")->required()->check(CLI::IsMember({"bdm", "pb"}));
  trn->add_option("--data", data, "Dataset file")->required();
  trn->add_option("--bdm", bdm_path, "Trained baseline bundle (pb only)");
  trn->add_option("--config", config_path, "JSON with optional 'train' and 'model' sections");
  trn->add_option("--out", train_out, "Model bundle")->required();

  auto* ev = app.add_subcommand("eval", "Closed-loop evaluation and report");
  std::string eval_bdm, eval_track, eval_out;
  std::vector<std::string> eval_pbs;
  double target_speed = 20.0;
  ev->add_option("--bdm", eval_bdm, "Baseline bundle")->required();
  ev->add_option("--pb", eval_pbs, "Personalized block bundle, repeatable");
  ev->add_option("--track", eval_track, "Track JSON")->required();
  ev->add_option("--target-speed", target_speed, "m/s")->capture_default_str();
  ev->add_option("--out", eval_out, "Report directory")->required();

  auto* serve = app.add_subcommand("serve", "Run the teleoperation websocket service");
  int port = 8765;
  std::string serve_track, serve_bdm, serve_pb, record_dir;
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_option("--track", serve_track, "Track JSON")->required();
  serve->add_option("--bdm", serve_bdm, "Baseline bundle enabling autopilot");
  serve->add_option("--pb", serve_pb, "Personalized block enabling ndst mode");
  serve->add_option("--record-dir", record_dir, "Where finished recordings are saved");

  auto* rep = app.add_subcommand("replay", "Rerun a command from its manifest and compare outputs");
  std::string manifest_path;
  rep->add_option("manifest", manifest_path, "Run manifest JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::usage);
  }

  RunManifest m;
  m.args = args;
  try {
    if (track->parsed()) {
      m.command = "track " + track_action;
      return cmd_track(track_action, track_file, m, out, err);
    }
    if (collect->parsed()) {
      m.command = "collect";
      return cmd_collect(driver, collect_track, episodes, seed, collect_out, m, out);
    }
    if (trn->parsed()) {
      m.command = "train " + kind;
      return cmd_train(kind, data, bdm_path, config_path, train_out, m, out);
    }
    if (ev->parsed()) {
      m.command = "eval";
      return cmd_eval(eval_bdm, eval_pbs, eval_track, target_speed, eval_out, m, out);
    }
    if (serve->parsed()) {
      m.command = "serve";
      return cmd_serve(port, serve_track, serve_bdm, serve_pb, record_dir, m, out, err);
    }
    return cmd_replay(manifest_path, out, err);
  } catch (const TrainingError& e) {
    err << "training error";
    if (e.epoch() >= 0) err << " at epoch " << e.epoch();
    err << ": " << e.what() << "\n";
    return static_cast<int>(ErrorClass::training);
  } catch (const Error& e) {
    err << (e.error_class() == ErrorClass::usage ? "usage error: " : "error: ") << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    // I/O and parser failures from the standard library count as bad data.
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorClass::data);
  }
}

}  // namespace styleforge::cli
