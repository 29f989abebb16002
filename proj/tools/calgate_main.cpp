// calgate: calibration, selective prediction and Act/Hold gate simulation.
//
// Exit codes: 0 success, 1 validation/usage error, 2 I/O error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "calgate/calibration.hpp"
#include "calgate/datamodel.hpp"
#include "calgate/error.hpp"
#include "calgate/manifest.hpp"
#include "calgate/metrics.hpp"
#include "calgate/selective.hpp"
#include "calgate/simulator.hpp"
#include "calgate/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace calgate::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

std::uint64_t seed_or_env(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  if (const char* env = std::getenv("CALGATE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ValidationError(std::string("CALGATE_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return 0;
}

Dataset load_any(const std::string& path, const std::string& format) {
  return load_dataset(path, format.empty() ? format_from_path(path) : parse_format(format));
}

CalibrationMap load_map_or_identity(const std::string& path) {
  return path.empty() ? CalibrationMap::identity() : load_map(path);
}

fs::path sibling(const fs::path& primary, const std::string& suffix) {
  auto p = primary;
  p.replace_extension();
  p += suffix;
  return p;
}

struct Options {
  // shared
  std::string data, map, out, format;
  int bins = kDefaultBins;
  std::vector<double> taus;

  // gen-synth
  SynthConfig synth;
  std::optional<std::uint64_t> seed;
  bool fixture = false;

  // calibrate
  std::string method, val;

  // simulate
  double alpha = kDefaultAlpha;
  int topk = kDefaultTopKFilter;
  std::optional<double> tau_on, tau_off, band;
  std::int64_t refractory_ms = 200;
  bool smooth_first = false;
  std::string trace;

  // bench
  int k = 21;
  std::int64_t ticks = 100000;

  // rerun
  std::string manifest;
};

int cmd_gen_synth(Options& o, RunManifest& m) {
  SynthConfig cfg = o.fixture ? uncalibrated_fixture_config(0) : o.synth;
  cfg.seed = seed_or_env(o.seed);
  cfg.validate();
  const auto ds = generate(cfg);
  save_dataset(ds, o.out, o.format.empty() ? format_from_path(o.out) : parse_format(o.format));
  const auto sidecar = sibling(o.out, ".synth.json");
  write_file_atomic(sidecar, synth_config_to_json(cfg));
  m.seed = cfg.seed;
  m.config = json::parse(synth_config_to_json(cfg));
  m.outputs = {o.out, sidecar.string()};
  std::cerr << "wrote " << ds.size() << " records (" << ds.stream_ids().size() << " streams, K=" << ds.k() << ") to "
            << o.out << "\n";
  return kExitOk;
}

int cmd_calibrate(Options& o, RunManifest& m) {
  const auto kind = parse_map_kind(o.method);
  const auto val = load_any(o.val, o.format);
  CalibrationFit result;
  try {
    result = fit(kind, val);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(to_string(kind)) + " fit failed: " + e.what());
  }
  for (const auto& w : result.warnings) std::cerr << "warning (" << to_string(kind) << "): " << w << "\n";
  save_map(result.map, o.out);
  m.inputs = {o.val};
  m.outputs = {o.out};
  m.config = {{"method", std::string(to_string(kind))}, {"warnings", result.warnings}};
  return kExitOk;
}

int cmd_eval(Options& o, RunManifest& m) {
  const auto ds = load_any(o.data, o.format);
  const auto map = load_map_or_identity(o.map);
  const auto rep = report(ds, map, o.bins);
  write_file_atomic(o.out, report_to_json(rep));
  const auto csv = sibling(o.out, ".reliability.csv");
  write_file_atomic(csv, bins_to_csv(rep.bins));
  m.inputs = {o.data};
  if (!o.map.empty()) m.inputs.push_back(o.map);
  m.outputs = {o.out, csv.string()};
  m.config = {{"bins", o.bins}, {"map_kind", std::string(to_string(map.kind()))}};
  std::cerr << "ece=" << rep.ece << " top1=" << rep.top1 << "\n";
  return kExitOk;
}

int cmd_sweep(Options& o, RunManifest& m) {
  const auto ds = load_any(o.data, o.format);
  const auto map = load_map_or_identity(o.map);
  const auto taus = o.taus.empty() ? default_tau_grid() : o.taus;
  const auto curve = sweep(ds, map, taus, o.bins);
  write_file_atomic(o.out, curve_to_csv(curve));
  m.inputs = {o.data};
  if (!o.map.empty()) m.inputs.push_back(o.map);
  m.outputs = {o.out};
  m.config = {{"bins", o.bins}, {"taus", taus}};
  return kExitOk;
}

int cmd_simulate(Options& o, RunManifest& m) {
  const auto ds = load_any(o.data, o.format);
  SimConfig cfg;
  cfg.alpha = o.alpha;
  cfg.k_filter = o.topk;
  cfg.map = load_map_or_identity(o.map);
  cfg.half_band = o.band;
  cfg.order = o.smooth_first ? CalibrationOrder::smooth_first : CalibrationOrder::automatic;
  cfg.gate.refractory_ms = o.refractory_ms;

  std::vector<SimResult> results;
  json cfg_json = {{"alpha", o.alpha},   {"topk", o.topk},
                   {"refractory_ms", o.refractory_ms}, {"smooth_first", o.smooth_first},
                   {"map_kind", std::string(to_string(cfg.map.kind()))}};
  if (o.tau_on || o.tau_off) {
    // Explicit band: a single run.
    if (!o.taus.empty()) throw ValidationError("--tau-on/--tau-off and --taus are mutually exclusive");
    cfg.gate.tau_on = o.tau_on.value_or(*o.tau_off);
    cfg.gate.tau_off = o.tau_off.value_or(*o.tau_on);
    cfg.validate(ds.k());
    SimResult total;
    total.tau = cfg.gate.tau_on;
    total.tau_on = cfg.gate.tau_on;
    total.tau_off = cfg.gate.tau_off;
    for (const auto& s : streams_of(ds)) total += simulate_stream(s, cfg, !o.trace.empty());
    if (!o.trace.empty()) {
      write_file_atomic(o.trace, trace_to_csv(total.per_tick_trace));
      m.outputs.push_back(o.trace);
    }
    results.push_back(std::move(total));
    cfg_json["tau_on"] = cfg.gate.tau_on;
    cfg_json["tau_off"] = cfg.gate.tau_off;
  } else {
    if (!o.trace.empty()) throw ValidationError("--trace needs a single run (--tau-on/--tau-off)");
    const auto taus = o.taus.empty() ? default_tau_grid() : o.taus;
    results = simulate_sweep(ds, cfg, taus);
    cfg_json["taus"] = taus;
    if (o.band) cfg_json["half_band"] = *o.band;
  }
  write_file_atomic(o.out, sim_to_csv(results));
  m.inputs = {o.data};
  if (!o.map.empty()) m.inputs.push_back(o.map);
  m.outputs.insert(m.outputs.begin(), o.out);
  m.config = std::move(cfg_json);
  return kExitOk;
}

int cmd_bench(Options& o, RunManifest& m) {
  SimConfig cfg;
  cfg.alpha = o.alpha;
  cfg.k_filter = std::min(o.topk, o.k);
  cfg.map = load_map_or_identity(o.map);
  const auto stats = benchmark_tick_latency(cfg, o.k, o.ticks);
  json j = {{"schema", "calgate.bench/1"},
            {"k", o.k},
            {"n_ticks", stats.n_ticks},
            {"map_kind", std::string(to_string(cfg.map.kind()))},
            {"mean_us", stats.mean_us},
            {"p99_us", stats.p99_us},
            {"budget_us", 40000}};
  const auto text = j.dump(2) + "\n";
  if (!o.out.empty()) {
    write_file_atomic(o.out, text);
    m.outputs = {o.out};
  } else {
    std::cout << text;
  }
  m.config = {{"k", o.k}, {"ticks", o.ticks}};
  return kExitOk;
}

int run(const std::vector<std::string>& args, bool write_manifest);

int cmd_rerun(Options& o) {
  const auto m = load_manifest(o.manifest);
  if (m.argv.empty() || m.argv.front() == "rerun") throw ValidationError("manifest does not record a rerunnable command");
  return run(m.argv, true);
}

int run(const std::vector<std::string>& args, bool write_manifest) {
  CLI::App app{"calgate: calibrated confidence, selective prediction and Act/Hold gating"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CALGATE_VERSION);
  Options o;

  auto add_data = [&](CLI::App* c) {
    c->add_option("--data", o.data, "Dataset file (.csv or .ndjson)")->required();
    c->add_option("--format", o.format, "Dataset format: csv or ndjson (default: from extension)");
  };

  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic logit-stream dataset");
  gen->add_option("--k", o.synth.k, "Number of classes")->capture_default_str();
  gen->add_option("--streams", o.synth.n_streams, "Number of streams")->capture_default_str();
  gen->add_option("--ticks", o.synth.ticks_per_stream, "Ticks per stream")->capture_default_str();
  gen->add_option("--base-accuracy", o.synth.base_accuracy, "Target top-1 accuracy in (1/K,1)")->capture_default_str();
  gen->add_option("--scale", o.synth.overconfidence_scale, "Overconfidence logit scale s >= 1")->capture_default_str();
  gen->add_option("--persistence", o.synth.label_persistence, "Mean label run length (ticks)")->capture_default_str();
  gen->add_option("--prediction-persistence", o.synth.prediction_persistence,
                  "Mean run length of a repeated prediction (ticks)")
      ->capture_default_str();
  gen->add_option("--tick-ms", o.synth.tick_ms, "Tick period in ms")->capture_default_str();
  gen->add_option("--seed", o.seed, "Seed (fallback: CALGATE_SEED, then 0)");
  gen->add_flag("--fixture", o.fixture, "Canonical uncalibrated fixture (s=4, accuracy 0.40, K=21, 100x600)");
  gen->add_option("--out", o.out, "Output dataset path")->required();
  gen->add_option("--format", o.format, "csv or ndjson (default: from extension)");

  auto* cal = app.add_subcommand("calibrate", "Fit a calibration map on a validation set");
  cal->add_option("--method", o.method, "ts, platt, isotonic or identity")->required();
  cal->add_option("--val", o.val, "Validation dataset")->required();
  cal->add_option("--format", o.format, "Dataset format");
  cal->add_option("--out", o.out, "Output map JSON")->required();

  auto* ev = app.add_subcommand("eval", "Reliability report (ECE, NLL, Brier, top-k)");
  add_data(ev);
  ev->add_option("--map", o.map, "Calibration map JSON (default: identity)");
  ev->add_option("--bins", o.bins, "Equal-width ECE bins")->capture_default_str();
  ev->add_option("--out", o.out, "Output report JSON")->required();

  auto* sw = app.add_subcommand("sweep", "Coverage vs act-only precision over thresholds");
  add_data(sw);
  sw->add_option("--map", o.map, "Calibration map JSON (default: identity)");
  sw->add_option("--taus", o.taus, "Thresholds (default: 0..0.95 step 0.05, 0.99)");
  sw->add_option("--bins", o.bins, "Bins for the region epsilon estimate")->capture_default_str();
  sw->add_option("--out", o.out, "Output curve CSV")->required();

  auto* sim = app.add_subcommand("simulate", "Closed-loop stream replay through the Act/Hold gate");
  add_data(sim);
  sim->add_option("--map", o.map, "Calibration map JSON (default: identity)");
  sim->add_option("--alpha", o.alpha, "Exponential smoothing factor")->capture_default_str();
  sim->add_option("--topk", o.topk, "Top-k eligibility filter")->capture_default_str();
  sim->add_option("--tau-on", o.tau_on, "Act entry threshold (single run)");
  sim->add_option("--tau-off", o.tau_off, "Act exit threshold (single run)");
  sim->add_option("--taus", o.taus, "Threshold sweep (default grid)");
  sim->add_option("--band", o.band, "Hysteresis half-band around each swept tau");
  sim->add_option("--refractory-ms", o.refractory_ms, "Refractory period after a transition")->capture_default_str();
  sim->add_flag("--smooth-first", o.smooth_first, "Smooth raw probabilities before calibrating, for every map");
  sim->add_option("--trace", o.trace, "Per-tick audit CSV (single run only)");
  sim->add_option("--out", o.out, "Output CSV")->required();

  auto* bench = app.add_subcommand("bench", "Per-tick pipeline latency");
  bench->add_option("--k", o.k, "Number of classes")->capture_default_str();
  bench->add_option("--ticks", o.ticks, "Timed ticks (>= 1000)")->capture_default_str();
  bench->add_option("--map", o.map, "Calibration map JSON (default: identity)");
  bench->add_option("--alpha", o.alpha, "Smoothing factor")->capture_default_str();
  bench->add_option("--topk", o.topk, "Top-k filter")->capture_default_str();
  bench->add_option("--out", o.out, "Output JSON (default: stdout)");

  auto* rerun = app.add_subcommand("rerun", "Re-execute the command recorded in a run manifest");
  rerun->add_option("manifest", o.manifest, "Manifest JSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (rerun->parsed()) return cmd_rerun(o);

  const auto start = std::chrono::steady_clock::now();
  RunManifest m;
  m.argv = args;
  int code = kExitOk;
  if (gen->parsed()) {
    m.command = "gen-synth";
    code = cmd_gen_synth(o, m);
  } else if (cal->parsed()) {
    m.command = "calibrate";
    code = cmd_calibrate(o, m);
  } else if (ev->parsed()) {
    m.command = "eval";
    code = cmd_eval(o, m);
  } else if (sw->parsed()) {
    m.command = "sweep";
    code = cmd_sweep(o, m);
  } else if (sim->parsed()) {
    m.command = "simulate";
    code = cmd_simulate(o, m);
  } else if (bench->parsed()) {
    m.command = "bench";
    code = cmd_bench(o, m);
  }
  m.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (write_manifest && code == kExitOk && !o.out.empty()) save_manifest(m, manifest_path_for(o.out));
  return code;
}

}  // namespace
}  // namespace calgate::cli

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return calgate::cli::run(args, true);
  } catch (const calgate::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return calgate::cli::kExitIo;
  } catch (const calgate::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return calgate::cli::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return calgate::cli::kExitValidation;
  }
}
