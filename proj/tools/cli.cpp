#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "acceptance/criteria.hpp"
#include "scenefuse/client.hpp"
#include "scenefuse/config.hpp"
#include "scenefuse/errors.hpp"
#include "scenefuse/logging.hpp"
#include "scenefuse/metrics.hpp"
#include "scenefuse/server.hpp"
#include "scenefuse/simulator.hpp"

namespace scenefuse::cli {
namespace {

namespace fs = std::filesystem;

// Bad invocation found after parsing (missing files and the like).
struct UsageError : Error {
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::string log_level = "warn";
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--config", c.config_path, "TOML or JSON config file (default: $SCENEFUSE_CONFIG)");
  app.add_option("--log-level", c.log_level, "debug | info | warn | error | off");
}

nlohmann::json load_config(const Common& c) {
  std::optional<fs::path> path;
  if (!c.config_path.empty()) {
    path = c.config_path;
  } else {
    path = config::default_path();
  }
  if (!path) return nlohmann::json::object();
  if (!fs::exists(*path)) throw UsageError("config file not found: " + path->string());
  return config::load_file(*path);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

// ---- sim ----

struct ScenarioFlags {
  std::uint64_t seed = 1;
  double duration_s = 0.0;
  double rate_hz = 0.0;
  int n_sensors = 0;
  int n_targets = 0;
  double p_block = 0.0;
  bool sensors_static = false;
  std::vector<CLI::Option*> opts;

  void add(CLI::App& app) {
    opts = {app.add_option("--seed", seed, "scenario seed"),
            app.add_option("--duration", duration_s, "seconds")->check(CLI::NonNegativeNumber),
            app.add_option("--rate", rate_hz, "sample rate in Hz")->check(CLI::PositiveNumber),
            app.add_option("--sensors", n_sensors, "number of sensors")->check(CLI::PositiveNumber),
            app.add_option("--targets", n_targets, "number of targets")->check(CLI::PositiveNumber),
            app.add_option("--p-block", p_block, "occlusion probability")->check(CLI::Range(0.0, 1.0)),
            app.add_flag("--sensors-static", sensors_static, "keep sensors fixed")};
  }

  void overlay(sim::ScenarioConfig& c) const {
    if (opts[0]->count()) c.seed = seed;
    if (opts[1]->count()) c.duration_s = duration_s;
    if (opts[2]->count()) c.rate_hz = rate_hz;
    if (opts[3]->count()) c.n_sensors = n_sensors;
    if (opts[4]->count()) c.n_targets = n_targets;
    if (opts[5]->count()) c.p_block = p_block;
    if (opts[6]->count()) c.sensors_static = sensors_static;
    c.validate();
  }
};

struct SimArgs {
  Common common;
  ScenarioFlags scenario;
  std::string out;
  std::string gt;
  std::string measurements;
  std::string server = "127.0.0.1:7878";
  std::string speed = "realtime";
  std::string kill_sensor;
  double kill_after_s = 0.0;
  double settle_s = 0.5;
  CLI::App* generate = nullptr;
  CLI::App* observe = nullptr;
  CLI::App* drive = nullptr;
};

void add_sim(CLI::App& app, SimArgs& a) {
  app.require_subcommand(1);
  a.generate = app.add_subcommand("generate", "simulate ground-truth trajectories");
  a.observe = app.add_subcommand("observe", "synthesise measurements from ground truth");
  a.drive = app.add_subcommand("drive", "stream a measurement log to a fusion server");
  for (CLI::App* sub : {a.generate, a.observe}) {
    add_common(*sub, a.common);
    sub->add_option("--out", a.out, "output NDJSON file")->required();
  }
  // Both subcommands share one flag set; only one runs per invocation.
  a.scenario.add(*a.generate);
  a.observe->add_option("--gt", a.gt, "ground-truth NDJSON from `generate`")->required();
  a.observe->add_option("--seed", a.scenario.seed, "noise and occlusion seed");
  a.observe->add_option("--p-block", a.scenario.p_block, "occlusion probability")->check(CLI::Range(0.0, 1.0));

  add_common(*a.drive, a.common);
  a.drive->add_option("--log", a.measurements, "measurement NDJSON from `observe`")->required();
  a.drive->add_option("--server", a.server, "fusion server host:port");
  a.drive->add_option("--speed", a.speed, "realtime | max")->check(CLI::IsMember({"realtime", "max"}));
  a.drive->add_option("--out", a.out, "results log (received POSE_UPDATEs)");
  a.drive->add_option("--kill-sensor", a.kill_sensor, "drop this sensor's connection mid-run");
  a.drive->add_option("--kill-after", a.kill_after_s, "log seconds before the drop");
  a.drive->add_option("--settle", a.settle_s, "seconds to keep receiving after streaming");
}

sim::ScenarioConfig scenario_from(const SimArgs& a, const CLI::App& sub) {
  sim::ScenarioConfig c;
  config::apply(load_config(a.common), c);
  if (&sub == a.generate) {
    a.scenario.overlay(c);
  } else {
    if (sub.get_option("--seed")->count()) c.seed = a.scenario.seed;
    if (sub.get_option("--p-block")->count()) c.p_block = a.scenario.p_block;
    c.validate();
  }
  return c;
}

int run_sim(const SimArgs& a, std::ostream& out) {
  if (a.generate->parsed()) {
    const auto c = scenario_from(a, *a.generate);
    const auto gt = sim::generate(c);
    auto f = open_out(a.out);
    sim::write_ground_truth(f, gt);
    out << "wrote " << gt.times.size() << " samples of " << gt.sensors.size() + gt.targets.size() << " entities to "
        << a.out << "\n";
    return kOk;
  }
  if (a.observe->parsed()) {
    require_file(a.gt, "--gt");
    const auto c = scenario_from(a, *a.observe);
    auto in = open_in(a.gt);
    const auto gt = sim::read_ground_truth(in);
    const auto log = sim::observe(gt, c);
    auto f = open_out(a.out);
    sim::write_measurements(f, log);
    out << "wrote " << log.size() << " measurements to " << a.out << "\n";
    return kOk;
  }
  require_file(a.measurements, "--log");
  auto in = open_in(a.measurements);
  const auto log = sim::read_measurements(in);
  DriveOptions opts;
  opts.speed = a.speed == "max" ? DriveOptions::Speed::Max : DriveOptions::Speed::Realtime;
  if (!a.kill_sensor.empty()) {
    opts.kill_sensor = a.kill_sensor;
    opts.kill_after_s = a.kill_after_s;
  }
  opts.settle = std::chrono::milliseconds(static_cast<long>(a.settle_s * 1e3));
  std::optional<std::ofstream> results;
  if (!a.out.empty()) results = open_out(a.out);
  const auto r = drive(a.server, log, opts, results ? &*results : nullptr);
  out << "received " << r.records.size() << " updates\n";
  if (!r.ok()) {
    for (const auto& s : r.failed) out << "connection lost: " << s << "\n";
    return kFailure;
  }
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  Common common;
  std::string est;
  std::string gt;
  double delta_s = 1.0;
  std::string out;
  bool no_lag = false;
  CLI::Option* delta_opt = nullptr;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  add_common(app, a.common);
  app.add_option("--est", a.est, "estimate log: measurement log or server session log")->required();
  app.add_option("--gt", a.gt, "ground-truth NDJSON")->required();
  a.delta_opt = app.add_option("--delta", a.delta_s, "RTE interval in seconds")->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "directory for report.csv, table.txt, traj_xyz.csv");
  app.add_flag("--no-lag-search", a.no_lag, "associate timestamps without a lag estimate");
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.est, "--est");
  require_file(a.gt, "--gt");
  metrics::EvalOptions opts;
  config::apply(load_config(a.common), opts);
  if (a.delta_opt->count()) opts.delta_s = a.delta_s;
  if (a.no_lag) opts.lag_search = false;
  auto est_in = open_in(a.est);
  auto gt_in = open_in(a.gt);
  const auto records = metrics::read_records(est_in);
  const auto gt = metrics::read_ground_truth(gt_in);
  const auto ev = metrics::evaluate(records, gt, opts);
  out << ev.table();
  if (!a.out.empty()) metrics::write_outputs(ev, a.out);
  return kOk;
}

// ---- serve ----

struct ServeArgs {
  Common common;
  std::string listen;
  std::string operator_listen;
  double fusion_hz = 0.0;
  double stale_ms = 0.0;
  std::string allow_list;
  std::string log;
  std::string clock;
  std::vector<CLI::Option*> opts;
};

void add_serve(CLI::App& app, ServeArgs& a) {
  add_common(app, a.common);
  a.opts = {app.add_option("--listen", a.listen, "sensor endpoint host:port"),
            app.add_option("--operator-listen", a.operator_listen, "operator bridge host:port ('' disables)"),
            app.add_option("--fusion-hz", a.fusion_hz, "fusion cycles per second")->check(CLI::PositiveNumber),
            app.add_option("--stale-ms", a.stale_ms, "edge staleness horizon")->check(CLI::NonNegativeNumber),
            app.add_option("--allow-list", a.allow_list, "file of permitted target names"),
            app.add_option("--log", a.log, "NDJSON session log"),
            app.add_option("--clock", a.clock, "wall | data")->check(CLI::IsMember({"wall", "data"}))};
}

std::atomic<FusionServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (FusionServer* s = g_server.load()) s->request_stop();
}

int run_serve(const ServeArgs& a, std::ostream& out) {
  config::ServerConfig cfg;
  config::apply(load_config(a.common), cfg);
  if (a.opts[0]->count()) cfg.listen = a.listen;
  if (a.opts[1]->count()) cfg.operator_listen = a.operator_listen;
  if (a.opts[2]->count()) cfg.fusion_hz = a.fusion_hz;
  if (a.opts[3]->count()) cfg.graph.stale_after_us = static_cast<TimestampUs>(a.stale_ms * 1e3);
  if (a.opts[4]->count()) {
    require_file(a.allow_list, "--allow-list");
    cfg.allow_list = a.allow_list;
  }
  if (a.opts[5]->count()) cfg.log_path = a.log;
  if (a.opts[6]->count()) cfg.clock = config::parse_clock(a.clock);

  FusionServer server(cfg);
  g_server = &server;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  try {
    server.start();
  } catch (...) {
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
    g_server = nullptr;
    throw;
  }
  out << "listening on port " << server.port();
  if (server.operator_port()) out << ", operator bridge on port " << server.operator_port();
  out << std::endl;
  server.wait();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  g_server = nullptr;
  out << "stopped\n";
  return kOk;
}

// ---- repro ----

struct ReproArgs {
  Common common;
  std::uint64_t seed = 1;
  double duration_s = 500.0;
  std::string out;
  bool table_only = false;
};

void add_repro(CLI::App& app, ReproArgs& a) {
  add_common(app, a.common);
  app.add_option("--seed", a.seed, "seed of the printed comparison scenario");
  app.add_option("--duration", a.duration_s, "scenario length in seconds")->check(CLI::PositiveNumber);
  app.add_option("--out", a.out, "directory for the scenario's report files");
  app.add_flag("--table-only", a.table_only, "print the comparison table and skip the checks");
}

int run_repro(const ReproArgs& a, std::ostream& out, std::ostream& err) {
  const auto run = acceptance::run_scenario(acceptance::benchmark_scenario(a.seed, a.duration_s));
  out << "scenario: seed " << a.seed << ", " << run.config.n_sensors << " sensors x " << run.config.n_targets
      << " targets, " << a.duration_s << " s at " << run.config.rate_hz << " Hz, p_block " << run.config.p_block
      << "\n";
  out << run.evaluation.table();
  if (!a.out.empty()) metrics::write_outputs(run.evaluation, a.out);
  if (a.table_only) return kOk;

  out << "\n";
  acceptance::Options opts;
  opts.progress = &err;
  const auto outcomes = acceptance::run_all(opts);
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    out << acceptance::format(o) << "\n";
    failed += o.pass ? 0 : 1;
  }
  out << outcomes.size() - failed << "/" << outcomes.size() << " acceptance criteria passed\n";
  return failed == 0 ? kOk : kFailure;
}

// Parses with CLI11, mapping its help/usage outcomes onto our exit codes.
std::optional<int> parse(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }
  return std::nullopt;
}

void apply_log_level(const Common& c) {
  log::set_level(log::parse_level(c.log_level));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::string prog = args.empty() ? "scenefuse" : fs::path(args[0]).filename().string();
  CLI::App app("multi-sensor tracking fusion", prog);
  app.set_version_flag("--version", "scenefuse 0.1.0");

  SimArgs sim_args;
  EvalArgs eval_args;
  ServeArgs serve_args;
  ReproArgs repro_args;
  CLI::App* serve = nullptr;
  CLI::App* sim = nullptr;
  CLI::App* eval = nullptr;
  CLI::App* repro = nullptr;

  if (prog == "scenefuse-sim") {
    add_sim(app, sim_args);
    sim = &app;
  } else if (prog == "scenefuse-eval") {
    add_eval(app, eval_args);
    eval = &app;
  } else {
    app.require_subcommand(1);
    serve = app.add_subcommand("serve", "run the fusion server");
    sim = app.add_subcommand("sim", "simulate, observe and drive scenarios");
    eval = app.add_subcommand("eval", "score estimates against ground truth");
    repro = app.add_subcommand("repro", "run the desk-scale experiment and every acceptance check");
    add_serve(*serve, serve_args);
    add_sim(*sim, sim_args);
    add_eval(*eval, eval_args);
    add_repro(*repro, repro_args);
  }

  std::vector<std::string> argv = args.empty() ? std::vector<std::string>{prog} : args;
  if (auto code = parse(app, argv, out, err)) return *code;

  try {
    if (serve && serve->parsed()) {
      apply_log_level(serve_args.common);
      return run_serve(serve_args, out);
    }
    if (repro && repro->parsed()) {
      apply_log_level(repro_args.common);
      return run_repro(repro_args, out, err);
    }
    if (eval && (eval == &app || eval->parsed())) {
      apply_log_level(eval_args.common);
      return run_eval(eval_args, out);
    }
    apply_log_level(sim_args.common);
    return run_sim(sim_args, out);
  } catch (const UsageError& e) {
    err << prog << ": " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << prog << ": " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << prog << ": " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << prog << ": unexpected failure: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace scenefuse::cli
