#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "scenefuse/metrics.hpp"
#include "scenefuse/replay.hpp"
#include "scenefuse/simulator.hpp"

// Acceptance checks, one per top-level requirement, shared by the
// acceptance test binary and `scenefuse repro`.
namespace scenefuse::acceptance {

struct Outcome {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  /// Progress lines; null for silence.
  std::ostream* progress = nullptr;
  /// Seeds used by the fusion-benefit check (first one is printed by repro).
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double scenario_duration_s = 500.0;
};

struct Criterion {
  std::string name;
  std::function<Outcome(const Options&)> run;
};

const std::vector<Criterion>& criteria();

/// Runs every criterion in order, timing each one.
std::vector<Outcome> run_all(const Options& opts);
/// "PASS  name  detail"
std::string format(const Outcome& o);

/// The two-sensor, two-target occlusion scenario evaluated offline.
struct ScenarioRun {
  sim::ScenarioConfig config;
  sim::GroundTruthLog ground_truth;
  sim::MeasurementLog measurements;
  metrics::Evaluation evaluation;
};

/// Two sensors, two targets, p_block 0.1 at 30 Hz. The linear acceleration
/// limit is calibrated so targets travel 82.7 m per 500 s.
sim::ScenarioConfig benchmark_scenario(std::uint64_t seed, double duration_s);
/// Evaluates `config` by replaying its measurement log through the fusion
/// engine and scoring single-sensor and fused relative trajectories.
ScenarioRun run_scenario(const sim::ScenarioConfig& config);
metrics::GroundTruth to_ground_truth(const sim::GroundTruthLog& gt);
/// Measurement and update records in the session-log format.
std::vector<nlohmann::json> session_records(const sim::MeasurementLog& log, const std::vector<ResultRecord>& updates);

}  // namespace scenefuse::acceptance
