#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenefuse/scene_graph.hpp"
#include "scenefuse/se3.hpp"

namespace scenefuse::metrics {

struct Stamped {
  TimestampUs t_us = 0;
  Pose pose;
};
using Trajectory = std::vector<Stamped>;

inline constexpr TimestampUs kDefaultToleranceUs = 20'000;
inline constexpr TimestampUs kDefaultMaxLagUs = 200'000;

/// Estimated and ground-truth samples with a nearest-neighbour timestamp
/// association. Each ground-truth sample is used at most once.
struct TrajectoryPair {
  Trajectory estimated;
  Trajectory ground_truth;
  /// (estimated index, ground-truth index), increasing in both.
  std::vector<std::pair<std::size_t, std::size_t>> association;
  std::size_t unmatched = 0;
  /// Added to estimated timestamps before matching.
  TimestampUs offset_us = 0;

  PoseSequence matched_estimated() const;
  PoseSequence matched_ground_truth() const;
  /// Ground-truth timestamps of the matched samples.
  std::vector<TimestampUs> matched_times() const;
};

/// Both trajectories must be sorted by time.
TrajectoryPair associate(Trajectory estimated, Trajectory ground_truth,
                         TimestampUs tolerance_us = kDefaultToleranceUs, TimestampUs offset_us = 0);

/// Lag in [-max_lag_us, max_lag_us] (1 ms steps) maximising the normalised
/// cross-correlation of translational speed. 0 when either speed profile is
/// flat.
TimestampUs estimate_lag(const Trajectory& estimated, const Trajectory& ground_truth,
                         TimestampUs max_lag_us = kDefaultMaxLagUs);

struct AteResult {
  double trans_rmse = 0.0;  // m
  double rot_rmse = 0.0;    // rad
  double trans_std = 0.0;   // m, SD of the per-sample translational errors
  Pose alignment;
  std::vector<double> trans_errors;
  std::vector<double> rot_errors;
};

/// Aligns with umeyama (no scale), then takes log(gt^-1 S est) per sample.
/// Throws TooFewSamples below 3 matches, DegenerateGeometry for collinear
/// positions.
AteResult ate(const TrajectoryPair& pair);

struct RteResult {
  double trans_rmse = 0.0;
  double rot_rmse = 0.0;
  std::vector<double> trans_errors;
  std::vector<double> rot_errors;
};

/// Relative error over a fixed interval: sample i is paired with the matched
/// sample whose ground-truth time is closest to t_i + delta (within the
/// association tolerance). Throws TooFewSamples when no such pair exists.
RteResult rte(const TrajectoryPair& pair, double delta_s = 1.0, TimestampUs tolerance_us = kDefaultToleranceUs);

struct StatusInterval {
  double begin_s = 0.0;
  double end_s = 0.0;
  bool tracked = true;
};

/// Untracked time over `total_s`.
double loss_ratio(const std::vector<StatusInterval>& intervals, double total_s);

/// Sample-and-hold conversion: sample k covers [t_k, t_{k+1}); the last one
/// covers one median sample period. Times must be sorted.
std::vector<StatusInterval> status_intervals(const std::vector<TimestampUs>& times, const std::vector<bool>& tracked);

/// Mean of the largest `fraction` of the values (at least one value).
double top_fraction_mean(std::vector<double> values, double fraction = 0.05);

struct ErrorReport {
  double ate_trans = 0.0;
  double ate_rot = 0.0;
  double ate_std = 0.0;
  double rte_trans = 0.0;
  double rte_rot = 0.0;
  double top5_trans = 0.0;
  double loss_track_ratio = 0.0;
  std::size_t n_samples = 0;
};

struct EvalOptions {
  double delta_s = 1.0;
  TimestampUs tolerance_us = kDefaultToleranceUs;
  bool lag_search = true;
  TimestampUs max_lag_us = kDefaultMaxLagUs;
  /// Fill untracked samples with the last tracked estimate.
  bool hold_last = true;
};

/// Errors of one source on the relative trajectory of a pair of targets.
struct PairReport {
  std::string source;
  std::string first;
  std::string second;
  ErrorReport report;
  TimestampUs lag_us = 0;
  std::size_t unmatched = 0;
  /// Non-empty when the trajectory errors could not be computed.
  std::string error;

  std::string pair() const { return first + "->" + second; }
};

struct TargetLoss {
  std::string source;
  std::string target;
  double loss_track_ratio = 0.0;
};

struct TrajRow {
  double t_s = 0.0;
  std::string source;
  std::string pair;
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
  bool tracked = true;
};

struct Evaluation {
  std::vector<PairReport> pairs;
  std::vector<TargetLoss> targets;
  std::vector<TrajRow> traj;

  const PairReport* find(const std::string& source, const std::string& first, const std::string& second) const;
  const TargetLoss* find_target(const std::string& source, const std::string& target) const;
  std::vector<std::string> sources() const;

  /// Human-readable table, millimetres and degrees.
  std::string table() const;
  /// source,pair,metric,value rows in SI units (m, rad).
  void write_report_csv(std::ostream& out) const;
  void write_traj_csv(std::ostream& out) const;
};

/// Ground-truth poses per entity; records flagged "valid": false are dropped.
struct GroundTruth {
  std::map<std::string, Trajectory> entities;
  std::map<std::string, Layer> layers;

  std::vector<std::string> passive() const;
};

GroundTruth read_ground_truth(std::istream& in);
/// NDJSON records; meas lines yield "sensor:<id>" sources, update lines
/// (with a sensor_id) the "fused" source.
std::vector<nlohmann::json> read_records(std::istream& in);

/// Throws NoOverlap when estimate and ground-truth time ranges are disjoint.
Evaluation evaluate(const std::vector<nlohmann::json>& records, const GroundTruth& gt, const EvalOptions& opts = {});

/// report.csv, table.txt, traj_xyz.csv under `dir` (created if missing).
void write_outputs(const Evaluation& eval, const std::filesystem::path& dir);

}  // namespace scenefuse::metrics
