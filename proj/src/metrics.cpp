#include "scenefuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "scenefuse/errors.hpp"
#include "scenefuse/protocol.hpp"

namespace scenefuse::metrics {
namespace {

using nlohmann::json;

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr const char* kFused = "fused";

double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

double stddev(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Index of the sample in `times` nearest to t, or npos when empty.
std::size_t nearest(const std::vector<TimestampUs>& times, TimestampUs t) {
  if (times.empty()) return std::string::npos;
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  const auto k = static_cast<std::size_t>(it - times.begin());
  if (k > 0 && t - times[k - 1] <= *it - t) return k - 1;
  return k;
}

std::vector<TimestampUs> times_of(const Trajectory& traj) {
  std::vector<TimestampUs> out;
  out.reserve(traj.size());
  for (const auto& s : traj) out.push_back(s.t_us);
  return out;
}

// Speed from a centred difference over +-w samples.
std::vector<double> speed_profile(const Trajectory& traj, std::size_t w = 3) {
  std::vector<double> out(traj.size(), 0.0);
  if (traj.size() < 2) return out;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const std::size_t a = k >= w ? k - w : 0;
    const std::size_t b = std::min(traj.size() - 1, k + w);
    const double dt = static_cast<double>(traj[b].t_us - traj[a].t_us) * 1e-6;
    if (dt > 0.0) out[k] = (traj[b].pose.translation() - traj[a].pose.translation()).norm() / dt;
  }
  return out;
}

// A sampled status/pose series of one source.
struct Sample {
  TimestampUs t_us = 0;
  std::optional<Pose> pose;
};

struct SourceData {
  // single sensors: target -> samples (sensor frame)
  std::map<std::string, std::map<TimestampUs, std::optional<Pose>>> single;
};

// fused: solve time -> sensor -> target -> pose (nullopt when lost)
using FusedData = std::map<TimestampUs, std::map<std::string, std::map<std::string, std::optional<Pose>>>>;

Trajectory gt_relative(const GroundTruth& gt, const std::string& a, const std::string& b) {
  Trajectory out;
  auto ia = gt.entities.find(a);
  auto ib = gt.entities.find(b);
  if (ia == gt.entities.end() || ib == gt.entities.end()) return out;
  std::map<TimestampUs, Pose> pb;
  for (const auto& s : ib->second) pb.emplace(s.t_us, s.pose);
  for (const auto& s : ia->second) {
    if (auto it = pb.find(s.t_us); it != pb.end()) out.push_back({s.t_us, se3::relative(s.pose, it->second)});
  }
  return out;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

}  // namespace

PoseSequence TrajectoryPair::matched_estimated() const {
  PoseSequence out;
  out.reserve(association.size());
  for (const auto& [e, g] : association) out.push_back(estimated[e].pose);
  return out;
}

PoseSequence TrajectoryPair::matched_ground_truth() const {
  PoseSequence out;
  out.reserve(association.size());
  for (const auto& [e, g] : association) out.push_back(ground_truth[g].pose);
  return out;
}

std::vector<TimestampUs> TrajectoryPair::matched_times() const {
  std::vector<TimestampUs> out;
  out.reserve(association.size());
  for (const auto& [e, g] : association) out.push_back(ground_truth[g].t_us);
  return out;
}

TrajectoryPair associate(Trajectory estimated, Trajectory ground_truth, TimestampUs tolerance_us,
                         TimestampUs offset_us) {
  TrajectoryPair pair;
  pair.estimated = std::move(estimated);
  pair.ground_truth = std::move(ground_truth);
  pair.offset_us = offset_us;
  const auto gt_times = times_of(pair.ground_truth);
  std::size_t next_free = 0;
  for (std::size_t e = 0; e < pair.estimated.size(); ++e) {
    const TimestampUs t = pair.estimated[e].t_us + offset_us;
    const std::size_t g = nearest(gt_times, t);
    if (g == std::string::npos || g < next_free || std::llabs(gt_times[g] - t) > tolerance_us) {
      ++pair.unmatched;
      continue;
    }
    pair.association.emplace_back(e, g);
    next_free = g + 1;
  }
  return pair;
}

TimestampUs estimate_lag(const Trajectory& estimated, const Trajectory& ground_truth, TimestampUs max_lag_us) {
  if (estimated.size() < 3 || ground_truth.size() < 3) return 0;
  const auto se = speed_profile(estimated);
  const auto sg = speed_profile(ground_truth);
  const auto gt_times = times_of(ground_truth);

  auto correlation = [&](TimestampUs lag) -> std::optional<double> {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    std::size_t n = 0;
    std::size_t g = 0;
    for (std::size_t k = 0; k < estimated.size(); ++k) {
      const TimestampUs t = estimated[k].t_us + lag;
      if (t < gt_times.front() || t > gt_times.back()) continue;
      while (g + 1 < gt_times.size() && gt_times[g + 1] < t) ++g;
      const std::size_t h = std::min(g + 1, gt_times.size() - 1);
      double y = sg[g];
      if (h != g && gt_times[h] != gt_times[g]) {
        const double a = static_cast<double>(t - gt_times[g]) / static_cast<double>(gt_times[h] - gt_times[g]);
        y = (1.0 - std::clamp(a, 0.0, 1.0)) * sg[g] + std::clamp(a, 0.0, 1.0) * sg[h];
      }
      const double x = se[k];
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      ++n;
    }
    if (n < 3) return std::nullopt;
    const double dn = static_cast<double>(n);
    const double vx = sxx - sx * sx / dn;
    const double vy = syy - sy * sy / dn;
    if (vx <= 1e-18 * dn || vy <= 1e-18 * dn) return std::nullopt;
    return (sxy - sx * sy / dn) / std::sqrt(vx * vy);
  };

  TimestampUs best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  constexpr TimestampUs kStep = 1000;
  for (TimestampUs m = 0; m <= max_lag_us; m += kStep) {
    for (TimestampUs lag : {m, -m}) {
      if (m == 0 && lag < 0) continue;
      auto c = correlation(lag);
      if (c && *c > best + 1e-12) {
        best = *c;
        best_lag = lag;
      }
    }
  }
  return std::isfinite(best) ? best_lag : 0;
}

AteResult ate(const TrajectoryPair& pair) {
  if (pair.association.size() < 3) throw TooFewSamples("ATE needs at least 3 associated samples");
  const PoseSequence est = pair.matched_estimated();
  const PoseSequence gt = pair.matched_ground_truth();
  AteResult r;
  r.alignment = se3::umeyama_align(est, gt);
  r.trans_errors.reserve(est.size());
  r.rot_errors.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Twist e = se3::log(gt[i].inverse() * r.alignment * est[i]);
    r.trans_errors.push_back(e.rho.norm());
    r.rot_errors.push_back(e.phi.norm());
  }
  r.trans_rmse = rms(r.trans_errors);
  r.rot_rmse = rms(r.rot_errors);
  r.trans_std = stddev(r.trans_errors);
  return r;
}

RteResult rte(const TrajectoryPair& pair, double delta_s, TimestampUs tolerance_us) {
  const PoseSequence est = pair.matched_estimated();
  const PoseSequence gt = pair.matched_ground_truth();
  const auto times = pair.matched_times();
  const auto delta_us = static_cast<TimestampUs>(std::llround(delta_s * 1e6));
  RteResult r;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::size_t j = nearest(times, times[i] + delta_us);
    if (j == std::string::npos || j <= i || std::llabs(times[j] - times[i] - delta_us) > tolerance_us) continue;
    const Pose e = se3::relative(se3::relative(gt[i], gt[j]), se3::relative(est[i], est[j]));
    const Twist xi = se3::log(e);
    r.trans_errors.push_back(xi.rho.norm());
    r.rot_errors.push_back(xi.phi.norm());
  }
  if (r.trans_errors.empty()) throw TooFewSamples("trajectory does not span the RTE interval");
  r.trans_rmse = rms(r.trans_errors);
  r.rot_rmse = rms(r.rot_errors);
  return r;
}

double loss_ratio(const std::vector<StatusInterval>& intervals, double total_s) {
  if (!(total_s > 0.0)) return 0.0;
  double lost = 0.0;
  for (const auto& iv : intervals) {
    if (!iv.tracked) lost += std::max(0.0, iv.end_s - iv.begin_s);
  }
  return std::clamp(lost / total_s, 0.0, 1.0);
}

std::vector<StatusInterval> status_intervals(const std::vector<TimestampUs>& times, const std::vector<bool>& tracked) {
  std::vector<StatusInterval> out;
  if (times.empty()) return out;
  std::vector<TimestampUs> gaps;
  for (std::size_t k = 1; k < times.size(); ++k) gaps.push_back(times[k] - times[k - 1]);
  TimestampUs period = 0;
  if (!gaps.empty()) {
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    period = gaps[gaps.size() / 2];
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    const TimestampUs end = k + 1 < times.size() ? times[k + 1] : times[k] + period;
    out.push_back({static_cast<double>(times[k]) * 1e-6, static_cast<double>(end) * 1e-6, tracked[k]});
  }
  return out;
}

double top_fraction_mean(std::vector<double> values, double fraction) {
  if (values.empty()) return 0.0;
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * values.size())));
  std::partial_sort(values.begin(), values.begin() + n, values.end(), std::greater<>());
  return std::accumulate(values.begin(), values.begin() + n, 0.0) / static_cast<double>(n);
}

std::vector<std::string> GroundTruth::passive() const {
  std::vector<std::string> out;
  for (const auto& [name, traj] : entities) {
    auto it = layers.find(name);
    if (it == layers.end() || it->second == Layer::Passive) out.push_back(name);
  }
  return out;
}

GroundTruth read_ground_truth(std::istream& in) {
  GroundTruth gt;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("t_us") || !j.contains("entity") || !j.contains("pose")) {
      throw ProtocolError("ground truth line " + std::to_string(lineno) + " is malformed");
    }
    const std::string entity = j.at("entity").get<std::string>();
    if (j.contains("layer")) {
      gt.layers[entity] = j.at("layer").get<std::string>() == "active" ? Layer::Active : Layer::Passive;
    }
    if (!j.value("valid", true)) continue;
    gt.entities[entity].push_back({j.at("t_us").get<TimestampUs>(), protocol::pose_from_json(j.at("pose"))});
  }
  for (auto& [name, traj] : gt.entities) {
    std::stable_sort(traj.begin(), traj.end(), [](const Stamped& a, const Stamped& b) { return a.t_us < b.t_us; });
  }
  return gt;
}

std::vector<json> read_records(std::istream& in) {
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ProtocolError("record line " + std::to_string(lineno) + " is not a JSON object");
    }
    out.push_back(std::move(j));
  }
  return out;
}

Evaluation evaluate(const std::vector<json>& records, const GroundTruth& gt, const EvalOptions& opts) {
  std::map<std::string, SourceData> singles;
  FusedData fused;
  TimestampUs est_lo = std::numeric_limits<TimestampUs>::max();
  TimestampUs est_hi = std::numeric_limits<TimestampUs>::min();
  std::set<std::string> seen_targets;

  for (const json& r : records) {
    const std::string type = r.value("type", std::string());
    if (type == "meas") {
      const auto m = protocol::measurement_from_json(r);
      singles["sensor:" + m.sensor_id].single[m.target][m.t_us] =
          m.status ? std::optional<Pose>(m.pose) : std::nullopt;
      seen_targets.insert(m.target);
      est_lo = std::min(est_lo, m.t_us);
      est_hi = std::max(est_hi, m.t_us);
    } else if (type == "update") {
      const auto msg = protocol::from_json(r);
      const auto& u = std::get<protocol::PoseUpdate>(msg);
      const std::string sensor = r.value("sensor_id", std::string());
      auto& slot = fused[u.solve_t_us][sensor];
      for (const auto& e : u.poses) {
        slot[e.target] = (!e.lose_track && e.pose) ? e.pose : std::nullopt;
        seen_targets.insert(e.target);
      }
      est_lo = std::min(est_lo, u.solve_t_us);
      est_hi = std::max(est_hi, u.solve_t_us);
    }
  }

  TimestampUs gt_lo = std::numeric_limits<TimestampUs>::max();
  TimestampUs gt_hi = std::numeric_limits<TimestampUs>::min();
  for (const auto& [name, traj] : gt.entities) {
    if (traj.empty()) continue;
    gt_lo = std::min(gt_lo, traj.front().t_us);
    gt_hi = std::max(gt_hi, traj.back().t_us);
  }
  if (est_lo > est_hi || gt_lo > gt_hi || est_hi + opts.tolerance_us < gt_lo || est_lo - opts.tolerance_us > gt_hi) {
    throw NoOverlap("estimate and ground-truth logs do not overlap in time");
  }

  std::vector<std::string> targets;
  for (const auto& name : gt.passive()) {
    if (gt.layers.contains(name) || seen_targets.contains(name)) targets.push_back(name);
  }

  // Per-source pair samples: (t, relative pose if tracked).
  auto single_pair = [](const SourceData& d, const std::string& a, const std::string& b) {
    std::vector<Sample> out;
    auto ia = d.single.find(a);
    auto ib = d.single.find(b);
    if (ia == d.single.end() || ib == d.single.end()) return out;
    for (const auto& [t, pa] : ia->second) {
      auto jt = ib->second.find(t);
      if (jt == ib->second.end()) continue;
      Sample s{t, std::nullopt};
      if (pa && jt->second) s.pose = se3::relative(*pa, *jt->second);
      out.push_back(s);
    }
    return out;
  };
  auto fused_pair = [&](const std::string& a, const std::string& b) {
    std::vector<Sample> out;
    for (const auto& [t, by_sensor] : fused) {
      Sample s{t, std::nullopt};
      for (const auto& [sensor, poses] : by_sensor) {
        auto ia = poses.find(a);
        auto ib = poses.find(b);
        if (ia != poses.end() && ib != poses.end() && ia->second && ib->second) {
          s.pose = se3::relative(*ia->second, *ib->second);
          break;
        }
      }
      out.push_back(s);
    }
    return out;
  };

  std::vector<std::pair<std::string, std::function<std::vector<Sample>(const std::string&, const std::string&)>>>
      sources;
  for (const auto& [name, data] : singles) {
    sources.emplace_back(name, [&data, &single_pair](const std::string& a, const std::string& b) {
      return single_pair(data, a, b);
    });
  }
  if (!fused.empty()) sources.emplace_back(kFused, fused_pair);

  Evaluation eval;

  // Drops samples without ground truth nearby, then derives status and the
  // (optionally held) estimate trajectory.
  auto evaluate_samples = [&](const std::vector<Sample>& samples, const Trajectory& gt_traj, TimestampUs lag,
                              std::vector<TimestampUs>& kept_times, std::vector<bool>& kept_tracked,
                              Trajectory& est) {
    const auto gt_times = times_of(gt_traj);
    std::optional<Pose> last;
    for (const auto& s : samples) {
      const std::size_t g = nearest(gt_times, s.t_us + lag);
      if (g == std::string::npos || std::llabs(gt_times[g] - s.t_us - lag) > opts.tolerance_us) continue;
      kept_times.push_back(s.t_us);
      kept_tracked.push_back(s.pose.has_value());
      if (s.pose) last = s.pose;
      if (s.pose) {
        est.push_back({s.t_us, *s.pose});
      } else if (opts.hold_last && last) {
        est.push_back({s.t_us, *last});
      }
    }
  };

  for (std::size_t ia = 0; ia < targets.size(); ++ia) {
    for (std::size_t ib = ia + 1; ib < targets.size(); ++ib) {
      const std::string& a = targets[ia];
      const std::string& b = targets[ib];
      const Trajectory gt_traj = gt_relative(gt, a, b);
      bool gt_emitted = false;
      for (const auto& [source, extract] : sources) {
        PairReport rep;
        rep.source = source;
        rep.first = a;
        rep.second = b;
        const auto samples = extract(a, b);

        if (opts.lag_search) {
          Trajectory tracked_only;
          for (const auto& s : samples) {
            if (s.pose) tracked_only.push_back({s.t_us, *s.pose});
          }
          rep.lag_us = estimate_lag(tracked_only, gt_traj, opts.max_lag_us);
        }

        std::vector<TimestampUs> times;
        std::vector<bool> tracked;
        Trajectory est;
        evaluate_samples(samples, gt_traj, rep.lag_us, times, tracked, est);
        if (times.empty()) {
          rep.error = "no samples overlap the ground truth";
          rep.report.loss_track_ratio = 1.0;
          eval.pairs.push_back(rep);
          continue;
        }
        const auto intervals = status_intervals(times, tracked);
        rep.report.loss_track_ratio = loss_ratio(intervals, intervals.back().end_s - intervals.front().begin_s);

        const TrajectoryPair pair = associate(est, gt_traj, opts.tolerance_us, rep.lag_us);
        rep.unmatched = pair.unmatched;
        rep.report.n_samples = pair.association.size();
        try {
          const AteResult a_res = ate(pair);
          rep.report.ate_trans = a_res.trans_rmse;
          rep.report.ate_rot = a_res.rot_rmse;
          rep.report.ate_std = a_res.trans_std;
          const RteResult r_res = rte(pair, opts.delta_s, opts.tolerance_us);
          rep.report.rte_trans = r_res.trans_rmse;
          rep.report.rte_rot = r_res.rot_rmse;
          rep.report.top5_trans = top_fraction_mean(r_res.trans_errors, 0.05);
        } catch (const Error& e) {
          rep.error = e.what();
        }

        const std::string pair_name = rep.pair();
        std::size_t k = 0;
        for (const auto& s : samples) {
          while (k < est.size() && est[k].t_us < s.t_us) ++k;
          if (k < est.size() && est[k].t_us == s.t_us) {
            eval.traj.push_back({static_cast<double>(s.t_us) * 1e-6, source, pair_name, est[k].pose.translation(),
                                 s.pose.has_value()});
          }
        }
        if (!gt_emitted) {
          for (const auto& g : gt_traj) {
            eval.traj.push_back({static_cast<double>(g.t_us) * 1e-6, "ground_truth", pair_name, g.pose.translation(),
                                 true});
          }
          gt_emitted = true;
        }
        eval.pairs.push_back(std::move(rep));
      }
    }
  }

  // Per-target loss-track ratios.
  for (const auto& target : targets) {
    auto git = gt.entities.find(target);
    if (git == gt.entities.end()) continue;
    const auto gt_times = times_of(git->second);
    auto has_gt = [&](TimestampUs t) {
      const std::size_t g = nearest(gt_times, t);
      return g != std::string::npos && std::llabs(gt_times[g] - t) <= opts.tolerance_us;
    };
    auto push = [&](const std::string& source, const std::vector<TimestampUs>& times, const std::vector<bool>& tr) {
      if (times.empty()) return;
      const auto iv = status_intervals(times, tr);
      eval.targets.push_back({source, target, loss_ratio(iv, iv.back().end_s - iv.front().begin_s)});
    };
    for (const auto& [name, data] : singles) {
      std::vector<TimestampUs> times;
      std::vector<bool> tr;
      if (auto it = data.single.find(target); it != data.single.end()) {
        for (const auto& [t, p] : it->second) {
          if (!has_gt(t)) continue;
          times.push_back(t);
          tr.push_back(p.has_value());
        }
      }
      push(name, times, tr);
    }
    if (!fused.empty()) {
      std::vector<TimestampUs> times;
      std::vector<bool> tr;
      for (const auto& [t, by_sensor] : fused) {
        if (!has_gt(t)) continue;
        bool ok = false;
        for (const auto& [sensor, poses] : by_sensor) {
          auto it = poses.find(target);
          ok = ok || (it != poses.end() && it->second.has_value());
        }
        times.push_back(t);
        tr.push_back(ok);
      }
      push(kFused, times, tr);
    }
  }
  return eval;
}

const PairReport* Evaluation::find(const std::string& source, const std::string& first,
                                   const std::string& second) const {
  for (const auto& p : pairs) {
    if (p.source == source && p.first == first && p.second == second) return &p;
  }
  return nullptr;
}

const TargetLoss* Evaluation::find_target(const std::string& source, const std::string& target) const {
  for (const auto& t : targets) {
    if (t.source == source && t.target == target) return &t;
  }
  return nullptr;
}

std::vector<std::string> Evaluation::sources() const {
  std::vector<std::string> out;
  for (const auto& p : pairs) {
    if (std::find(out.begin(), out.end(), p.source) == out.end()) out.push_back(p.source);
  }
  return out;
}

std::string Evaluation::table() const {
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-24s %-18s %22s %14s %15s %14s %22s %21s\n", "Pair", "Source",
                "ATE Trans +- SD [mm]", "ATE Rot [deg]", "RTE Trans [mm]", "RTE Rot [deg]", "top 5% RPE Trans [mm]",
                "Loss Track Ratio [%]");
  os << buf;
  for (const auto& p : pairs) {
    const auto& r = p.report;
    if (!p.error.empty()) {
      std::snprintf(buf, sizeof buf, "%-24s %-18s %s (loss %.2f%%)\n", p.pair().c_str(), p.source.c_str(),
                    p.error.c_str(), 100.0 * r.loss_track_ratio);
    } else {
      const std::string ate_col = fmt("%.2f", r.ate_trans * 1e3) + " +- " + fmt("%.2f", r.ate_std * 1e3);
      std::snprintf(buf, sizeof buf, "%-24s %-18s %22s %14.3f %15.2f %14.3f %22.2f %21.2f\n", p.pair().c_str(),
                    p.source.c_str(), ate_col.c_str(), r.ate_rot * kRadToDeg, r.rte_trans * 1e3,
                    r.rte_rot * kRadToDeg, r.top5_trans * 1e3, 100.0 * r.loss_track_ratio);
    }
    os << buf;
  }
  if (!targets.empty()) {
    os << "\n";
    std::snprintf(buf, sizeof buf, "%-24s %-18s %21s\n", "Target", "Source", "Loss Track Ratio [%]");
    os << buf;
    for (const auto& t : targets) {
      std::snprintf(buf, sizeof buf, "%-24s %-18s %21.2f\n", t.target.c_str(), t.source.c_str(),
                    100.0 * t.loss_track_ratio);
      os << buf;
    }
  }
  return os.str();
}

void Evaluation::write_report_csv(std::ostream& out) const {
  out << "source,target,metric,value\n";
  out.precision(12);
  for (const auto& p : pairs) {
    const auto& r = p.report;
    const std::string prefix = p.source + "," + p.pair() + ",";
    out << prefix << "loss_track_ratio," << r.loss_track_ratio << "\n";
    out << prefix << "n_samples," << r.n_samples << "\n";
    out << prefix << "unmatched," << p.unmatched << "\n";
    out << prefix << "lag_s," << static_cast<double>(p.lag_us) * 1e-6 << "\n";
    if (!p.error.empty()) continue;
    out << prefix << "ate_trans_m," << r.ate_trans << "\n";
    out << prefix << "ate_std_m," << r.ate_std << "\n";
    out << prefix << "ate_rot_rad," << r.ate_rot << "\n";
    out << prefix << "rte_trans_m," << r.rte_trans << "\n";
    out << prefix << "rte_rot_rad," << r.rte_rot << "\n";
    out << prefix << "top5_trans_m," << r.top5_trans << "\n";
  }
  for (const auto& t : targets) {
    out << t.source << "," << t.target << ",loss_track_ratio," << t.loss_track_ratio << "\n";
  }
}

void Evaluation::write_traj_csv(std::ostream& out) const {
  out << "t_s,source,pair,x,y,z,tracked\n";
  out.precision(10);
  for (const auto& r : traj) {
    out << r.t_s << "," << r.source << "," << r.pair << "," << r.xyz.x() << "," << r.xyz.y() << "," << r.xyz.z()
        << "," << (r.tracked ? 1 : 0) << "\n";
  }
}

void write_outputs(const Evaluation& eval, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  auto report = open("report.csv");
  eval.write_report_csv(report);
  auto table = open("table.txt");
  table << eval.table();
  auto traj = open("traj_xyz.csv");
  eval.write_traj_csv(traj);
}

}  // namespace scenefuse::metrics
