#include "scenefuse/pgo.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "scenefuse/errors.hpp"

namespace scenefuse::pgo {
namespace {

// Levenberg lambdas tried after the undamped step: 1e-6, 1e-5, ..., 1e2.
constexpr std::array<double, 10> kLambdas = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
// Relative cost change treated as rounding noise.
constexpr double kCostRoundoff = 1e-12;

double safe_cost(const GraphSnapshot& snap, const StateVector& state) {
  try {
    return cost(snap, state);
  } catch (const AngleNearPi&) {
    return std::numeric_limits<double>::infinity();
  }
}

StateVector retract(const StateVector& state, const Eigen::VectorXd& delta, const VariableLayout& layout) {
  StateVector out = state;
  auto apply = [&](std::map<NodeId, Pose>& poses) {
    for (auto& [id, pose] : poses) {
      if (auto off = layout.offset(id)) {
        pose = pose * se3::exp(Twist::from_vector(delta.segment<6>(*off)));
      }
    }
  };
  apply(out.active);
  apply(out.passive);
  out.active[out.anchor] = Pose::identity();
  return out;
}

struct NormalEquations {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
};

NormalEquations build_normal_equations(const GraphSnapshot& snap, const StateVector& state,
                                       const VariableLayout& layout) {
  NormalEquations ne{Eigen::MatrixXd::Zero(layout.dims, layout.dims), Eigen::VectorXd::Zero(layout.dims)};
  for (const auto& [key, e] : snap.edges) {
    if (!e.usable() || !state.contains(e.sensor) || !state.contains(e.target)) continue;
    const Pose& A = state.pose(e.sensor);
    const Pose& P = state.pose(e.target);
    const Vector6d r = residual(e.pose, A, P).vector();
    const ResidualJacobians jac = residual_jacobians(e.pose, A, P);
    const auto ca = layout.offset(e.sensor);
    const auto cp = layout.offset(e.target);
    const Matrix6d& W = e.info;
    if (ca) {
      const Eigen::Matrix<double, 6, 6> JaW = jac.d_sensor.transpose() * W;
      ne.H.block<6, 6>(*ca, *ca) += JaW * jac.d_sensor;
      ne.g.segment<6>(*ca) += JaW * r;
      if (cp) {
        const Matrix6d cross = JaW * jac.d_target;
        ne.H.block<6, 6>(*ca, *cp) += cross;
        ne.H.block<6, 6>(*cp, *ca) += cross.transpose();
      }
    }
    if (cp) {
      const Matrix6d JpW = jac.d_target.transpose() * W;
      ne.H.block<6, 6>(*cp, *cp) += JpW * jac.d_target;
      ne.g.segment<6>(*cp) += JpW * r;
    }
  }
  return ne;
}

Eigen::MatrixXd invert_hessian(const Eigen::MatrixXd& H) {
  const Eigen::Index n = H.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(n, n));
  return H.completeOrthogonalDecomposition().pseudoInverse();
}

}  // namespace

const Pose& StateVector::pose(const NodeId& id) const {
  const auto& poses = id.is_active() ? active : passive;
  auto it = poses.find(id);
  if (it == poses.end()) throw UnknownNode("state has no pose for " + id.str());
  return it->second;
}

bool StateVector::contains(const NodeId& id) const {
  return id.is_active() ? active.contains(id) : passive.contains(id);
}

VariableLayout VariableLayout::build(const StateVector& state) {
  VariableLayout layout;
  for (const auto& [id, pose] : state.active) {
    if (id == state.anchor) continue;
    layout.column[id] = layout.dims;
    layout.dims += 6;
  }
  for (const auto& [id, pose] : state.passive) {
    layout.column[id] = layout.dims;
    layout.dims += 6;
  }
  return layout;
}

std::optional<int> VariableLayout::offset(const NodeId& id) const {
  auto it = column.find(id);
  if (it == column.end()) return std::nullopt;
  return it->second;
}

Twist residual(const Pose& measurement, const Pose& sensor, const Pose& target) {
  return se3::log(measurement.inverse() * sensor.inverse() * target);
}

ResidualJacobians residual_jacobians(const Pose& measurement, const Pose& sensor, const Pose& target) {
  const Twist r = residual(measurement, sensor, target);
  const Matrix6d jr_inv = se3::right_jacobian_inverse(r);
  return {-jr_inv * se3::adjoint(target.inverse() * sensor), jr_inv};
}

double cost(const GraphSnapshot& snap, const StateVector& state) {
  double total = 0.0;
  for (const auto& [key, e] : snap.edges) {
    if (!e.usable() || !state.contains(e.sensor) || !state.contains(e.target)) continue;
    const Vector6d r = residual(e.pose, state.pose(e.sensor), state.pose(e.target)).vector();
    total += r.dot(e.info * r);
  }
  return total;
}

Linearization jacobian(const GraphSnapshot& snap, const StateVector& state) {
  Linearization lin;
  lin.layout = VariableLayout::build(state);
  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<Vector6d> residuals;
  for (const auto& [key, e] : snap.edges) {
    if (!e.usable() || !state.contains(e.sensor) || !state.contains(e.target)) continue;
    const Pose& A = state.pose(e.sensor);
    const Pose& P = state.pose(e.target);
    const int row = static_cast<int>(lin.rows.size()) * 6;
    residuals.push_back(residual(e.pose, A, P).vector());
    const ResidualJacobians jac = residual_jacobians(e.pose, A, P);
    auto emit = [&](const Matrix6d& block, int col) {
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) triplets.emplace_back(row + r, col + c, block(r, c));
    };
    if (auto ca = lin.layout.offset(e.sensor)) emit(jac.d_sensor, *ca);
    if (auto cp = lin.layout.offset(e.target)) emit(jac.d_target, *cp);
    lin.rows.push_back(key);
  }
  const auto n_rows = static_cast<Eigen::Index>(lin.rows.size() * 6);
  lin.r0.resize(n_rows);
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    lin.r0.segment<6>(static_cast<Eigen::Index>(i * 6)) = residuals[i];
  }
  lin.J.resize(n_rows, lin.layout.dims);
  lin.J.setFromTriplets(triplets.begin(), triplets.end());
  return lin;
}

std::set<NodeId> reachable(const GraphSnapshot& snap, const NodeId& anchor) {
  std::set<NodeId> seen{anchor};
  std::deque<NodeId> queue{anchor};
  while (!queue.empty()) {
    const NodeId node = queue.front();
    queue.pop_front();
    for (const InterEdge* e : snap.edges_of(node)) {
      if (!e->usable()) continue;
      const NodeId& other = node.is_active() ? e->target : e->sensor;
      if (seen.insert(other).second) queue.push_back(other);
    }
  }
  return seen;
}

bool anchor_eligible(const GraphSnapshot& snap, const NodeId& id) {
  if (!id.is_active() || !snap.active.contains(id)) return false;
  for (const InterEdge* e : snap.edges_of(id)) {
    if (e->usable()) return true;
  }
  return false;
}

std::optional<NodeId> select_anchor(const GraphSnapshot& snap, const std::optional<NodeId>& previous) {
  if (previous && anchor_eligible(snap, *previous)) return previous;
  for (const NodeId& id : snap.active) {
    if (anchor_eligible(snap, id)) return id;
  }
  return std::nullopt;
}

StateVector chain_initialisation(const GraphSnapshot& snap, const NodeId& anchor) {
  StateVector state;
  state.anchor = anchor;
  state.active[anchor] = Pose::identity();
  std::deque<NodeId> queue{anchor};
  while (!queue.empty()) {
    const NodeId node = queue.front();
    queue.pop_front();
    const Pose here = state.pose(node);
    for (const InterEdge* e : snap.edges_of(node)) {
      if (!e->usable()) continue;
      if (node.is_active()) {
        if (state.passive.contains(e->target)) continue;
        state.passive[e->target] = here * e->pose;
        queue.push_back(e->target);
      } else {
        if (state.active.contains(e->sensor)) continue;
        state.active[e->sensor] = here * e->pose.inverse();
        queue.push_back(e->sensor);
      }
    }
  }
  return state;
}

SolveReport solve(const GraphSnapshot& snap, const StateVector& init, const SolveOptions& opts) {
  const NodeId& anchor = init.anchor;
  if (!anchor_eligible(snap, anchor)) {
    throw IneligibleAnchor("anchor " + anchor.str() + " has no usable edge");
  }

  SolveReport report;
  const std::set<NodeId> reach = reachable(snap, anchor);
  for (const auto* nodes : {&snap.active, &snap.passive}) {
    for (const NodeId& id : *nodes) {
      if (!reach.contains(id)) report.excluded.push_back(id);
    }
  }

  StateVector state = chain_initialisation(snap, anchor);
  for (auto* poses : {&state.active, &state.passive}) {
    for (auto& [id, pose] : *poses) {
      if (init.contains(id)) pose = init.pose(id);
    }
  }
  state.active[anchor] = Pose::identity();
  const VariableLayout layout = VariableLayout::build(state);

  double c = cost(snap, state);
  report.cost_trace.push_back(c);

  while (true) {
    if (report.iterations >= opts.max_iter) {
      report.termination = "max_iter";
      break;
    }
    if (c <= opts.abs_cost_tol) {
      report.converged = true;
      report.termination = "cost_floor";
      break;
    }
    const NormalEquations ne = build_normal_equations(snap, state, layout);

    bool factorised = false;
    bool accepted = false;
    double lambda_used = 0.0;
    StateVector candidate;
    double c_new = 0.0;
    Eigen::VectorXd delta;
    for (double lambda : kLambdas) {
      Eigen::MatrixXd H = ne.H;
      if (lambda > 0.0) H.diagonal() += lambda * ne.H.diagonal();
      Eigen::LLT<Eigen::MatrixXd> llt(H);
      if (llt.info() != Eigen::Success) continue;
      delta = llt.solve(-ne.g);
      if (!delta.allFinite()) continue;
      factorised = true;
      candidate = retract(state, delta, layout);
      c_new = safe_cost(snap, candidate);
      // Near the minimum the cost changes less than its own rounding error
      // (large weights amplify residual round-off), so an undamped step that
      // leaves the cost unchanged to that precision is still taken.
      if (c_new <= c || (lambda == 0.0 && c_new <= c * (1.0 + kCostRoundoff))) {
        accepted = true;
        lambda_used = lambda;
        break;
      }
    }
    if (!factorised) {
      throw SingularNormalEquations("normal equations singular even with lambda = 1e2");
    }
    if (!accepted) {
      // No damped step lowers the cost: we sit at a minimum to machine precision.
      report.converged = true;
      report.termination = "no_decrease";
      break;
    }

    state = std::move(candidate);
    ++report.iterations;
    report.cost_trace.push_back(c_new);
    if (lambda_used > 0.0) {
      ++report.damped_steps;
      report.max_lambda = std::max(report.max_lambda, lambda_used);
    }
    const double decrease = c - c_new;
    c = c_new;
    if (decrease <= opts.cost_tol * report.cost_trace[report.cost_trace.size() - 2]) {
      report.converged = true;
      report.termination = "cost_tol";
      break;
    }
    if (delta.norm() < opts.step_tol) {
      report.converged = true;
      report.termination = "step_tol";
      break;
    }
  }

  if (layout.dims > 0) {
    const NormalEquations ne = build_normal_equations(snap, state, layout);
    const Eigen::MatrixXd cov = invert_hessian(ne.H);
    for (const auto& [id, pose] : state.passive) {
      const int off = *layout.offset(id);
      report.uncertainties[id] = cov.block<6, 6>(off, off).diagonal().cwiseMax(0.0);
    }
  }
  report.state = std::move(state);
  return report;
}

Vector6d marginal_uncertainty(const SolveReport& report, const NodeId& id) {
  auto it = report.uncertainties.find(id);
  if (it == report.uncertainties.end()) throw UnknownNode("no uncertainty for " + id.str());
  return it->second;
}

}  // namespace scenefuse::pgo
