#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "scenefuse/scene_graph.hpp"

namespace scenefuse::pgo {

/// Current estimate of every node pose, in the frame of `anchor` (whose pose
/// is identity).
struct StateVector {
  NodeId anchor;
  std::map<NodeId, Pose> active;
  std::map<NodeId, Pose> passive;

  const Pose& pose(const NodeId& id) const;
  bool contains(const NodeId& id) const;
};

struct SolveOptions {
  int max_iter = 50;
  double cost_tol = 1e-10;  // relative decrease
  double step_tol = 1e-12;
  /// Stop once the cost itself is this small (noise floor of double).
  double abs_cost_tol = 1e-20;
};

struct SolveReport {
  StateVector state;
  /// Initial cost followed by the cost after every accepted step.
  std::vector<double> cost_trace;
  int iterations = 0;
  bool converged = false;
  std::string termination;
  /// Steps that needed Levenberg damping, and the largest lambda used.
  int damped_steps = 0;
  double max_lambda = 0.0;
  /// Diagonal of the passive node's block of the inverse weighted Hessian.
  std::map<NodeId, Vector6d> uncertainties;
  /// Nodes not connected to the anchor through usable edges.
  std::vector<NodeId> excluded;
};

/// Column layout of the stacked increment: one 6-block per non-anchor
/// active node, then one per passive node, each group sorted by name.
struct VariableLayout {
  std::map<NodeId, int> column;
  int dims = 0;

  static VariableLayout build(const StateVector& state);
  std::optional<int> offset(const NodeId& id) const;
};

struct Linearization {
  Eigen::VectorXd r0;
  Eigen::SparseMatrix<double> J;
  /// Edge owning each 6-row block of r0/J.
  std::vector<EdgeKey> rows;
  VariableLayout layout;
};

/// log(T^-1 A^-1 P). Throws AngleNearPi from log.
Twist residual(const Pose& measurement, const Pose& sensor, const Pose& target);

/// Analytic derivatives of residual() under right perturbations
/// A <- A exp(dA), P <- P exp(dP).
struct ResidualJacobians {
  Matrix6d d_sensor;
  Matrix6d d_target;
};
ResidualJacobians residual_jacobians(const Pose& measurement, const Pose& sensor, const Pose& target);

/// Sum of r^T Omega r over usable edges. Edges whose endpoints are missing
/// from `state` are skipped.
double cost(const GraphSnapshot& snap, const StateVector& state);

Linearization jacobian(const GraphSnapshot& snap, const StateVector& state);

/// Nodes reachable from `anchor` through usable edges, anchor included.
std::set<NodeId> reachable(const GraphSnapshot& snap, const NodeId& anchor);

/// True if `id` is an active node with at least one usable edge.
bool anchor_eligible(const GraphSnapshot& snap, const NodeId& id);

/// `previous` if still eligible, otherwise the smallest eligible sensor.
std::optional<NodeId> select_anchor(const GraphSnapshot& snap, const std::optional<NodeId>& previous);

/// Initial estimate by composing measurements breadth-first from the anchor.
/// Nodes unreachable from the anchor are left out.
StateVector chain_initialisation(const GraphSnapshot& snap, const NodeId& anchor);

/// Weighted Gauss-Newton with Levenberg fallback. `init.anchor` is the gauge
/// anchor; nodes reachable from it but missing from `init` are filled by
/// chain_initialisation. Throws IneligibleAnchor or SingularNormalEquations.
SolveReport solve(const GraphSnapshot& snap, const StateVector& init, const SolveOptions& opts = {});

/// Throws UnknownNode if `id` has no entry (e.g. it was excluded).
Vector6d marginal_uncertainty(const SolveReport& report, const NodeId& id);

}  // namespace scenefuse::pgo
