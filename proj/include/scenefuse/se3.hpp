#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scenefuse {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Element of se(3), ordered [rho; phi] = [translation; rotation].
/// Every 6x6 matrix in the library (information, Jacobians, adjoints)
/// uses this ordering.
struct Twist {
  Eigen::Vector3d rho = Eigen::Vector3d::Zero();
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();

  Twist() = default;
  Twist(const Eigen::Vector3d& rho_, const Eigen::Vector3d& phi_) : rho(rho_), phi(phi_) {}

  static Twist from_vector(const Vector6d& v) { return {v.head<3>(), v.tail<3>()}; }
  Vector6d vector() const {
    Vector6d v;
    v << rho, phi;
    return v;
  }
  double norm() const { return vector().norm(); }
};

/// 6x6 inverse-covariance weight, [rho; phi] ordering.
using InfoMatrix = Matrix6d;

InfoMatrix info_from_diagonal(const Vector6d& diag);

/// True if `m` is symmetric within 1e-12 and has no eigenvalue below -1e-12.
bool is_valid_info(const InfoMatrix& m);

/// Rigid transform. The quaternion is kept unit-norm and canonical (w >= 0).
class Pose {
 public:
  Pose() = default;
  Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation);
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static Pose identity() { return {}; }
  static Pose from_translation(double x, double y, double z);
  /// [tx, ty, tz, qw, qx, qy, qz]
  static Pose from_array(std::span<const double, 7> a);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Matrix3d rotation_matrix() const { return rotation_.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const;

  /// Rotation angle in [0, pi].
  double angle() const;

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& point) const;

  std::array<double, 7> to_array() const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

using PoseSequence = std::vector<Pose>;

namespace se3 {

/// Angle below which exp/log/Jacobians switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;
/// log() refuses rotations closer than this to pi.
inline constexpr double kNearPiMargin = 1e-6;

Eigen::Matrix3d hat(const Eigen::Vector3d& v);

Pose exp(const Twist& t);

/// Principal-branch logarithm. Throws AngleNearPi when the rotation angle is
/// within kNearPiMargin of pi.
Twist log(const Pose& p);

/// p1^-1 * p2: the pose of p2 expressed in the frame of p1.
Pose relative(const Pose& p1, const Pose& p2);

/// Adjoint of p acting on [rho; phi]: p * exp(xi) * p^-1 = exp(Ad(p) xi).
Matrix6d adjoint(const Pose& p);

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi);
Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi);

Matrix6d left_jacobian(const Twist& xi);
Matrix6d left_jacobian_inverse(const Twist& xi);
/// d log(exp(xi) exp(d)) / d(d) at d = 0.
Matrix6d right_jacobian_inverse(const Twist& xi);

/// Rigid transform S (no scale) minimising sum |gt_i - S est_i|^2 over the
/// translation components. Requires equal lengths >= 3 and point sets of
/// rank >= 2 after centring; throws DegenerateGeometry otherwise.
Pose umeyama_align(const PoseSequence& estimated, const PoseSequence& ground_truth);

}  // namespace se3
}  // namespace scenefuse
