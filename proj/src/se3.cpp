#include "scenefuse/se3.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "scenefuse/errors.hpp"

namespace scenefuse {
namespace {

// Jacobian coefficients switch to their Taylor series below this angle. The
// closed forms lose digits to cancellation well before kSmallAngle.
constexpr double kJacobianSeries = 1e-3;

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

// sin(theta/2)^2 * 2 == 1 - cos(theta) without the cancellation.
double one_minus_cos(double theta) {
  const double s = std::sin(0.5 * theta);
  return 2.0 * s * s;
}

}  // namespace

InfoMatrix info_from_diagonal(const Vector6d& diag) {
  return diag.asDiagonal();
}

bool is_valid_info(const InfoMatrix& m) {
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-12;
}

Pose::Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation)
    : rotation_(canonical(rotation)), translation_(translation) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(canonical(Eigen::Quaterniond(rotation))), translation_(translation) {}

Pose Pose::from_translation(double x, double y, double z) {
  return {Eigen::Quaterniond::Identity(), Eigen::Vector3d(x, y, z)};
}

Pose Pose::from_array(std::span<const double, 7> a) {
  return {Eigen::Quaterniond(a[3], a[4], a[5], a[6]), Eigen::Vector3d(a[0], a[1], a[2])};
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double Pose::angle() const {
  return 2.0 * std::atan2(rotation_.vec().norm(), std::abs(rotation_.w()));
}

Pose Pose::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return {inv, -(inv * translation_)};
}

Pose Pose::operator*(const Pose& rhs) const {
  return {rotation_ * rhs.rotation_, translation_ + rotation_ * rhs.translation_};
}

Eigen::Vector3d Pose::operator*(const Eigen::Vector3d& point) const {
  return rotation_ * point + translation_;
}

std::array<double, 7> Pose::to_array() const {
  return {translation_.x(), translation_.y(), translation_.z(),
          rotation_.w(),    rotation_.x(),    rotation_.y(), rotation_.z()};
}

namespace se3 {

Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Pose exp(const Twist& t) {
  const double theta = t.phi.norm();
  const Eigen::Matrix3d K = hat(t.phi);
  Eigen::Quaterniond q;
  Eigen::Matrix3d V;
  if (theta < kSmallAngle) {
    const double theta2 = theta * theta;
    q.w() = 1.0 - theta2 / 8.0;
    q.vec() = 0.5 * (1.0 - theta2 / 24.0) * t.phi;
    V = Eigen::Matrix3d::Identity() + 0.5 * K + K * K / 6.0;
  } else {
    q.w() = std::cos(0.5 * theta);
    q.vec() = (std::sin(0.5 * theta) / theta) * t.phi;
    const double theta2 = theta * theta;
    V = Eigen::Matrix3d::Identity() + (one_minus_cos(theta) / theta2) * K +
        ((theta - std::sin(theta)) / (theta2 * theta)) * K * K;
  }
  return {q, V * t.rho};
}

Twist log(const Pose& p) {
  const Eigen::Quaterniond& q = p.rotation();
  const double n = q.vec().norm();
  const double w = q.w();
  const double theta = 2.0 * std::atan2(n, w);
  if (theta > std::numbers::pi - kNearPiMargin) {
    throw AngleNearPi("log: rotation angle " + std::to_string(theta) + " rad is too close to pi");
  }
  Eigen::Vector3d phi;
  Eigen::Matrix3d V_inv;
  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  if (theta < kSmallAngle) {
    phi = (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * q.vec();
    const Eigen::Matrix3d K = hat(phi);
    V_inv = I - 0.5 * K + K * K / 12.0;
  } else {
    phi = (theta / n) * q.vec();
    const Eigen::Matrix3d K = hat(phi);
    const double half = 0.5 * theta;
    const double c = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
    V_inv = I - 0.5 * K + c * K * K;
  }
  return {V_inv * p.translation(), phi};
}

Pose relative(const Pose& p1, const Pose& p2) {
  return p1.inverse() * p2;
}

Matrix6d adjoint(const Pose& p) {
  const Eigen::Matrix3d R = p.rotation_matrix();
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = R;
  ad.topRightCorner<3, 3>() = hat(p.translation()) * R;
  ad.bottomRightCorner<3, 3>() = R;
  return ad;
}

Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const double theta2 = theta * theta;
  const Eigen::Matrix3d K = hat(phi);
  double a, b;
  if (theta < kJacobianSeries) {
    a = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    b = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    a = one_minus_cos(theta) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix3d::Identity() + a * K + b * K * K;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const double theta2 = theta * theta;
  const Eigen::Matrix3d K = hat(phi);
  double c;
  if (theta < kJacobianSeries) {
    c = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    c = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  return Eigen::Matrix3d::Identity() - 0.5 * K + c * K * K;
}

namespace {

// Upper-right block of the SE(3) left Jacobian.
Eigen::Matrix3d q_block(const Eigen::Vector3d& rho, const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const double theta2 = theta * theta;
  double m2, m3, m4;
  if (theta < kJacobianSeries) {
    m2 = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
    m3 = 1.0 / 24.0 - theta2 / 720.0 + theta2 * theta2 / 40320.0;
    m4 = 1.0 / 120.0 - theta2 / 2520.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double theta4 = theta2 * theta2;
    m2 = (theta - s) / (theta2 * theta);
    m3 = (0.5 * theta2 + c - 1.0) / theta4;
    m4 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta4 * theta);
  }
  const Eigen::Matrix3d R = hat(rho);
  const Eigen::Matrix3d P = hat(phi);
  const Eigen::Matrix3d PR = P * R;
  const Eigen::Matrix3d RP = R * P;
  const Eigen::Matrix3d PRP = PR * P;
  return 0.5 * R + m2 * (PR + RP + PRP) + m3 * (P * PR + RP * P - 3.0 * PRP) +
         m4 * (PRP * P + P * PRP);
}

}  // namespace

Matrix6d left_jacobian(const Twist& xi) {
  const Eigen::Matrix3d J = so3_left_jacobian(xi.phi);
  Matrix6d out = Matrix6d::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomRightCorner<3, 3>() = J;
  out.topRightCorner<3, 3>() = q_block(xi.rho, xi.phi);
  return out;
}

Matrix6d left_jacobian_inverse(const Twist& xi) {
  const Eigen::Matrix3d J_inv = so3_left_jacobian_inverse(xi.phi);
  Matrix6d out = Matrix6d::Zero();
  out.topLeftCorner<3, 3>() = J_inv;
  out.bottomRightCorner<3, 3>() = J_inv;
  out.topRightCorner<3, 3>() = -J_inv * q_block(xi.rho, xi.phi) * J_inv;
  return out;
}

Matrix6d right_jacobian_inverse(const Twist& xi) {
  return left_jacobian_inverse(Twist(-xi.rho, -xi.phi));
}

Pose umeyama_align(const PoseSequence& estimated, const PoseSequence& ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw DegenerateGeometry("umeyama_align: sequences differ in length");
  }
  const auto n = static_cast<Eigen::Index>(estimated.size());
  if (n < 3) throw DegenerateGeometry("umeyama_align: need at least 3 samples");

  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = estimated[static_cast<std::size_t>(i)].translation();
    dst.col(i) = ground_truth[static_cast<std::size_t>(i)].translation();
  }

  auto rank = [](const Eigen::Matrix3Xd& pts) {
    const Eigen::Matrix3Xd centred = pts.colwise() - pts.rowwise().mean();
    Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centred);
    const auto& s = svd.singularValues();
    const double tol = std::max(1e-12, 1e-9 * s(0));
    return (s.array() > tol).count();
  };
  if (rank(src) < 2 || rank(dst) < 2) {
    throw DegenerateGeometry("umeyama_align: point sets are collinear or coincident");
  }

  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  return {Eigen::Matrix3d(T.topLeftCorner<3, 3>()), Eigen::Vector3d(T.topRightCorner<3, 1>())};
}

}  // namespace se3
}  // namespace scenefuse
