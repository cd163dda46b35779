#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles/fixtures.hpp"
#include "oracles/oracles.hpp"
#include "scenefuse/errors.hpp"
#include "scenefuse/se3.hpp"

using namespace scenefuse;
using fixture::Rng;

namespace {

double gap(const Pose& a, const Pose& b) {
  const Pose d = a.inverse() * b;
  return std::max(d.translation().norm(), d.angle());
}

Twist twist(double x, double y, double z, double rx, double ry, double rz) {
  return {Eigen::Vector3d(x, y, z), Eigen::Vector3d(rx, ry, rz)};
}

}  // namespace

TEST_SUITE("se3") {
  TEST_CASE("exp of the zero twist is the identity") {
    const Pose p = se3::exp(Twist{});
    CHECK(p.translation().norm() == 0.0);
    CHECK(p.angle() == 0.0);
  }

  TEST_CASE("exp of a pure rotation matches Rodrigues") {
    const Pose p = se3::exp(twist(0, 0, 0, 0, 0, std::numbers::pi / 2));
    const Eigen::Matrix3d expect = Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    CHECK((p.rotation_matrix() - expect).norm() < 1e-12);
    CHECK(p.translation().norm() < 1e-15);
  }

  TEST_CASE("exp of a pure translation") {
    const Pose p = se3::exp(twist(1, 0, 0, 0, 0, 0));
    CHECK((p.translation() - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);
    CHECK(p.angle() == 0.0);
  }

  TEST_CASE("exp translation follows the V matrix") {
    // closed form: V = I + (1-cos)/th^2 K + (th-sin)/th^3 K^2
    const Eigen::Vector3d rho(0.3, -0.2, 0.7), phi(0.4, 0.9, -0.5);
    const double th = phi.norm();
    const Eigen::Matrix3d k = se3::hat(phi);
    const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() + (1 - std::cos(th)) / (th * th) * k +
                              (th - std::sin(th)) / (th * th * th) * k * k;
    CHECK((se3::exp({rho, phi}).translation() - v * rho).norm() < 1e-14);
  }

  TEST_CASE("small-angle branch is continuous") {
    for (double a : {1e-7, 1e-8, 1e-9, 1e-12}) {
      const Eigen::Vector3d phi = Eigen::Vector3d(1, 2, 3).normalized() * a;
      const Pose p = se3::exp({Eigen::Vector3d(1, 1, 1), phi});
      const Eigen::Matrix3d expect = Eigen::AngleAxisd(a, phi.normalized()).toRotationMatrix();
      CHECK((p.rotation_matrix() - expect).norm() < 1e-15);
      CHECK((se3::log(p).phi - phi).norm() < 1e-15);
    }
  }

  TEST_CASE("log of the identity is zero") {
    CHECK(se3::log(Pose()).norm() == 0.0);
  }

  TEST_CASE("log inverts the rotation example") {
    const Twist t = se3::log(se3::exp(twist(0, 0, 0, 0, 0, std::numbers::pi / 2)));
    CHECK((t.phi - Eigen::Vector3d(0, 0, std::numbers::pi / 2)).norm() < 1e-12);
    CHECK(t.rho.norm() < 1e-12);
  }

  TEST_CASE("random poses survive log then exp") {
    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
      const Pose p = fixture::random_pose(rng, 3.0, std::numbers::pi - 1e-3);
      CHECK(gap(se3::exp(se3::log(p)), p) < 1e-9);
    }
  }

  TEST_CASE("exp then log returns the twist") {
    Rng rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
      Eigen::Vector3d axis(u(rng), u(rng), u(rng));
      const double angle = (u(rng) * 0.5 + 0.5) * (std::numbers::pi - 1e-3);
      const Twist t{Eigen::Vector3d(u(rng), u(rng), u(rng)) * 5.0, axis.normalized() * angle};
      CHECK((se3::log(se3::exp(t)).vector() - t.vector()).norm() < 1e-9);
    }
  }

  TEST_CASE("log refuses rotations next to pi") {
    const Pose p(Eigen::Quaterniond(Eigen::AngleAxisd(std::numbers::pi - 1e-8, Eigen::Vector3d::UnitX())),
                 Eigen::Vector3d::Zero());
    CHECK_THROWS_AS(se3::log(p), AngleNearPi);
    const Pose ok(Eigen::Quaterniond(Eigen::AngleAxisd(std::numbers::pi - 1e-4, Eigen::Vector3d::UnitX())),
                  Eigen::Vector3d::Zero());
    CHECK_NOTHROW(se3::log(ok));
  }

  TEST_CASE("composition is associative and inverse cancels") {
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
      const Pose a = fixture::random_pose(rng), b = fixture::random_pose(rng), c = fixture::random_pose(rng);
      CHECK(gap((a * b) * c, a * (b * c)) < 1e-9);
      const Pose i = a * a.inverse();
      CHECK(i.translation().norm() < 1e-9);
      CHECK(i.angle() < 1e-9);
    }
  }

  TEST_CASE("quaternions stay unit and canonical") {
    Rng rng(4);
    for (int k = 0; k < 200; ++k) {
      Pose p = fixture::random_pose(rng);
      for (int j = 0; j < 50; ++j) p = p * fixture::random_pose(rng);
      CHECK(std::abs(p.rotation().norm() - 1.0) < 1e-9);
      CHECK(p.rotation().w() >= 0.0);
    }
    const Pose neg(Eigen::Quaterniond(-0.5, 0.5, 0.5, 0.5), Eigen::Vector3d::Zero());
    CHECK(neg.rotation().w() == doctest::Approx(0.5));
    const Pose scaled(Eigen::Quaterniond(2.0, 0.0, 0.0, 0.0), Eigen::Vector3d::Zero());
    CHECK(scaled.rotation().norm() == doctest::Approx(1.0));
  }

  TEST_CASE("array round trip") {
    Rng rng(5);
    const Pose p = fixture::random_pose(rng);
    const auto a = p.to_array();
    CHECK(gap(Pose::from_array(std::span<const double, 7>(a)), p) < 1e-15);
  }

  TEST_CASE("relative examples") {
    Rng rng(6);
    const Pose p = fixture::random_pose(rng);
    CHECK(gap(se3::relative(p, p), Pose()) < 1e-12);
    const Pose r = se3::relative(Pose::from_translation(1, 0, 0), Pose::from_translation(3, 0, 0));
    CHECK((r.translation() - Eigen::Vector3d(2, 0, 0)).norm() < 1e-15);
    CHECK(r.angle() == 0.0);
  }

  TEST_CASE("relative ignores the common sensor pose") {
    Rng rng(7);
    for (int k = 0; k < 1000; ++k) {
      const Pose a = fixture::random_pose(rng, 2.0), t1 = fixture::random_pose(rng), t2 = fixture::random_pose(rng);
      CHECK((se3::relative(a * t1, a * t2).matrix() - se3::relative(t1, t2).matrix()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("adjoint moves a twist across a pose") {
    Rng rng(8);
    for (int k = 0; k < 100; ++k) {
      const Pose p = fixture::random_pose(rng);
      const Twist xi = fixture::random_twist(rng, 1.0);
      const Pose lhs = p * se3::exp(xi) * p.inverse();
      const Pose rhs = se3::exp(Twist::from_vector(se3::adjoint(p) * xi.vector()));
      CHECK(gap(lhs, rhs) < 1e-12);
    }
  }

  TEST_CASE("right Jacobian inverse matches finite differences of log") {
    Rng rng(9);
    for (int k = 0; k < 100; ++k) {
      const Twist xi = fixture::random_twist(rng, 2.5);
      const Pose base = se3::exp(xi);
      const auto fd = oracle::central_difference(
          [&](const Vector6d& d) { return Eigen::VectorXd(se3::log(base * se3::exp(Twist::from_vector(d))).vector()); },
          6, 1e-6);
      const Matrix6d an = se3::right_jacobian_inverse(xi);
      CHECK((an - fd).norm() / fd.norm() < 1e-8);
    }
  }

  TEST_CASE("left Jacobian and its inverse are inverses") {
    Rng rng(10);
    for (int k = 0; k < 100; ++k) {
      const Twist xi = fixture::random_twist(rng, 2.5);
      CHECK((se3::left_jacobian(xi) * se3::left_jacobian_inverse(xi) - Matrix6d::Identity()).norm() < 1e-10);
      const Eigen::Vector3d phi = xi.phi;
      CHECK((se3::so3_left_jacobian(phi) * se3::so3_left_jacobian_inverse(phi) - Eigen::Matrix3d::Identity()).norm() <
            1e-10);
    }
  }

  TEST_CASE("info matrix validity") {
    Vector6d d;
    d << 1, 2, 3, 4, 5, 6;
    CHECK(is_valid_info(info_from_diagonal(d)));
    CHECK(is_valid_info(InfoMatrix::Zero()));
    InfoMatrix asym = InfoMatrix::Identity();
    asym(0, 1) = 0.5;
    CHECK_FALSE(is_valid_info(asym));
    InfoMatrix neg = InfoMatrix::Identity();
    neg(2, 2) = -1.0;
    CHECK_FALSE(is_valid_info(neg));
  }
}

TEST_SUITE("se3") {
  TEST_CASE("umeyama of identical trajectories is the identity") {
    Rng rng(11);
    PoseSequence traj;
    for (int k = 0; k < 20; ++k) traj.push_back(fixture::random_pose(rng));
    CHECK(gap(se3::umeyama_align(traj, traj), Pose()) < 1e-9);
  }

  TEST_CASE("umeyama recovers a known rigid transform") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const Pose s0 = fixture::random_pose(rng, 10.0);
      PoseSequence gt, est;
      for (int k = 0; k < 30; ++k) {
        gt.push_back(fixture::random_pose(rng));
        est.push_back(s0.inverse() * gt.back());
      }
      const Pose s = se3::umeyama_align(est, gt);
      CHECK(gap(s, s0) < 1e-9);
      CHECK(gap(s, oracle::horn_align(est, gt)) < 1e-9);
    }
  }

  TEST_CASE("umeyama on three noisy points") {
    Rng rng(13);
    std::normal_distribution<double> n(0.0, 1e-6);
    for (int trial = 0; trial < 200; ++trial) {
      const Pose s0 = fixture::random_pose(rng, 1.0);
      PoseSequence gt, est;
      for (int k = 0; k < 3; ++k) {
        gt.push_back(fixture::random_pose(rng));
        const Pose e = s0.inverse() * gt.back();
        est.push_back(Pose(e.rotation(), e.translation() + Eigen::Vector3d(n(rng), n(rng), n(rng))));
      }
      CHECK(gap(se3::umeyama_align(est, gt), s0) < 1e-4);
    }
  }

  TEST_CASE("umeyama rejects degenerate input") {
    PoseSequence line, two;
    for (int k = 0; k < 5; ++k) line.push_back(Pose::from_translation(k, 2.0 * k, 0));
    CHECK_THROWS_AS(se3::umeyama_align(line, line), DegenerateGeometry);
    two.push_back(Pose::from_translation(0, 0, 0));
    two.push_back(Pose::from_translation(1, 0, 0));
    CHECK_THROWS_AS(se3::umeyama_align(two, two), DegenerateGeometry);
    PoseSequence three = line;
    three.pop_back();
    CHECK_THROWS(se3::umeyama_align(line, three));
  }
}
