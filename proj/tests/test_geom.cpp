#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "svem/geometry.hpp"

using namespace svem;

namespace {
Pose2 random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-10.0, 10.0), a(-8.0, 8.0);
  return {t(rng), t(rng), a(rng)};
}

void check_close(const Pose2& a, const Pose2& b, double tol) {
  CHECK(std::abs(a.x - b.x) < tol);
  CHECK(std::abs(a.y - b.y) < tol);
  CHECK(std::abs(wrap_angle(a.theta - b.theta)) < tol);
}
}  // namespace

TEST_CASE("angle wrapping maps into (-pi, pi]") {
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(0.1 + 4.0 * M_PI) == doctest::Approx(0.1));
  CHECK(wrap_angle(-0.1 - 6.0 * M_PI) == doctest::Approx(-0.1));
  for (double a = -20.0; a < 20.0; a += 0.037) {
    const double w = wrap_angle(a);
    CHECK(w > -M_PI);
    CHECK(w <= M_PI);
    CHECK(std::abs(std::sin(w - a)) < 1e-12);
  }
}

TEST_CASE("compose applies the right-hand transform first") {
  // 90-degree turn then unit step along the rotated x-axis.
  const Pose2 a(1.0, 0.0, M_PI / 2.0);
  const Pose2 b(1.0, 0.0, 0.0);
  const Pose2 c = compose(a, b);
  CHECK(c.x == doctest::Approx(1.0));
  CHECK(c.y == doctest::Approx(1.0));
  CHECK(c.theta == doctest::Approx(M_PI / 2.0));
  check_close(compose(Pose2(), a), a, 1e-15);
}

TEST_CASE("inverse of pure translation and pure rotation") {
  check_close(inverse(Pose2()), Pose2(), 1e-15);
  check_close(inverse(Pose2(1, 0, 0)), Pose2(-1, 0, 0), 1e-15);
  check_close(inverse(Pose2(0, 0, M_PI / 2)), Pose2(0, 0, -M_PI / 2), 1e-15);
}

TEST_CASE("apply transforms a point exactly") {
  CHECK((apply(Pose2(), Point2(3, 4)) - Point2(3, 4)).norm() < 1e-15);
  CHECK((apply(Pose2(0, 0, M_PI), Point2(1, 0)) - Point2(-1, 0)).norm() < 1e-12);
  CHECK((apply(Pose2(2, 0, M_PI / 2), Point2(1, 0)) - Point2(2, 1)).norm() < 1e-12);
}

TEST_CASE("apply distributes over composition") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> t(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 a = random_pose(rng), b = random_pose(rng);
    const Point2 p(t(rng), t(rng));
    CHECK((apply(compose(a, b), p) - apply(a, apply(b, p))).norm() < 1e-10);
  }
}

TEST_CASE("inverse undoes compose on random poses") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 p = random_pose(rng);
    check_close(compose(p, inverse(p)), Pose2(), 1e-12);
    check_close(compose(inverse(p), p), Pose2(), 1e-12);
  }
}

TEST_CASE("compose is associative on random triples") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    check_close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9);
  }
}

TEST_CASE("between recovers the relative pose") {
  const Pose2 t(4.0, -2.0, 1.0);
  check_close(between(t, t), Pose2(), 1e-15);
  check_close(between(Pose2(), t), t, 1e-15);
  check_close(between(Pose2(1, 0, 0), Pose2(1, 1, 0)), Pose2(0, 1, 0), 1e-15);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 a = random_pose(rng), b = random_pose(rng);
    check_close(compose(a, between(a, b)), b, 1e-9);
  }
}

TEST_CASE("point round trip through a pose and its inverse") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> t(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 p = random_pose(rng);
    const Point2 q(t(rng), t(rng));
    CHECK((apply(inverse(p), apply(p, q)) - q).norm() < 1e-10);
  }
}

TEST_CASE("retract adds in coordinates and wraps the angle") {
  const Pose2 p(0.5, -0.5, 3.0);
  const Pose2 r = retract(p, Eigen::Vector3d(0.1, 0.2, 0.3));
  CHECK(r.x == doctest::Approx(0.6));
  CHECK(r.y == doctest::Approx(-0.3));
  CHECK(r.theta == doctest::Approx(wrap_angle(3.3)));
  check_close(retract(p, Eigen::Vector3d::Zero()), p, 1e-15);
  check_close(retract(Pose2(), Eigen::Vector3d(1, 2, 0.3)), Pose2(1, 2, 0.3), 1e-15);
  const Pose2 wrapped = retract(Pose2(0, 0, M_PI), Eigen::Vector3d(0, 0, M_PI));
  CHECK(wrapped.theta > -M_PI);
  CHECK(wrapped.theta <= M_PI);
}

TEST_CASE("rotation_deriv is the angle derivative of the rotation matrix") {
  const double h = 1e-7;
  for (double th = -3.0; th < 3.0; th += 0.17) {
    const Eigen::Matrix2d num =
        (Pose2(0, 0, th + h).rotation() - Pose2(0, 0, th - h).rotation()) / (2.0 * h);
    CHECK((num - rotation_deriv(th)).norm() < 1e-6);
  }
}

TEST_CASE("all outputs stay finite on random inputs") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    const Pose2 c = compose(random_pose(rng), inverse(random_pose(rng)));
    CHECK(std::isfinite(c.x));
    CHECK(std::isfinite(c.y));
    CHECK(std::isfinite(c.theta));
  }
}
