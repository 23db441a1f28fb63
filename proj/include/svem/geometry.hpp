#pragma once

#include <Eigen/Core>
#include <cmath>

namespace svem {

using Point2 = Eigen::Vector2d;

// Normalize an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

// Planar rigid transform. Convention: T^{AB} maps coordinates of frame B
// into frame A, so compose(a, b) applies b first, then a.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // stored normalized to (-pi, pi]

  Pose2() = default;
  Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  Point2 translation() const { return {x, y}; }

  Eigen::Matrix2d rotation() const {
    const double c = std::cos(theta), s = std::sin(theta);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }
};

// d/dtheta of the rotation matrix at theta.
inline Eigen::Matrix2d rotation_deriv(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d r;
  r << -s, -c, c, -s;
  return r;
}

inline Pose2 compose(const Pose2& a, const Pose2& b) {
  const Point2 t = a.translation() + a.rotation() * b.translation();
  return {t.x(), t.y(), a.theta + b.theta};
}

inline Pose2 inverse(const Pose2& a) {
  const Point2 t = -(a.rotation().transpose() * a.translation());
  return {t.x(), t.y(), -a.theta};
}

inline Point2 apply(const Pose2& a, const Point2& p) {
  return a.rotation() * p + a.translation();
}

// Relative pose from a to b: compose(a, between(a, b)) == b.
inline Pose2 between(const Pose2& a, const Pose2& b) { return compose(inverse(a), b); }

// Additive retraction on (x, y, theta) with angle wrap.
inline Pose2 retract(const Pose2& a, const Eigen::Vector3d& delta) {
  return {a.x + delta.x(), a.y + delta.y(), a.theta + delta.z()};
}

}  // namespace svem
