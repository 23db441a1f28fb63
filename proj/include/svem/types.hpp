#pragma once

#include <optional>
#include <vector>

#include "svem/geometry.hpp"

namespace svem {

// One pre-clustered set of measured landmark points in the robot frame.
// Association fields are filled by the pipeline, not the simulator.
struct Observation {
  int frame_id = 0;
  std::vector<Point2> points_body;
  std::optional<int> assoc_object;
  std::vector<int> assoc_landmark_indices;  // per point; -1 marks unmatched
};

struct FovSpec {
  double max_range = 20.0;
  double half_angle = M_PI;  // bearing limit, pi means omnidirectional
};

inline bool in_fov(const Pose2& robot_placement, const Point2& world_point, const FovSpec& fov) {
  const Point2 body = apply(inverse(robot_placement), world_point);
  if (body.norm() > fov.max_range) return false;
  return std::abs(std::atan2(body.y(), body.x())) <= fov.half_angle;
}

// One simulated frame. gt_pose is the robot placement T^{WC} in the world.
struct FrameData {
  int frame_id = 0;
  Pose2 gt_pose;
  Pose2 odometry_meas;  // relative motion in the body frame, identity at frame 0
  bool has_odometry = false;
  std::vector<Observation> observations;
};

}  // namespace svem
