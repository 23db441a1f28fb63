#pragma once

#include <random>
#include <string>
#include <vector>

#include "svem/types.hpp"

namespace svem {

struct ObjectSpec {
  int id = 0;
  Point2 center{0.0, 0.0};
  double half_x = 0.5;
  double half_y = 0.3;
  double heading = 0.0;
  int class_label = 0;
};

// A rigid move applied to one object just before the given frame is sensed.
// The delta acts in the object frame (right-composition), so a pure
// translation shifts the object and a rotation spins it in place.
struct MoveSpec {
  int frame = 0;
  int object_id = 0;
  Pose2 delta;
};

struct NoiseSpec {
  double meas_sigma = 0.02;
  double odom_sigma_xy = 0.01;
  double odom_sigma_theta = 0.005;
  double init_sigma_xy = 0.2;
  double init_sigma_theta = 0.1;
};

struct ScenarioConfig {
  std::string name = "custom";
  std::vector<ObjectSpec> objects;
  std::vector<MoveSpec> moves;
  std::vector<Pose2> robot_path;  // ground-truth placements T^{WC}
  FovSpec fov;
  NoiseSpec noise;
  std::uint64_t seed = 1;
};

// Immutable scene: object placements materialized per frame.
struct Scene {
  ScenarioConfig cfg;
  std::vector<std::vector<Pose2>> object_placements;  // [frame][object index]

  int frames() const { return static_cast<int>(cfg.robot_path.size()); }
  std::vector<Point2> object_corners_world(int frame, int obj_index) const;
  Point2 object_centroid_world(int frame, int obj_index) const;
  // True iff the object's pose at the last frame differs from its initial pose.
  bool object_moved(int obj_index) const;
  int first_move_frame(int obj_index) const;  // -1 when never moved
};

// Validates the config and materializes per-frame object poses.
// Throws std::invalid_argument listing every violation.
Scene generate_scene(const ScenarioConfig& cfg);

FrameData simulate_frame(const Scene& scene, int frame_id, std::mt19937_64& rng);

// Presets: baseline_6m4s, coherent_shift, all_static, stress_dense.
ScenarioConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(const std::string& text);
ScenarioConfig load_config(const std::string& path);

}  // namespace svem
