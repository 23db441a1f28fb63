#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "svem/sim.hpp"

using namespace svem;

namespace {
ScenarioConfig tiny_scenario() {
  ScenarioConfig cfg;
  cfg.name = "tiny";
  ObjectSpec o;
  o.id = 0;
  o.center = Point2(3.0, 0.0);
  cfg.objects.push_back(o);
  cfg.robot_path = {Pose2(0, 0, 0), Pose2(1, 0, 0), Pose2(2, 0, 0)};
  cfg.noise.meas_sigma = 0.0;
  cfg.noise.odom_sigma_xy = 0.0;
  cfg.noise.odom_sigma_theta = 0.0;
  return cfg;
}
}  // namespace

TEST_CASE("scene poses are constant without moves and step at the move frame") {
  ScenarioConfig cfg = tiny_scenario();
  Scene still = generate_scene(cfg);
  for (int f = 0; f < still.frames(); ++f)
    CHECK((still.object_centroid_world(f, 0) - Point2(3.0, 0.0)).norm() < 1e-12);
  CHECK_FALSE(still.object_moved(0));
  CHECK(still.first_move_frame(0) == -1);

  cfg.moves.push_back({1, 0, Pose2(0.5, 0.0, 0.0)});
  Scene moved = generate_scene(cfg);
  CHECK((moved.object_centroid_world(0, 0) - Point2(3.0, 0.0)).norm() < 1e-12);
  for (int f = 1; f < moved.frames(); ++f)
    CHECK((moved.object_centroid_world(f, 0) - Point2(3.5, 0.0)).norm() < 1e-12);
  CHECK(moved.object_moved(0));
  CHECK(moved.first_move_frame(0) == 1);
}

TEST_CASE("scene validation reports every violation at once") {
  ScenarioConfig cfg = tiny_scenario();
  cfg.objects[0].half_x = -1.0;
  cfg.moves.push_back({99, 5, Pose2()});
  cfg.noise.meas_sigma = -0.5;
  try {
    generate_scene(cfg);
    FAIL("expected validation error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("half") != std::string::npos);
    CHECK(msg.find("move") != std::string::npos);
    CHECK(msg.find("sigma") != std::string::npos);
  }
}

TEST_CASE("zero noise observations are exactly consistent with ground truth") {
  Scene scene = generate_scene(tiny_scenario());
  std::mt19937_64 rng(1);
  for (int f = 0; f < scene.frames(); ++f) {
    const FrameData fd = simulate_frame(scene, f, rng);
    CHECK(fd.frame_id == f);
    REQUIRE(fd.observations.size() == 1);
    const std::vector<Point2> corners = scene.object_corners_world(f, 0);
    const auto& pts = fd.observations[0].points_body;
    REQUIRE(pts.size() == 4);
    for (size_t i = 0; i < pts.size(); ++i)
      CHECK((apply(fd.gt_pose, pts[i]) - corners[i]).norm() < 1e-12);
    if (f > 0) {
      CHECK(fd.has_odometry);
      const Pose2 rel = between(scene.cfg.robot_path[f - 1], scene.cfg.robot_path[f]);
      CHECK(std::abs(fd.odometry_meas.x - rel.x) < 1e-12);
      CHECK(std::abs(fd.odometry_meas.y - rel.y) < 1e-12);
    }
  }
}

TEST_CASE("identical config and seed give identical frame streams") {
  const ScenarioConfig cfg = preset("baseline_6m4s");
  const Scene scene = generate_scene(cfg);
  std::mt19937_64 a(cfg.seed), b(cfg.seed);
  for (int f = 0; f < scene.frames(); ++f) {
    const FrameData fa = simulate_frame(scene, f, a);
    const FrameData fb = simulate_frame(scene, f, b);
    CHECK(fa.odometry_meas.x == fb.odometry_meas.x);
    CHECK(fa.odometry_meas.theta == fb.odometry_meas.theta);
    REQUIRE(fa.observations.size() == fb.observations.size());
    for (size_t i = 0; i < fa.observations.size(); ++i) {
      REQUIRE(fa.observations[i].points_body.size() == fb.observations[i].points_body.size());
      for (size_t j = 0; j < fa.observations[i].points_body.size(); ++j)
        CHECK((fa.observations[i].points_body[j] - fb.observations[i].points_body[j]).norm() ==
              0.0);
    }
  }
}

TEST_CASE("field of view gating is sound") {
  ScenarioConfig cfg = tiny_scenario();
  cfg.fov.max_range = 2.0;  // object at x=3 invisible from the origin
  cfg.fov.half_angle = 1.0;
  Scene scene = generate_scene(cfg);
  std::mt19937_64 rng(3);
  const FrameData f0 = simulate_frame(scene, 0, rng);
  CHECK(f0.observations.empty());

  // Object behind the robot: rotate the robot away at close range.
  cfg.robot_path = {Pose2(2.6, 0.0, M_PI)};
  cfg.fov.max_range = 5.0;
  scene = generate_scene(cfg);
  const FrameData back = simulate_frame(scene, 0, rng);
  CHECK(back.observations.empty());

  // Every emitted pre-noise vertex respects range and bearing limits.
  ScenarioConfig dense = preset("stress_dense");
  dense.noise.meas_sigma = 0.0;
  Scene ds = generate_scene(dense);
  std::mt19937_64 rng2(5);
  for (int f = 0; f < ds.frames(); ++f) {
    const FrameData fd = simulate_frame(ds, f, rng2);
    for (const Observation& o : fd.observations)
      for (const Point2& p : o.points_body) {
        CHECK(p.norm() <= dense.fov.max_range + 1e-9);
        CHECK(std::abs(std::atan2(p.y(), p.x())) <= dense.fov.half_angle + 1e-9);
      }
  }
}

TEST_CASE("measurement noise std matches the configured sigma") {
  ScenarioConfig cfg = tiny_scenario();
  cfg.noise.meas_sigma = 0.02;
  // Repeat one frame many times through a persistent RNG.
  Scene scene = generate_scene(cfg);
  std::mt19937_64 rng(7);
  std::vector<double> devs;
  const std::vector<Point2> corners = scene.object_corners_world(0, 0);
  for (int rep = 0; rep < 1250; ++rep) {
    const FrameData fd = simulate_frame(scene, 0, rng);
    REQUIRE(fd.observations.size() == 1);
    for (size_t i = 0; i < 4; ++i) {
      const Point2 err = apply(fd.gt_pose, fd.observations[0].points_body[i]) - corners[i];
      devs.push_back(err.x());
      devs.push_back(err.y());
    }
  }
  double var = 0.0;
  for (double d : devs) var += d * d;
  const double std_dev = std::sqrt(var / devs.size());  // 10^4 per-axis draws
  CHECK(std_dev > 0.02 * 0.95);
  CHECK(std_dev < 0.02 * 1.05);
}

TEST_CASE("presets match their advertised structure") {
  const auto names = preset_names();
  CHECK(std::set<std::string>(names.begin(), names.end()) ==
        std::set<std::string>{"baseline_6m4s", "coherent_shift", "all_static", "stress_dense"});

  const ScenarioConfig base = preset("baseline_6m4s");
  CHECK(base.objects.size() == 10);
  CHECK(base.moves.size() == 6);
  Scene bs = generate_scene(base);
  int moved = 0;
  for (size_t i = 0; i < base.objects.size(); ++i) moved += bs.object_moved(i);
  CHECK(moved == 6);

  CHECK(preset("all_static").moves.empty());

  const ScenarioConfig coh = preset("coherent_shift");
  REQUIRE(coh.moves.size() == 6);
  for (const MoveSpec& m : coh.moves) {
    CHECK(m.delta.x == coh.moves[0].delta.x);
    CHECK(m.delta.y == coh.moves[0].delta.y);
    CHECK(m.delta.theta == coh.moves[0].delta.theta);
  }

  CHECK(preset("stress_dense").objects.size() == 16);
  CHECK_THROWS_AS(preset("no_such_preset"), std::invalid_argument);
}

TEST_CASE("scenario configs round trip through JSON") {
  const ScenarioConfig cfg = preset("baseline_6m4s");
  const ScenarioConfig back = config_from_json(to_json(cfg));
  CHECK(back.name == cfg.name);
  REQUIRE(back.objects.size() == cfg.objects.size());
  REQUIRE(back.moves.size() == cfg.moves.size());
  REQUIRE(back.robot_path.size() == cfg.robot_path.size());
  CHECK(back.objects[3].center.x() == cfg.objects[3].center.x());
  CHECK(back.moves[2].delta.theta == cfg.moves[2].delta.theta);
  CHECK(back.fov.max_range == cfg.fov.max_range);
  CHECK(back.noise.meas_sigma == cfg.noise.meas_sigma);
  CHECK(back.seed == cfg.seed);

  const std::string path = "/tmp/svem_test_config.json";
  {
    std::ofstream os(path);
    os << to_json(cfg);
  }
  CHECK(load_config(path).objects.size() == cfg.objects.size());
}
