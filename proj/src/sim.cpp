#include "svem/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace svem {

std::vector<Point2> rect_corners(const ObjectSpec& o, const Pose2& placement) {
  const double hx = o.half_x, hy = o.half_y;
  const Point2 local[4] = {{hx, hy}, {-hx, hy}, {-hx, -hy}, {hx, -hy}};
  std::vector<Point2> out;
  out.reserve(4);
  for (const Point2& p : local) out.push_back(apply(placement, p));
  return out;
}

std::vector<Point2> Scene::object_corners_world(int frame, int obj_index) const {
  return rect_corners(cfg.objects[obj_index], object_placements[frame][obj_index]);
}

Point2 Scene::object_centroid_world(int frame, int obj_index) const {
  return object_placements[frame][obj_index].translation();
}

bool Scene::object_moved(int obj_index) const { return first_move_frame(obj_index) >= 0; }

int Scene::first_move_frame(int obj_index) const {
  const int id = cfg.objects[obj_index].id;
  int first = -1;
  for (const MoveSpec& m : cfg.moves) {
    if (m.object_id != id) continue;
    if (first < 0 || m.frame < first) first = m.frame;
  }
  return first;
}

Scene generate_scene(const ScenarioConfig& cfg) {
  std::vector<std::string> problems;
  if (cfg.robot_path.empty()) problems.push_back("robot_path is empty");
  for (const ObjectSpec& o : cfg.objects) {
    if (o.half_x <= 0.0 || o.half_y <= 0.0)
      problems.push_back("object " + std::to_string(o.id) + " has non-positive half extents");
  }
  for (size_t i = 0; i < cfg.objects.size(); ++i)
    for (size_t j = i + 1; j < cfg.objects.size(); ++j)
      if (cfg.objects[i].id == cfg.objects[j].id)
        problems.push_back("duplicate object id " + std::to_string(cfg.objects[i].id));
  for (const MoveSpec& m : cfg.moves) {
    const bool known = std::any_of(cfg.objects.begin(), cfg.objects.end(),
                                   [&](const ObjectSpec& o) { return o.id == m.object_id; });
    if (!known) problems.push_back("move references unknown object " + std::to_string(m.object_id));
    if (m.frame < 0 || m.frame >= static_cast<int>(cfg.robot_path.size()))
      problems.push_back("move at frame " + std::to_string(m.frame) + " is outside the path");
  }
  const NoiseSpec& n = cfg.noise;
  for (double s : {n.meas_sigma, n.odom_sigma_xy, n.odom_sigma_theta, n.init_sigma_xy,
                   n.init_sigma_theta})
    if (s < 0.0) problems.push_back("negative noise sigma");
  if (cfg.fov.max_range <= 0.0) problems.push_back("fov.max_range must be positive");
  if (cfg.fov.half_angle <= 0.0) problems.push_back("fov.half_angle must be positive");
  if (!problems.empty()) {
    std::string msg = "invalid scenario config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw std::invalid_argument(msg);
  }

  Scene scene;
  scene.cfg = cfg;
  std::vector<Pose2> current;
  current.reserve(cfg.objects.size());
  for (const ObjectSpec& o : cfg.objects)
    current.emplace_back(o.center.x(), o.center.y(), o.heading);
  for (int f = 0; f < static_cast<int>(cfg.robot_path.size()); ++f) {
    for (const MoveSpec& m : cfg.moves) {
      if (m.frame != f) continue;
      for (size_t i = 0; i < cfg.objects.size(); ++i)
        if (cfg.objects[i].id == m.object_id) current[i] = compose(current[i], m.delta);
    }
    scene.object_placements.push_back(current);
  }
  return scene;
}

FrameData simulate_frame(const Scene& scene, int frame_id, std::mt19937_64& rng) {
  if (frame_id < 0 || frame_id >= scene.frames())
    throw std::out_of_range("frame_id outside robot path");
  const ScenarioConfig& cfg = scene.cfg;
  std::normal_distribution<double> gauss(0.0, 1.0);

  FrameData frame;
  frame.frame_id = frame_id;
  frame.gt_pose = cfg.robot_path[frame_id];

  if (frame_id > 0) {
    const Pose2 rel = between(cfg.robot_path[frame_id - 1], frame.gt_pose);
    const Pose2 noise(cfg.noise.odom_sigma_xy * gauss(rng), cfg.noise.odom_sigma_xy * gauss(rng),
                      cfg.noise.odom_sigma_theta * gauss(rng));
    frame.odometry_meas = compose(rel, noise);
    frame.has_odometry = true;
  }

  const Pose2 to_body = inverse(frame.gt_pose);
  for (size_t i = 0; i < cfg.objects.size(); ++i) {
    Observation obs;
    obs.frame_id = frame_id;
    for (const Point2& corner : scene.object_corners_world(frame_id, static_cast<int>(i))) {
      if (!in_fov(frame.gt_pose, corner, cfg.fov)) continue;
      Point2 body = apply(to_body, corner);
      body.x() += cfg.noise.meas_sigma * gauss(rng);
      body.y() += cfg.noise.meas_sigma * gauss(rng);
      obs.points_body.push_back(body);
    }
    if (!obs.points_body.empty()) {
      obs.assoc_landmark_indices.assign(obs.points_body.size(), -1);
      frame.observations.push_back(std::move(obs));
    }
  }
  return frame;
}

namespace {

// Ten rectangles on a ring around the arena center, robot looping inside.
// The first six receive moves; spacing and move magnitudes are chosen so a
// moved box stays closest to its own previous centroid.
ScenarioConfig ring_scenario() {
  ScenarioConfig cfg;
  const Point2 center(6.0, 6.0);
  const double ring_r = 4.8;
  for (int k = 0; k < 10; ++k) {
    ObjectSpec o;
    o.id = k;
    const double ang = 2.0 * M_PI * k / 10.0;
    o.center = center + ring_r * Point2(std::cos(ang), std::sin(ang));
    o.heading = wrap_angle(ang + M_PI / 2.0);
    o.class_label = k % 3;
    cfg.objects.push_back(o);
  }
  const int frames = 12;
  const double path_r = 2.2;
  for (int t = 0; t < frames; ++t) {
    const double ang = 2.0 * M_PI * t / frames;
    cfg.robot_path.emplace_back(center.x() + path_r * std::cos(ang),
                                center.y() + path_r * std::sin(ang),
                                wrap_angle(ang + M_PI / 2.0));
  }
  cfg.fov.max_range = 14.0;
  cfg.fov.half_angle = M_PI;
  return cfg;
}

}  // namespace

ScenarioConfig preset(const std::string& name) {
  if (name == "baseline_6m4s") {
    ScenarioConfig cfg = ring_scenario();
    cfg.name = name;
    // Deltas keep every displaced vertex >= 0.45 m from every old vertex of
    // the same box (so no vertex of a moved box masquerades as an unchanged
    // one) while the displaced centroid stays closest to its own old centroid.
    cfg.moves = {
        {1, 0, Pose2(0.5, 1.0, 0.0)},  {1, 1, Pose2(0.5, -1.0, -0.3)},
        {1, 2, Pose2(-0.5, 1.0, 0.2)}, {1, 3, Pose2(-0.5, -1.0, 0.1)},
        {1, 4, Pose2(0.0, 1.2, 0.9)},  {1, 5, Pose2(0.6, -1.15, 0.4)},
    };
    return cfg;
  }
  if (name == "all_static") {
    ScenarioConfig cfg = ring_scenario();
    cfg.name = name;
    return cfg;
  }
  if (name == "coherent_shift") {
    ScenarioConfig cfg = ring_scenario();
    cfg.name = name;
    for (ObjectSpec& o : cfg.objects) o.heading = 0.0;
    const Pose2 shift(1.1, 0.45, 0.0);
    for (int id = 0; id < 6; ++id) cfg.moves.push_back({1, id, shift});
    return cfg;
  }
  if (name == "stress_dense") {
    ScenarioConfig cfg;
    cfg.name = name;
    const Point2 center(6.0, 6.0);
    int id = 0;
    for (double ring_r : {3.4, 5.2}) {
      for (int k = 0; k < 8; ++k) {
        ObjectSpec o;
        o.id = id++;
        const double ang = 2.0 * M_PI * k / 8.0 + (ring_r > 4.0 ? M_PI / 8.0 : 0.0);
        o.center = center + ring_r * Point2(std::cos(ang), std::sin(ang));
        o.heading = wrap_angle(ang);
        o.class_label = id % 4;
        cfg.objects.push_back(o);
      }
    }
    const int frames = 16;
    for (int t = 0; t < frames; ++t) {
      const double ang = 2.0 * M_PI * t / frames;
      cfg.robot_path.emplace_back(center.x() + 1.6 * std::cos(ang),
                                  center.y() + 1.6 * std::sin(ang),
                                  wrap_angle(ang + M_PI / 2.0));
    }
    cfg.moves = {
        {1, 0, Pose2(0.5, 1.0, 0.0)},   {1, 3, Pose2(0.5, -1.0, -0.3)},
        {1, 9, Pose2(-0.5, 1.0, 0.2)},  {5, 5, Pose2(-0.5, -1.0, 0.1)},
        {5, 11, Pose2(0.0, 1.2, 0.9)},  {9, 6, Pose2(0.6, -1.15, 0.4)},
        {9, 13, Pose2(-0.6, 1.1, 0.0)}, {9, 15, Pose2(0.0, -1.1, 0.0)},
    };
    cfg.fov.max_range = 7.0;
    cfg.fov.half_angle = 2.6;
    return cfg;
  }
  throw std::invalid_argument("unknown preset: " + name);
}

std::vector<std::string> preset_names() {
  return {"baseline_6m4s", "coherent_shift", "all_static", "stress_dense"};
}

namespace {

using nlohmann::json;

json pose_to_json(const Pose2& p) { return json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

Pose2 pose_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>()};
}

}  // namespace

std::string to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["fov"] = {{"max_range", cfg.fov.max_range}, {"half_angle", cfg.fov.half_angle}};
  j["noise"] = {{"meas_sigma", cfg.noise.meas_sigma},
                {"odom_sigma_xy", cfg.noise.odom_sigma_xy},
                {"odom_sigma_theta", cfg.noise.odom_sigma_theta},
                {"init_sigma_xy", cfg.noise.init_sigma_xy},
                {"init_sigma_theta", cfg.noise.init_sigma_theta}};
  j["objects"] = json::array();
  for (const ObjectSpec& o : cfg.objects)
    j["objects"].push_back({{"id", o.id},
                            {"center", {o.center.x(), o.center.y()}},
                            {"half_extents", {o.half_x, o.half_y}},
                            {"heading", o.heading},
                            {"class_label", o.class_label}});
  j["moves"] = json::array();
  for (const MoveSpec& m : cfg.moves)
    j["moves"].push_back(
        {{"frame", m.frame}, {"object_id", m.object_id}, {"delta", pose_to_json(m.delta)}});
  j["robot_path"] = json::array();
  for (const Pose2& p : cfg.robot_path) j["robot_path"].push_back(pose_to_json(p));
  return j.dump(2);
}

ScenarioConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  ScenarioConfig cfg;
  cfg.name = j.value("name", std::string("custom"));
  cfg.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("fov")) {
    cfg.fov.max_range = j["fov"].value("max_range", cfg.fov.max_range);
    cfg.fov.half_angle = j["fov"].value("half_angle", cfg.fov.half_angle);
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    cfg.noise.meas_sigma = n.value("meas_sigma", cfg.noise.meas_sigma);
    cfg.noise.odom_sigma_xy = n.value("odom_sigma_xy", cfg.noise.odom_sigma_xy);
    cfg.noise.odom_sigma_theta = n.value("odom_sigma_theta", cfg.noise.odom_sigma_theta);
    cfg.noise.init_sigma_xy = n.value("init_sigma_xy", cfg.noise.init_sigma_xy);
    cfg.noise.init_sigma_theta = n.value("init_sigma_theta", cfg.noise.init_sigma_theta);
  }
  for (const json& jo : j.value("objects", json::array())) {
    ObjectSpec o;
    o.id = jo.at("id").get<int>();
    o.center = Point2(jo.at("center")[0].get<double>(), jo.at("center")[1].get<double>());
    o.half_x = jo.at("half_extents")[0].get<double>();
    o.half_y = jo.at("half_extents")[1].get<double>();
    o.heading = jo.value("heading", 0.0);
    o.class_label = jo.value("class_label", 0);
    cfg.objects.push_back(o);
  }
  for (const json& jm : j.value("moves", json::array()))
    cfg.moves.push_back({jm.at("frame").get<int>(), jm.at("object_id").get<int>(),
                         pose_from_json(jm.at("delta"))});
  for (const json& jp : j.value("robot_path", json::array()))
    cfg.robot_path.push_back(pose_from_json(jp));
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace svem
