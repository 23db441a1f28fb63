#pragma once

#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "svem/factor_graph.hpp"
#include "svem/types.hpp"

namespace svem {

enum class ObjectStatus { active, rejected_pending, removed };

const char* to_string(ObjectStatus s);

struct ObjectModel {
  int id = 0;
  int class_label = 0;
  Pose2 pose;                          // T^{OW}, world -> object
  std::vector<Point2> template_pts;    // l^O, landmark layout in the object frame
  std::vector<Point2> landmarks_world; // l^W, same length as template_pts
  BetaState consistency;
  double change_magnitude = 0.0;
  ObjectStatus status = ObjectStatus::active;
};

// Measurement-model variants exercised by the ablation study.
enum class Variant {
  full,            // max-mixture over the mean-field ELBO, weights E[pi]
  point_estimate,  // naive single-point weights E[v]
  no_max_mixture,  // ELBO weights without the hard mode decision
  gate_by_e_pi,    // mode decision gated by E[pi] instead of E[v]
  plain_gaussian,  // every landmark factor a unit-weight Gaussian
};

Variant variant_from_string(const std::string& name);
const char* to_string(Variant v);

struct PipelineConfig {
  int window_size = 8;
  int em_iters = 30;
  double elbo_tol = 1e-6;
  double theta_consist = 0.2;
  double alpha0 = 1.0;
  double beta0 = 1.0;
  int min_points = 3;
  double pseudo_change_delta = 4.0;
  double count_cap = kDefaultCountCap;
  double change_rate = 0.5;

  MixtureParams mixture{0.05, 5.0, 2};
  double sigma_pose_xy = 0.05;
  double sigma_pose_theta = 0.02;
  double sigma_rigid = 0.01;
  // Tight map prior: with a loose prior the optimizer can explain a moved
  // corner by dragging a single mapped landmark onto it instead of flagging
  // the point as changed.
  double sigma_prior = 0.1;

  double init_sigma_xy = 0.2;   // spawn noise on the frame-1 pose guess
  double init_sigma_theta = 0.1;
  FovSpec fov;
  std::uint64_t seed = 1;

  Variant variant = Variant::full;
  SolveOptions solve;
  std::string dump_graph_dir;  // per-iteration graph dumps when non-empty
};

// --- trace records ----------------------------------------------------------

struct TrajectoryRow {
  int frame = 0;
  Pose2 est;  // T^{CW}, world -> robot
  Pose2 gt;   // same convention
};

struct EmTraceRow {
  int frame = 0;
  int em_iter = 0;
  double elbo = 0.0;
  double pose_error = 0.0;  // translational, against ground truth
  double rot_error = 0.0;
};

struct ConsistencyTraceRow {
  int frame = 0;
  int em_iter = 0;
  int object_id = 0;
  double e_v = 0.0;       // mean of the variational Beta posterior
  double e_pi_mean = 0.0; // mean static responsibility of this frame's points
};

struct ObjectRow {
  int frame = 0;
  int object_id = 0;
  double e_v = 0.0;
  double e_pi_mean = -1.0;  // -1 when the object had no associated points
  double alpha = 0.0;
  double beta = 0.0;
  ObjectStatus status = ObjectStatus::active;
  Pose2 pose;  // T^{OW}
};

struct ObjectCreation {
  int object_id = 0;
  int frame = 0;
  Point2 centroid{0.0, 0.0};
};

struct PipelineState {
  std::map<int, ObjectModel> library;
  std::vector<TrajectoryRow> trajectory;
  int next_object_id = 0;
  long total_mode_flips = 0;
  long total_solver_iters = 0;
};

// Gated greedy nearest-neighbour association of observation clusters to
// library objects (centroid distance in the predicted world frame,
// one-to-one). Unmatched cluster indices are returned as proposals.
std::vector<int> associate(std::vector<Observation>& obs,
                           const std::map<int, ObjectModel>& library,
                           const Pose2& predicted_pose_cw, double e_max);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  void process_frame(const FrameData& frame);

  const PipelineState& state() const { return state_; }
  const PipelineConfig& config() const { return cfg_; }
  const std::vector<EmTraceRow>& em_trace() const { return em_trace_; }
  const std::vector<ConsistencyTraceRow>& consistency_trace() const { return consistency_trace_; }
  const std::vector<ObjectRow>& object_rows() const { return object_rows_; }
  const std::vector<ObjectCreation>& creations() const { return creations_; }

  // Cost of the current window graph evaluated at an arbitrary variable
  // assignment (modes reselected); used for hypothesis comparisons.
  double window_objective(const VariableSet& at) const;
  FactorGraph current_graph() const;

 private:
  struct PointAssoc {
    int object_id = -1;
    int landmark_idx = -1;
    Point2 point_body{0.0, 0.0};
    EStepWeights w{1.0, 0.0};
  };
  struct WindowFrame {
    int frame_id = 0;
    Pose2 pose;  // T^{CW} estimate
    bool fixed = false;
    bool has_odom = false;
    Pose2 odom;
    Pose2 gt_placement;
    std::vector<PointAssoc> points;
  };

  static int landmark_gid(int object_id, int idx) { return object_id * 16 + idx; }

  void e_step();
  void update_q();
  SolveReport m_step();
  double compute_elbo() const;
  void run_vem(int frame_id);
  // Returns the ids removed this frame.
  std::vector<int> update_object_library(const FrameData& frame,
                                         const std::vector<Observation>& obs,
                                         const std::vector<int>& proposals);
  FactorGraph build_graph() const;
  void absorb_solution(const FactorGraph& g);
  double object_e_v(int id) const;
  std::optional<double> frame_responsibility(int id) const;
  Pose2 current_placement() const;

  PipelineConfig cfg_;
  PipelineState state_;
  std::mt19937_64 init_rng_;

  std::deque<WindowFrame> window_;
  // Per-frame workspace, rebuilt from the library at frame start.
  std::map<int, Point2> landmark_est_;
  std::map<int, Point2> landmark_prev_;
  std::map<int, Pose2> object_pose_est_;
  std::map<int, BetaState> q_;

  std::vector<EmTraceRow> em_trace_;
  std::vector<ConsistencyTraceRow> consistency_trace_;
  std::vector<ObjectRow> object_rows_;
  std::vector<ObjectCreation> creations_;
};

}  // namespace svem
