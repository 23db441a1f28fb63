#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <vector>

#include "svem/consistency.hpp"
#include "svem/geometry.hpp"

namespace svem {

enum class FactorKind { odometry, rigid, landmark_prior, landmark_measurement };
enum class MixtureMode { static_mode, changed_mode };

// Variables of one sliding-window problem. Window poses are T^{CW}
// (world -> robot), object poses are T^{OW} (world -> object).
struct VariableSet {
  std::vector<Pose2> window_poses;
  std::vector<bool> pose_fixed;
  std::map<int, Point2> landmark_positions;  // l^W keyed by landmark id
  std::map<int, Pose2> object_poses;
};

struct Factor {
  FactorKind kind = FactorKind::landmark_prior;
  int pose_a = -1;  // odometry: previous pose; measurement: observing pose
  int pose_b = -1;  // odometry: current pose
  int landmark_id = -1;
  int object_id = -1;

  Pose2 meas_pose;                // odometry measurement T^C_{t-1,t}
  Point2 meas_point{0.0, 0.0};    // observed point in the robot frame
  Point2 template_point{0.0, 0.0};  // l^O for rigidity factors
  Point2 prev_point{0.0, 0.0};    // previous mapped position for prior factors

  double sigma = 1.0;
  double sigma_theta = 1.0;  // odometry heading component

  // landmark_measurement only:
  MixtureParams mixture;
  EStepWeights weights{1.0, 0.0};
  double gate = 1.0;  // consistency estimate used for mode selection
  MixtureMode mode = MixtureMode::static_mode;
};

struct FactorGraph {
  VariableSet vars;
  std::vector<Factor> factors;
};

struct SolveOptions {
  int max_iters = 100;
  double lambda_init = 1e-4;
  double lambda_scale = 10.0;
  double cost_tol = 1e-12;
  double step_tol = 1e-12;
  bool mode_reselect = true;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  bool singular = false;
  int mode_flips = 0;
  std::vector<double> cost_trace;  // cost after every accepted step
};

// --- residuals -------------------------------------------------------------

// Eq.-style odometry deviation: inverse(prev * inverse(curr)) * meas,
// returned as (dx, dy, dtheta) with the heading wrapped.
Eigen::Vector3d odometry_residual(const Pose2& prev, const Pose2& curr, const Pose2& meas);

// T^{OW} l^W - l^O.
Point2 rigid_residual(const Pose2& object_pose, const Point2& landmark_world,
                      const Point2& template_point);

Point2 landmark_prior_residual(const Point2& landmark_world, const Point2& previous);

// inverse(T^{CW}) d^C - l^W.
Point2 landmark_measurement_residual(const Pose2& robot_pose, const Point2& landmark_world,
                                     const Point2& obs_body);

// --- max-mixture -----------------------------------------------------------

// Hard mode decision gated by a consistency estimate; ties go to static.
MixtureMode select_mode(const Point2& residual, double gate, const MixtureParams& p);
MixtureMode max_mixture_select(const Point2& residual, const BetaState& s, const MixtureParams& p);

// --- factor evaluation -----------------------------------------------------

Eigen::VectorXd factor_residual(const Factor& f, const VariableSet& vars);

// Negative log-likelihood contribution, constants of the Gaussian modes dropped.
double factor_cost(const Factor& f, const VariableSet& vars);

enum class VarType { pose, object_pose, landmark };
struct VarRef {
  VarType type;
  int index;  // window index for poses, id otherwise
};
struct JacobianBlock {
  VarRef var;
  Eigen::MatrixXd jac;  // residual_dim x var_dim
};

// Analytic residual Jacobians. Changed-mode measurement factors return
// all-zero blocks (they contribute no gradient).
std::vector<JacobianBlock> jacobians(const Factor& f, const VariableSet& vars);

double graph_cost(const FactorGraph& g);

SolveReport lm_solve(FactorGraph& g, const SolveOptions& opts = {});

// Line-oriented debug dump: one record per variable and per factor.
void dump_graph(const FactorGraph& g, std::ostream& os);

}  // namespace svem
