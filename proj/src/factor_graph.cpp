#include "svem/factor_graph.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace svem {

Eigen::Vector3d odometry_residual(const Pose2& prev, const Pose2& curr, const Pose2& meas) {
  const Pose2 est_rel = compose(prev, inverse(curr));
  const Pose2 offset = compose(inverse(est_rel), meas);
  return {offset.x, offset.y, offset.theta};
}

Point2 rigid_residual(const Pose2& object_pose, const Point2& landmark_world,
                      const Point2& template_point) {
  return apply(object_pose, landmark_world) - template_point;
}

Point2 landmark_prior_residual(const Point2& landmark_world, const Point2& previous) {
  return landmark_world - previous;
}

Point2 landmark_measurement_residual(const Pose2& robot_pose, const Point2& landmark_world,
                                     const Point2& obs_body) {
  return apply(inverse(robot_pose), obs_body) - landmark_world;
}

MixtureMode select_mode(const Point2& residual, double gate, const MixtureParams& p) {
  const double ls = std::log(gate) + gaussian_log_density(residual, p);
  const double lc = std::log(1.0 - gate) + uniform_log_density(p);
  return ls >= lc ? MixtureMode::static_mode : MixtureMode::changed_mode;
}

MixtureMode max_mixture_select(const Point2& residual, const BetaState& s,
                               const MixtureParams& p) {
  return select_mode(residual, s.mean(), p);
}

namespace {

const Point2& landmark_at(const VariableSet& vars, int id) {
  auto it = vars.landmark_positions.find(id);
  if (it == vars.landmark_positions.end())
    throw std::out_of_range("factor references missing landmark " + std::to_string(id));
  return it->second;
}

const Pose2& object_at(const VariableSet& vars, int id) {
  auto it = vars.object_poses.find(id);
  if (it == vars.object_poses.end())
    throw std::out_of_range("factor references missing object " + std::to_string(id));
  return it->second;
}

const Pose2& pose_at(const VariableSet& vars, int idx) {
  if (idx < 0 || idx >= static_cast<int>(vars.window_poses.size()))
    throw std::out_of_range("factor references missing pose " + std::to_string(idx));
  return vars.window_poses[idx];
}

}  // namespace

Eigen::VectorXd factor_residual(const Factor& f, const VariableSet& vars) {
  switch (f.kind) {
    case FactorKind::odometry:
      return odometry_residual(pose_at(vars, f.pose_a), pose_at(vars, f.pose_b), f.meas_pose);
    case FactorKind::rigid:
      return rigid_residual(object_at(vars, f.object_id), landmark_at(vars, f.landmark_id),
                            f.template_point);
    case FactorKind::landmark_prior:
      return landmark_prior_residual(landmark_at(vars, f.landmark_id), f.prev_point);
    case FactorKind::landmark_measurement:
      return landmark_measurement_residual(pose_at(vars, f.pose_a),
                                           landmark_at(vars, f.landmark_id), f.meas_point);
  }
  return {};
}

double factor_cost(const Factor& f, const VariableSet& vars) {
  if (f.kind == FactorKind::landmark_measurement) {
    if (f.mode == MixtureMode::changed_mode)
      return f.weights.w_changed * std::log(f.mixture.e_max);
    const Eigen::VectorXd r = factor_residual(f, vars);
    return f.weights.w_static * r.squaredNorm() / (2.0 * f.mixture.sigma * f.mixture.sigma);
  }
  const Eigen::VectorXd r = factor_residual(f, vars);
  if (f.kind == FactorKind::odometry) {
    return (r.x() * r.x() + r.y() * r.y()) / (2.0 * f.sigma * f.sigma) +
           r.z() * r.z() / (2.0 * f.sigma_theta * f.sigma_theta);
  }
  return r.squaredNorm() / (2.0 * f.sigma * f.sigma);
}

std::vector<JacobianBlock> jacobians(const Factor& f, const VariableSet& vars) {
  std::vector<JacobianBlock> blocks;
  switch (f.kind) {
    case FactorKind::odometry: {
      const Pose2& prev = pose_at(vars, f.pose_a);
      const Pose2& curr = pose_at(vars, f.pose_b);
      // r_xy = c + R(psi - phi) (m - p), r_theta = wrap(psi - phi + mu)
      const double rel = curr.theta - prev.theta;
      const Eigen::Matrix2d R = Pose2(0, 0, rel).rotation();
      const Eigen::Matrix2d dR = rotation_deriv(rel);
      const Point2 mp = f.meas_pose.translation() - prev.translation();
      Eigen::MatrixXd Jp = Eigen::MatrixXd::Zero(3, 3);
      Jp.topLeftCorner<2, 2>() = -R;
      Jp.topRightCorner<2, 1>() = -dR * mp;
      Jp(2, 2) = -1.0;
      Eigen::MatrixXd Jc = Eigen::MatrixXd::Zero(3, 3);
      Jc.topLeftCorner<2, 2>().setIdentity();
      Jc.topRightCorner<2, 1>() = dR * mp;
      Jc(2, 2) = 1.0;
      blocks.push_back({{VarType::pose, f.pose_a}, Jp});
      blocks.push_back({{VarType::pose, f.pose_b}, Jc});
      break;
    }
    case FactorKind::rigid: {
      const Pose2& obj = object_at(vars, f.object_id);
      const Point2& lw = landmark_at(vars, f.landmark_id);
      Eigen::MatrixXd Jo(2, 3);
      Jo.leftCols<2>().setIdentity();
      Jo.col(2) = rotation_deriv(obj.theta) * lw;
      blocks.push_back({{VarType::object_pose, f.object_id}, Jo});
      blocks.push_back({{VarType::landmark, f.landmark_id}, obj.rotation()});
      break;
    }
    case FactorKind::landmark_prior:
      blocks.push_back({{VarType::landmark, f.landmark_id}, Eigen::Matrix2d::Identity()});
      break;
    case FactorKind::landmark_measurement: {
      if (f.mode == MixtureMode::changed_mode) {
        blocks.push_back({{VarType::pose, f.pose_a}, Eigen::MatrixXd::Zero(2, 3)});
        blocks.push_back({{VarType::landmark, f.landmark_id}, Eigen::Matrix2d::Zero()});
        break;
      }
      const Pose2& pose = pose_at(vars, f.pose_a);
      // r = R(psi)^T (d - c) - l
      Eigen::MatrixXd Jp(2, 3);
      Jp.leftCols<2>() = -pose.rotation().transpose();
      Jp.col(2) = rotation_deriv(pose.theta).transpose() * (f.meas_point - pose.translation());
      blocks.push_back({{VarType::pose, f.pose_a}, Jp});
      blocks.push_back({{VarType::landmark, f.landmark_id}, -Eigen::Matrix2d::Identity()});
      break;
    }
  }
  return blocks;
}

double graph_cost(const FactorGraph& g) {
  double c = 0.0;
  for (const Factor& f : g.factors) c += factor_cost(f, g.vars);
  return c;
}

namespace {

struct ParamIndex {
  std::vector<int> pose_off;
  std::map<int, int> object_off;
  std::map<int, int> landmark_off;
  int size = 0;
};

ParamIndex build_index(const VariableSet& v) {
  ParamIndex ix;
  ix.pose_off.assign(v.window_poses.size(), -1);
  for (size_t i = 0; i < v.window_poses.size(); ++i) {
    if (!v.pose_fixed[i]) {
      ix.pose_off[i] = ix.size;
      ix.size += 3;
    }
  }
  for (const auto& [id, pose] : v.object_poses) {
    (void)pose;
    ix.object_off[id] = ix.size;
    ix.size += 3;
  }
  for (const auto& [id, p] : v.landmark_positions) {
    (void)p;
    ix.landmark_off[id] = ix.size;
    ix.size += 2;
  }
  return ix;
}

int var_offset(const ParamIndex& ix, const VarRef& v) {
  switch (v.type) {
    case VarType::pose:
      return ix.pose_off[v.index];
    case VarType::object_pose:
      return ix.object_off.at(v.index);
    case VarType::landmark:
      return ix.landmark_off.at(v.index);
  }
  return -1;
}

// Per-row whitening weights so that cost == 0.5 * ||W r||^2 (+ constants).
Eigen::VectorXd row_weights(const Factor& f) {
  if (f.kind == FactorKind::odometry) {
    Eigen::VectorXd w(3);
    w << 1.0 / f.sigma, 1.0 / f.sigma, 1.0 / f.sigma_theta;
    return w;
  }
  if (f.kind == FactorKind::landmark_measurement) {
    const double s = std::sqrt(f.weights.w_static) / f.mixture.sigma;
    return Eigen::VectorXd::Constant(2, s);
  }
  return Eigen::VectorXd::Constant(2, 1.0 / f.sigma);
}

void assemble(const FactorGraph& g, const ParamIndex& ix, Eigen::MatrixXd& H, Eigen::VectorXd& b) {
  H.setZero(ix.size, ix.size);
  b.setZero(ix.size);
  for (const Factor& f : g.factors) {
    if (f.kind == FactorKind::landmark_measurement && f.mode == MixtureMode::changed_mode)
      continue;
    const Eigen::VectorXd w = row_weights(f);
    const Eigen::VectorXd r = factor_residual(f, g.vars).cwiseProduct(w);
    const auto blocks = jacobians(f, g.vars);
    std::vector<std::pair<int, Eigen::MatrixXd>> act;
    for (const auto& blk : blocks) {
      const int off = var_offset(ix, blk.var);
      if (off < 0) continue;  // fixed pose
      act.emplace_back(off, w.asDiagonal() * blk.jac);
    }
    for (const auto& [oi, Ji] : act) {
      b.segment(oi, Ji.cols()) += Ji.transpose() * r;
      for (const auto& [oj, Jj] : act)
        H.block(oi, oj, Ji.cols(), Jj.cols()) += Ji.transpose() * Jj;
    }
  }
}

void apply_step(VariableSet& v, const ParamIndex& ix, const Eigen::VectorXd& delta) {
  for (size_t i = 0; i < v.window_poses.size(); ++i) {
    const int off = ix.pose_off[i];
    if (off >= 0) v.window_poses[i] = retract(v.window_poses[i], delta.segment<3>(off));
  }
  for (auto& [id, pose] : v.object_poses)
    pose = retract(pose, delta.segment<3>(ix.object_off.at(id)));
  for (auto& [id, p] : v.landmark_positions) p += delta.segment<2>(ix.landmark_off.at(id));
}

int reselect_modes(FactorGraph& g) {
  int flips = 0;
  for (Factor& f : g.factors) {
    if (f.kind != FactorKind::landmark_measurement) continue;
    const Point2 r = landmark_measurement_residual(
        g.vars.window_poses[f.pose_a], g.vars.landmark_positions.at(f.landmark_id), f.meas_point);
    const MixtureMode m = select_mode(r, f.gate, f.mixture);
    if (m != f.mode) {
      f.mode = m;
      ++flips;
    }
  }
  return flips;
}

}  // namespace

SolveReport lm_solve(FactorGraph& g, const SolveOptions& opts) {
  SolveReport rep;
  if (g.vars.pose_fixed.size() != g.vars.window_poses.size())
    g.vars.pose_fixed.assign(g.vars.window_poses.size(), false);

  const ParamIndex ix = build_index(g.vars);
  if (opts.mode_reselect) reselect_modes(g);
  double cost = graph_cost(g);
  rep.initial_cost = cost;
  rep.cost_trace.push_back(cost);
  if (ix.size == 0) {
    rep.final_cost = cost;
    rep.converged = true;
    return rep;
  }

  Eigen::MatrixXd H(ix.size, ix.size);
  Eigen::VectorXd b(ix.size);
  double lambda = opts.lambda_init;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    assemble(g, ix, H, b);
    if (b.lpNorm<Eigen::Infinity>() < 1e-14) {
      rep.converged = true;
      break;
    }
    bool accepted = false;
    while (true) {
      Eigen::MatrixXd Hd = H;
      Hd.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd delta = Hd.ldlt().solve(-b);
      if (delta.allFinite()) {
        if (delta.norm() < opts.step_tol) {
          rep.converged = true;
          break;
        }
        VariableSet trial = g.vars;
        apply_step(trial, ix, delta);
        FactorGraph probe{std::move(trial), g.factors};
        const double trial_cost = graph_cost(probe);
        if (trial_cost < cost) {
          g.vars = std::move(probe.vars);
          const double drop = cost - trial_cost;
          lambda = std::max(lambda / opts.lambda_scale, 1e-12);
          if (opts.mode_reselect) rep.mode_flips += reselect_modes(g);
          cost = graph_cost(g);
          rep.cost_trace.push_back(cost);
          ++rep.iterations;
          accepted = true;
          if (drop < opts.cost_tol || delta.norm() < opts.step_tol) rep.converged = true;
          break;
        }
      }
      lambda *= opts.lambda_scale;
      if (lambda > 1e12) {
        rep.singular = true;
        break;
      }
    }
    if (!accepted || rep.converged || rep.singular) break;
  }

  rep.final_cost = cost;
  if (rep.singular) rep.converged = false;
  return rep;
}

void dump_graph(const FactorGraph& g, std::ostream& os) {
  for (size_t i = 0; i < g.vars.window_poses.size(); ++i) {
    const Pose2& p = g.vars.window_poses[i];
    os << "var pose " << i << ' ' << p.x << ' ' << p.y << ' ' << p.theta
       << (g.vars.pose_fixed[i] ? " fixed" : " free") << '\n';
  }
  for (const auto& [id, p] : g.vars.object_poses)
    os << "var object " << id << ' ' << p.x << ' ' << p.y << ' ' << p.theta << '\n';
  for (const auto& [id, p] : g.vars.landmark_positions)
    os << "var landmark " << id << ' ' << p.x() << ' ' << p.y() << '\n';
  for (const Factor& f : g.factors) {
    static const char* names[] = {"odometry", "rigid", "landmark_prior", "landmark_measurement"};
    os << "factor " << names[static_cast<int>(f.kind)];
    if (f.pose_a >= 0) os << " pose_a=" << f.pose_a;
    if (f.pose_b >= 0) os << " pose_b=" << f.pose_b;
    if (f.object_id >= 0) os << " object=" << f.object_id;
    if (f.landmark_id >= 0) os << " landmark=" << f.landmark_id;
    os << " residual=" << factor_residual(f, g.vars).transpose();
    if (f.kind == FactorKind::landmark_measurement) {
      os << " mode=" << (f.mode == MixtureMode::static_mode ? "static" : "changed")
         << " w_static=" << f.weights.w_static << " gate=" << f.gate;
    }
    os << '\n';
  }
}

}  // namespace svem
