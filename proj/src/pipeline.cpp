#include "svem/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace svem {

const char* to_string(ObjectStatus s) {
  switch (s) {
    case ObjectStatus::active:
      return "active";
    case ObjectStatus::rejected_pending:
      return "rejected_pending";
    case ObjectStatus::removed:
      return "removed";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "point_estimate") return Variant::point_estimate;
  if (name == "no_max_mixture") return Variant::no_max_mixture;
  if (name == "gate_by_e_pi") return Variant::gate_by_e_pi;
  if (name == "plain_gaussian") return Variant::plain_gaussian;
  throw std::invalid_argument("unknown variant: " + name);
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::point_estimate:
      return "point_estimate";
    case Variant::no_max_mixture:
      return "no_max_mixture";
    case Variant::gate_by_e_pi:
      return "gate_by_e_pi";
    case Variant::plain_gaussian:
      return "plain_gaussian";
  }
  return "?";
}

namespace {

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double beta_kl(const BetaState& q, const BetaState& p) {
  return log_beta_fn(p.alpha, p.beta) - log_beta_fn(q.alpha, q.beta) +
         (q.alpha - p.alpha) * digamma(q.alpha) + (q.beta - p.beta) * digamma(q.beta) +
         (p.alpha - q.alpha + p.beta - q.beta) * digamma(q.alpha + q.beta);
}

double weight_entropy(const EStepWeights& w) {
  auto h = [](double x) { return x > 0.0 ? -x * std::log(x) : 0.0; };
  return h(w.w_static) + h(w.w_changed);
}

Point2 cluster_centroid(const std::vector<Point2>& pts) {
  Point2 c{0.0, 0.0};
  for (const Point2& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

}  // namespace

std::vector<int> associate(std::vector<Observation>& obs, const std::map<int, ObjectModel>& library,
                           const Pose2& predicted_pose_cw, double e_max) {
  const Pose2 placement = inverse(predicted_pose_cw);

  struct Cand {
    double dist;
    int obs_idx;
    int object_id;
  };
  std::vector<Cand> cands;
  std::vector<Point2> world_centroids(obs.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    obs[i].assoc_object.reset();
    obs[i].assoc_landmark_indices.assign(obs[i].points_body.size(), -1);
    if (obs[i].points_body.empty()) continue;
    Point2 c{0.0, 0.0};
    for (const Point2& p : obs[i].points_body) c += apply(placement, p);
    world_centroids[i] = c / static_cast<double>(obs[i].points_body.size());
    for (const auto& [id, model] : library) {
      if (model.status == ObjectStatus::removed || model.landmarks_world.empty()) continue;
      const double d = (world_centroids[i] - cluster_centroid(model.landmarks_world)).norm();
      if (d <= e_max) cands.push_back({d, static_cast<int>(i), id});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.obs_idx != b.obs_idx) return a.obs_idx < b.obs_idx;
    return a.object_id < b.object_id;
  });

  std::set<int> used_obs, used_obj;
  for (const Cand& c : cands) {
    if (used_obs.count(c.obs_idx) || used_obj.count(c.object_id)) continue;
    used_obs.insert(c.obs_idx);
    used_obj.insert(c.object_id);
    Observation& o = obs[c.obs_idx];
    o.assoc_object = c.object_id;

    // Greedy one-to-one point-to-landmark matching in the object frame.
    const ObjectModel& model = library.at(c.object_id);
    struct PCand {
      double dist;
      int pt;
      int lm;
    };
    std::vector<PCand> pcands;
    for (size_t p = 0; p < o.points_body.size(); ++p) {
      const Point2 in_obj = apply(model.pose, apply(placement, o.points_body[p]));
      for (size_t l = 0; l < model.template_pts.size(); ++l) {
        const double d = (in_obj - model.template_pts[l]).norm();
        if (d <= e_max) pcands.push_back({d, static_cast<int>(p), static_cast<int>(l)});
      }
    }
    std::sort(pcands.begin(), pcands.end(), [](const PCand& a, const PCand& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      if (a.pt != b.pt) return a.pt < b.pt;
      return a.lm < b.lm;
    });
    std::set<int> used_pt, used_lm;
    for (const PCand& pc : pcands) {
      if (used_pt.count(pc.pt) || used_lm.count(pc.lm)) continue;
      used_pt.insert(pc.pt);
      used_lm.insert(pc.lm);
      o.assoc_landmark_indices[pc.pt] = pc.lm;
    }
  }

  std::vector<int> proposals;
  for (size_t i = 0; i < obs.size(); ++i)
    if (!obs[i].assoc_object.has_value()) proposals.push_back(static_cast<int>(i));
  return proposals;
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), init_rng_(cfg_.seed) {}

Pose2 Pipeline::current_placement() const { return inverse(window_.back().pose); }

double Pipeline::object_e_v(int id) const {
  auto it = q_.find(id);
  if (it != q_.end()) return it->second.mean();
  return state_.library.at(id).consistency.mean();
}

std::optional<double> Pipeline::frame_responsibility(int id) const {
  const WindowFrame& f = window_.back();
  double sum = 0.0;
  int n = 0;
  for (const PointAssoc& pa : f.points)
    if (pa.object_id == id) {
      sum += pa.w.w_static;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

void Pipeline::e_step() {
  for (WindowFrame& f : window_) {
    for (PointAssoc& pa : f.points) {
      if (cfg_.variant == Variant::plain_gaussian) {
        pa.w = {1.0, 0.0};
        continue;
      }
      const BetaState& q = q_.at(pa.object_id);
      if (cfg_.variant == Variant::point_estimate) {
        const double ev = q.mean();
        pa.w = {ev, 1.0 - ev};
        continue;
      }
      const int gid = landmark_gid(pa.object_id, pa.landmark_idx);
      const Point2 r =
          landmark_measurement_residual(f.pose, landmark_est_.at(gid), pa.point_body);
      pa.w = e_step_weights(r, cfg_.mixture, q);
    }
  }
}

void Pipeline::update_q() {
  for (auto& [id, q] : q_) {
    double a = 0.0, b = 0.0;
    for (const WindowFrame& f : window_)
      for (const PointAssoc& pa : f.points)
        if (pa.object_id == id) {
          a += pa.w.w_static;
          b += pa.w.w_changed;
        }
    const BetaState& prior = state_.library.at(id).consistency;
    q = {prior.alpha + a, prior.beta + b};
  }
}

FactorGraph Pipeline::build_graph() const {
  FactorGraph g;
  for (const WindowFrame& f : window_) {
    g.vars.window_poses.push_back(f.pose);
    g.vars.pose_fixed.push_back(f.fixed);
  }
  for (size_t i = 1; i < window_.size(); ++i) {
    if (!window_[i].has_odom) continue;
    Factor f;
    f.kind = FactorKind::odometry;
    f.pose_a = static_cast<int>(i) - 1;
    f.pose_b = static_cast<int>(i);
    f.meas_pose = window_[i].odom;
    f.sigma = cfg_.sigma_pose_xy;
    f.sigma_theta = cfg_.sigma_pose_theta;
    g.factors.push_back(f);
  }
  for (const auto& [id, pose] : object_pose_est_) {
    g.vars.object_poses[id] = pose;
    const ObjectModel& model = state_.library.at(id);
    for (size_t j = 0; j < model.template_pts.size(); ++j) {
      const int gid = landmark_gid(id, static_cast<int>(j));
      g.vars.landmark_positions[gid] = landmark_est_.at(gid);
      Factor rf;
      rf.kind = FactorKind::rigid;
      rf.object_id = id;
      rf.landmark_id = gid;
      rf.template_point = model.template_pts[j];
      rf.sigma = cfg_.sigma_rigid;
      g.factors.push_back(rf);
      Factor pf;
      pf.kind = FactorKind::landmark_prior;
      pf.landmark_id = gid;
      pf.prev_point = landmark_prev_.at(gid);
      pf.sigma = cfg_.sigma_prior;
      g.factors.push_back(pf);
    }
  }
  for (size_t i = 0; i < window_.size(); ++i) {
    for (const PointAssoc& pa : window_[i].points) {
      const int gid = landmark_gid(pa.object_id, pa.landmark_idx);
      Factor mf;
      mf.kind = FactorKind::landmark_measurement;
      mf.pose_a = static_cast<int>(i);
      mf.object_id = pa.object_id;
      mf.landmark_id = gid;
      mf.meas_point = pa.point_body;
      mf.mixture = cfg_.mixture;
      switch (cfg_.variant) {
        case Variant::plain_gaussian:
          mf.weights = {1.0, 0.0};
          mf.gate = 1.0;
          mf.mode = MixtureMode::static_mode;
          break;
        case Variant::no_max_mixture:
          mf.weights = snap_weights(pa.w);
          mf.gate = 1.0;
          mf.mode = MixtureMode::static_mode;
          break;
        case Variant::gate_by_e_pi:
        case Variant::point_estimate:
        case Variant::full: {
          mf.weights = snap_weights(pa.w);
          mf.gate = cfg_.variant == Variant::gate_by_e_pi ? pa.w.w_static
                                                          : q_.at(pa.object_id).mean();
          const Point2 r = landmark_measurement_residual(window_[i].pose,
                                                         landmark_est_.at(gid), pa.point_body);
          mf.mode = select_mode(r, mf.gate, cfg_.mixture);
          break;
        }
      }
      g.factors.push_back(mf);
    }
  }
  return g;
}

void Pipeline::absorb_solution(const FactorGraph& g) {
  for (size_t i = 0; i < window_.size(); ++i) window_[i].pose = g.vars.window_poses[i];
  for (const auto& [gid, p] : g.vars.landmark_positions) landmark_est_[gid] = p;
  for (const auto& [id, pose] : g.vars.object_poses) object_pose_est_[id] = pose;
}

SolveReport Pipeline::m_step() {
  FactorGraph g = build_graph();
  SolveOptions opts = cfg_.solve;
  opts.mode_reselect = cfg_.variant == Variant::full ||
                       cfg_.variant == Variant::point_estimate ||
                       cfg_.variant == Variant::gate_by_e_pi;
  const SolveReport rep = lm_solve(g, opts);
  absorb_solution(g);
  return rep;
}

double Pipeline::compute_elbo() const {
  double L = 0.0;
  for (const WindowFrame& f : window_) {
    for (const PointAssoc& pa : f.points) {
      const int gid = landmark_gid(pa.object_id, pa.landmark_idx);
      const Point2 r =
          landmark_measurement_residual(f.pose, landmark_est_.at(gid), pa.point_body);
      const BetaState& q = q_.at(pa.object_id);
      L += pa.w.w_static * (expected_log_v(q) + gaussian_log_density(r, cfg_.mixture)) +
           pa.w.w_changed * (expected_log_1mv(q) + uniform_log_density(cfg_.mixture)) +
           weight_entropy(pa.w);
    }
  }
  for (const auto& [id, q] : q_) L -= beta_kl(q, state_.library.at(id).consistency);
  // Gaussian factors (normalization constants dropped).
  for (size_t i = 1; i < window_.size(); ++i) {
    if (!window_[i].has_odom) continue;
    const Eigen::Vector3d r =
        odometry_residual(window_[i - 1].pose, window_[i].pose, window_[i].odom);
    L -= (r.x() * r.x() + r.y() * r.y()) / (2.0 * cfg_.sigma_pose_xy * cfg_.sigma_pose_xy) +
         r.z() * r.z() / (2.0 * cfg_.sigma_pose_theta * cfg_.sigma_pose_theta);
  }
  for (const auto& [id, pose] : object_pose_est_) {
    const ObjectModel& model = state_.library.at(id);
    for (size_t j = 0; j < model.template_pts.size(); ++j) {
      const int gid = landmark_gid(id, static_cast<int>(j));
      const Point2& lw = landmark_est_.at(gid);
      L -= rigid_residual(pose, lw, model.template_pts[j]).squaredNorm() /
           (2.0 * cfg_.sigma_rigid * cfg_.sigma_rigid);
      L -= (lw - landmark_prev_.at(gid)).squaredNorm() /
           (2.0 * cfg_.sigma_prior * cfg_.sigma_prior);
    }
  }
  return L;
}

void Pipeline::run_vem(int frame_id) {
  double last = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg_.em_iters; ++it) {
    e_step();
    update_q();
    const double pre = compute_elbo();

    // Snapshot so a mixture-approximation step that lowers the bound can be
    // rolled back, keeping the per-frame ELBO trace non-decreasing.
    std::vector<Pose2> saved_poses;
    for (const WindowFrame& f : window_) saved_poses.push_back(f.pose);
    const auto saved_landmarks = landmark_est_;
    const auto saved_objects = object_pose_est_;

    const SolveReport rep = m_step();
    state_.total_mode_flips += rep.mode_flips;
    state_.total_solver_iters += rep.iterations;

    double elbo = compute_elbo();

    // Multi-start on the first iteration of a frame: a poor starting pose can
    // trap the max-mixture solve in a wedged optimum, so also try the
    // odometry dead-reckoning prediction and keep the higher-bound result.
    if (it == 0 && window_.size() > 1 && window_.back().has_odom) {
      std::vector<Pose2> a_poses;
      for (const WindowFrame& f : window_) a_poses.push_back(f.pose);
      const auto a_landmarks = landmark_est_;
      const auto a_objects = object_pose_est_;
      const double elbo_a = elbo;

      for (size_t i = 0; i < window_.size(); ++i) window_[i].pose = saved_poses[i];
      landmark_est_ = saved_landmarks;
      object_pose_est_ = saved_objects;
      const Pose2 prev_placement = inverse(window_[window_.size() - 2].pose);
      window_.back().pose = inverse(compose(prev_placement, window_.back().odom));
      e_step();
      update_q();
      const SolveReport rep2 = m_step();
      state_.total_mode_flips += rep2.mode_flips;
      state_.total_solver_iters += rep2.iterations;
      const double elbo_b = compute_elbo();
      if (elbo_b > elbo_a) {
        elbo = elbo_b;
      } else {
        for (size_t i = 0; i < window_.size(); ++i) window_[i].pose = a_poses[i];
        landmark_est_ = a_landmarks;
        object_pose_est_ = a_objects;
        e_step();
        update_q();
        elbo = compute_elbo();
      }
    }

    bool reverted = false;
    if (elbo < pre) {
      for (size_t i = 0; i < window_.size(); ++i) window_[i].pose = saved_poses[i];
      landmark_est_ = saved_landmarks;
      object_pose_est_ = saved_objects;
      e_step();
      update_q();
      elbo = pre;
      reverted = true;
    }

    if (!cfg_.dump_graph_dir.empty()) {
      std::ofstream os(cfg_.dump_graph_dir + "/graph_f" + std::to_string(frame_id) + "_i" +
                       std::to_string(it) + ".txt");
      const FactorGraph g = build_graph();
      dump_graph(g, os);
    }

    const Pose2 placement = current_placement();
    const Pose2& gt = window_.back().gt_placement;
    em_trace_.push_back({frame_id, it, elbo,
                         (placement.translation() - gt.translation()).norm(),
                         std::abs(wrap_angle(placement.theta - gt.theta))});
    for (const auto& [id, q] : q_) {
      double sum = 0.0;
      int n = 0;
      for (const WindowFrame& f : window_)
        for (const PointAssoc& pa : f.points)
          if (pa.object_id == id) {
            sum += pa.w.w_static;
            ++n;
          }
      consistency_trace_.push_back({frame_id, it, id, q.mean(), n > 0 ? sum / n : -1.0});
    }

    if (reverted) break;
    if (elbo - last < cfg_.elbo_tol) break;
    last = elbo;
  }
}

std::vector<int> Pipeline::update_object_library(const FrameData& frame,
                                                 const std::vector<Observation>& obs,
                                                 const std::vector<int>& proposals) {
  const Pose2 placement = current_placement();
  const WindowFrame& cur = window_.back();

  // Per-object responsibility and residual magnitude over this frame's points.
  std::map<int, std::pair<double, int>> resp;  // sum, count
  std::map<int, double> res_norm_sum;
  for (const PointAssoc& pa : cur.points) {
    auto& [s, n] = resp[pa.object_id];
    s += pa.w.w_static;
    ++n;
    const int gid = landmark_gid(pa.object_id, pa.landmark_idx);
    res_norm_sum[pa.object_id] +=
        landmark_measurement_residual(cur.pose, landmark_est_.at(gid), pa.point_body).norm();
  }

  std::vector<int> to_remove;
  for (auto& [id, model] : state_.library) {
    if (model.status == ObjectStatus::removed) continue;
    auto it = resp.find(id);
    if (it != resp.end()) {
      const double rbar = it->second.first / it->second.second;
      const double mean_res = res_norm_sum.at(id) / it->second.second;
      model.consistency = beta_update(model.consistency, rbar, cfg_.count_cap);
      model.change_magnitude =
          update_change_magnitude(model.change_magnitude, mean_res, cfg_.change_rate);
      if (rbar >= 0.5) {
        model.status = ObjectStatus::active;
        model.pose = object_pose_est_.at(id);
        for (size_t j = 0; j < model.template_pts.size(); ++j)
          model.landmarks_world[j] = landmark_est_.at(landmark_gid(id, static_cast<int>(j)));
      } else if (model.status == ObjectStatus::rejected_pending &&
                 q_.at(id).mean() < cfg_.theta_consist) {
        to_remove.push_back(id);
      } else {
        model.status = ObjectStatus::rejected_pending;
      }
    } else if (in_fov(placement, cluster_centroid(model.landmarks_world), cfg_.fov)) {
      model.consistency =
          apply_pseudo_change(model.consistency, cfg_.pseudo_change_delta, cfg_.count_cap);
      if (model.consistency.mean() < cfg_.theta_consist) {
        if (model.status == ObjectStatus::rejected_pending)
          to_remove.push_back(id);
        else
          model.status = ObjectStatus::rejected_pending;
      }
    }
  }
  for (int id : to_remove) {
    state_.library.at(id).status = ObjectStatus::removed;
    for (WindowFrame& f : window_) {
      auto& pts = f.points;
      pts.erase(std::remove_if(pts.begin(), pts.end(),
                               [id](const PointAssoc& pa) { return pa.object_id == id; }),
                pts.end());
    }
  }

  for (int idx : proposals) {
    const Observation& o = obs[idx];
    if (static_cast<int>(o.points_body.size()) < cfg_.min_points) continue;
    ObjectModel model;
    model.id = state_.next_object_id++;
    for (const Point2& p : o.points_body) model.landmarks_world.push_back(apply(placement, p));
    const Point2 centroid = cluster_centroid(model.landmarks_world);
    model.pose = Pose2{-centroid.x(), -centroid.y(), 0.0};
    for (const Point2& w : model.landmarks_world) model.template_pts.push_back(w - centroid);
    model.consistency = {cfg_.alpha0, cfg_.beta0};
    creations_.push_back({model.id, frame.frame_id, centroid});
    state_.library.emplace(model.id, std::move(model));
  }
  return to_remove;
}

void Pipeline::process_frame(const FrameData& frame) {
  // Predicted pose for this frame (T^{CW}). Data association always uses the
  // odometry prediction; the optimizer's starting point may differ (the
  // second frame starts from a deliberately perturbed guess, standing in for
  // a poor relocalization).
  Pose2 pose_cw;
  Pose2 assoc_pose_cw;
  bool fixed = false;
  if (window_.empty()) {
    pose_cw = inverse(frame.gt_pose);  // trajectory starts from a known pose
    assoc_pose_cw = pose_cw;
    fixed = true;
  } else {
    const Pose2 prev_placement = inverse(window_.back().pose);
    assoc_pose_cw = inverse(frame.has_odometry ? compose(prev_placement, frame.odometry_meas)
                                               : prev_placement);
    if (state_.trajectory.size() == 1) {
      std::normal_distribution<double> n01;
      const Eigen::Vector3d d(n01(init_rng_) * cfg_.init_sigma_xy,
                              n01(init_rng_) * cfg_.init_sigma_xy,
                              n01(init_rng_) * cfg_.init_sigma_theta);
      pose_cw = inverse(retract(frame.gt_pose, d));
    } else {
      pose_cw = assoc_pose_cw;
    }
  }

  std::vector<Observation> obs = frame.observations;
  const std::vector<int> proposals =
      associate(obs, state_.library, assoc_pose_cw, cfg_.mixture.e_max);

  if (static_cast<int>(window_.size()) >= cfg_.window_size) {
    window_.pop_front();
    window_.front().fixed = true;
  }
  WindowFrame wf;
  wf.frame_id = frame.frame_id;
  wf.pose = pose_cw;
  wf.fixed = fixed;
  wf.has_odom = frame.has_odometry;
  wf.odom = frame.odometry_meas;
  wf.gt_placement = frame.gt_pose;
  for (const Observation& o : obs) {
    if (!o.assoc_object.has_value()) continue;
    for (size_t p = 0; p < o.points_body.size(); ++p)
      if (o.assoc_landmark_indices[p] >= 0)
        wf.points.push_back({*o.assoc_object, o.assoc_landmark_indices[p], o.points_body[p],
                             EStepWeights{1.0, 0.0}});
  }
  window_.push_back(std::move(wf));

  // Rebuild the per-frame workspace from the library.
  landmark_est_.clear();
  landmark_prev_.clear();
  object_pose_est_.clear();
  q_.clear();
  std::set<int> referenced;
  for (const WindowFrame& f : window_)
    for (const PointAssoc& pa : f.points) referenced.insert(pa.object_id);
  for (int id : referenced) {
    const ObjectModel& model = state_.library.at(id);
    object_pose_est_[id] = model.pose;
    q_[id] = model.consistency;
    for (size_t j = 0; j < model.template_pts.size(); ++j) {
      const int gid = landmark_gid(id, static_cast<int>(j));
      landmark_est_[gid] = model.landmarks_world[j];
      landmark_prev_[gid] = model.landmarks_world[j];
    }
  }

  run_vem(frame.frame_id);

  const Pose2 est = window_.back().pose;
  state_.trajectory.push_back({frame.frame_id, est, inverse(frame.gt_pose)});

  const std::vector<int> removed_now = update_object_library(frame, obs, proposals);

  for (const auto& [id, model] : state_.library) {
    if (model.status == ObjectStatus::removed &&
        std::find(removed_now.begin(), removed_now.end(), id) == removed_now.end())
      continue;
    ObjectRow row;
    row.frame = frame.frame_id;
    row.object_id = id;
    row.e_v = q_.count(id) ? q_.at(id).mean() : model.consistency.mean();
    const auto rbar = frame_responsibility(id);
    row.e_pi_mean = rbar.value_or(-1.0);
    row.alpha = model.consistency.alpha;
    row.beta = model.consistency.beta;
    row.status = model.status;
    row.pose = model.pose;
    object_rows_.push_back(row);
  }
}

double Pipeline::window_objective(const VariableSet& at) const {
  FactorGraph g = build_graph();
  g.vars = at;
  for (Factor& f : g.factors) {
    if (f.kind != FactorKind::landmark_measurement) continue;
    if (cfg_.variant == Variant::plain_gaussian || cfg_.variant == Variant::no_max_mixture)
      continue;
    const Point2 r = landmark_measurement_residual(
        g.vars.window_poses[f.pose_a], g.vars.landmark_positions.at(f.landmark_id), f.meas_point);
    f.mode = select_mode(r, f.gate, f.mixture);
  }
  return -graph_cost(g);
}

FactorGraph Pipeline::current_graph() const { return build_graph(); }

}  // namespace svem
