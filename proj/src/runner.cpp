#include "svem/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace svem {

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open output file: " + path);
  return os;
}

std::vector<double> per_frame_errors(const std::vector<Pose2>& est,
                                     const std::vector<Pose2>& gt) {
  if (est.size() != gt.size())
    throw std::invalid_argument("trajectory length mismatch: " + std::to_string(est.size()) +
                                " vs " + std::to_string(gt.size()));
  if (est.empty()) throw std::invalid_argument("empty trajectory");
  std::vector<double> errs(est.size());
  for (size_t i = 0; i < est.size(); ++i)
    errs[i] = (est[i].translation() - gt[i].translation()).norm();
  return errs;
}

}  // namespace

double trajectory_ate(const std::vector<Pose2>& est, const std::vector<Pose2>& gt) {
  const std::vector<double> errs = per_frame_errors(est, gt);
  double s = 0.0;
  for (double e : errs) s += e * e;
  return std::sqrt(s / errs.size());
}

double trajectory_mpe(const std::vector<Pose2>& est, const std::vector<Pose2>& gt) {
  const std::vector<double> errs = per_frame_errors(est, gt);
  return *std::max_element(errs.begin(), errs.end());
}

void change_detection_scores(const Scene& scene, const std::vector<ObjectCreation>& creations,
                             const std::vector<ObjectRow>& rows, RunMetrics& out) {
  const int n_gt = static_cast<int>(scene.cfg.objects.size());
  // Library object -> scene object, by centroid proximity at the creation frame.
  std::map<int, int> lib_to_gt;
  for (const ObjectCreation& c : creations) {
    int best = -1;
    double best_d = 1.0;  // pairing gate [m]
    for (int g = 0; g < n_gt; ++g) {
      const double d = (c.centroid - scene.object_centroid_world(c.frame, g)).norm();
      if (d < best_d) {
        best_d = d;
        best = g;
      }
    }
    if (best >= 0) lib_to_gt[c.object_id] = best;
  }
  std::map<int, int> created_frame;
  for (const ObjectCreation& c : creations) created_frame[c.object_id] = c.frame;

  // A scene object counts as flagged when any library object mapped to it and
  // created before its move was rejected or removed at/after the move frame
  // (for unmoved objects: at any frame).
  std::vector<bool> flagged(n_gt, false);
  for (const ObjectRow& row : rows) {
    if (row.status == ObjectStatus::active) continue;
    auto it = lib_to_gt.find(row.object_id);
    if (it == lib_to_gt.end()) continue;
    const int g = it->second;
    const int move_frame = scene.first_move_frame(g);
    if (move_frame >= 0 && created_frame.at(row.object_id) >= move_frame)
      continue;  // model of the post-move placement; its rejection is unrelated
    if (move_frame < 0 || row.frame >= move_frame) flagged[g] = true;
  }

  int tp = 0, fp = 0, moved = 0;
  for (int g = 0; g < n_gt; ++g) {
    const bool is_moved = scene.object_moved(g);
    moved += is_moved;
    if (flagged[g] && is_moved) ++tp;
    if (flagged[g] && !is_moved) ++fp;
  }
  out.change_recall = moved > 0 ? static_cast<double>(tp) / moved : 1.0;
  out.change_precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 1.0;
}

bool log_enabled() {
  static const bool on = [] {
    const char* v = std::getenv("SEMISTATIC_VEM_LOG");
    return v != nullptr && *v != '\0' && std::string(v) != "0" && std::string(v) != "off";
  }();
  return on;
}

RunMetrics run_scenario(const ScenarioConfig& scenario, PipelineConfig pcfg,
                        const RunOptions& opts) {
  const Scene scene = generate_scene(scenario);
  pcfg.fov = scenario.fov;
  pcfg.seed = scenario.seed;
  pcfg.init_sigma_xy = scenario.noise.init_sigma_xy;
  pcfg.init_sigma_theta = scenario.noise.init_sigma_theta;
  pcfg.dump_graph_dir = opts.dump_graph_dir;

  Pipeline pipe(pcfg);
  std::mt19937_64 rng(scenario.seed);
  const auto t0 = std::chrono::steady_clock::now();
  for (int f = 0; f < scene.frames(); ++f) {
    pipe.process_frame(simulate_frame(scene, f, rng));
    if (log_enabled())
      std::cerr << "[svem] " << scenario.name << " frame " << f << "/" << scene.frames() - 1
                << " objects=" << pipe.state().library.size() << '\n';
  }
  const auto t1 = std::chrono::steady_clock::now();

  RunMetrics m;
  m.runtime_seconds = std::chrono::duration<double>(t1 - t0).count();
  m.mode_flips = pipe.state().total_mode_flips;
  std::vector<Pose2> est, gt;
  for (const TrajectoryRow& r : pipe.state().trajectory) {
    est.push_back(inverse(r.est));
    gt.push_back(inverse(r.gt));
  }
  m.ate = trajectory_ate(est, gt);
  m.mpe = trajectory_mpe(est, gt);
  change_detection_scores(scene, pipe.creations(), pipe.object_rows(), m);

  if (log_enabled())
    std::cerr << "[svem] " << scenario.name << " ate=" << m.ate << " mpe=" << m.mpe
              << " precision=" << m.change_precision << " recall=" << m.change_recall
              << " runtime=" << m.runtime_seconds << "s\n";

  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    const std::string d = opts.out_dir + "/";
    {
      auto os = open_out(d + "trajectory.csv");
      os << "frame,est_x,est_y,est_theta,gt_x,gt_y,gt_theta\n";
      for (const TrajectoryRow& r : pipe.state().trajectory)
        os << r.frame << ',' << fmt9(r.est.x) << ',' << fmt9(r.est.y) << ',' << fmt9(r.est.theta)
           << ',' << fmt9(r.gt.x) << ',' << fmt9(r.gt.y) << ',' << fmt9(r.gt.theta) << '\n';
    }
    {
      auto os = open_out(d + "objects.csv");
      os << "frame,object_id,e_v,e_pi_mean,alpha,beta,status,pose_x,pose_y,pose_theta\n";
      for (const ObjectRow& r : pipe.object_rows())
        os << r.frame << ',' << r.object_id << ',' << fmt9(r.e_v) << ',' << fmt9(r.e_pi_mean)
           << ',' << fmt9(r.alpha) << ',' << fmt9(r.beta) << ',' << to_string(r.status) << ','
           << fmt9(r.pose.x) << ',' << fmt9(r.pose.y) << ',' << fmt9(r.pose.theta) << '\n';
    }
    {
      auto os = open_out(d + "elbo_trace.csv");
      os << "frame,em_iter,elbo,pose_error,rot_error\n";
      for (const EmTraceRow& r : pipe.em_trace())
        os << r.frame << ',' << r.em_iter << ',' << fmt9(r.elbo) << ',' << fmt9(r.pose_error)
           << ',' << fmt9(r.rot_error) << '\n';
    }
    {
      auto os = open_out(d + "consistency_trace.csv");
      os << "frame,em_iter,object_id,e_v,e_pi_mean\n";
      for (const ConsistencyTraceRow& r : pipe.consistency_trace())
        os << r.frame << ',' << r.em_iter << ',' << r.object_id << ',' << fmt9(r.e_v) << ','
           << fmt9(r.e_pi_mean) << '\n';
    }
    {
      auto os = open_out(d + "metrics.csv");
      os << "ate,mpe,change_precision,change_recall,mode_flips\n";
      os << fmt9(m.ate) << ',' << fmt9(m.mpe) << ',' << fmt9(m.change_precision) << ','
         << fmt9(m.change_recall) << ',' << m.mode_flips << '\n';
    }
    if (opts.svg) {
      std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> elbo_series;
      for (const EmTraceRow& r : pipe.em_trace()) {
        const std::string name = "frame " + std::to_string(r.frame);
        if (elbo_series.empty() || elbo_series.back().first != name)
          elbo_series.push_back({name, {}});
        elbo_series.back().second.push_back({static_cast<double>(r.em_iter), r.elbo});
      }
      write_svg_chart(d + "elbo.svg", "ELBO per EM iteration", elbo_series);

      std::map<int, std::vector<std::pair<double, double>>> by_obj;
      double tick = 0.0;
      int last_key = std::numeric_limits<int>::min();
      for (const ConsistencyTraceRow& r : pipe.consistency_trace()) {
        const int key = r.frame * 1024 + r.em_iter;
        if (key != last_key) {
          last_key = key;
          tick += 1.0;
        }
        by_obj[r.object_id].push_back({tick, r.e_v});
      }
      std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> cons_series;
      for (auto& [id, pts] : by_obj)
        cons_series.push_back({"object " + std::to_string(id), std::move(pts)});
      write_svg_chart(d + "consistency.svg", "E[v] per EM iteration", cons_series);
    }
  }
  return m;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AblationRow> ablate(const AblationSpec& spec, const PipelineConfig& base,
                                const std::string& out_dir) {
  if (spec.seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  if (spec.variants.empty()) throw std::invalid_argument("ablation needs at least one variant");

  namespace fs = std::filesystem;
  std::vector<AblationRow> rows;
  for (Variant v : spec.variants) {
    for (std::uint64_t seed : spec.seeds) {
      ScenarioConfig sc = spec.scenario;
      sc.seed = seed;
      PipelineConfig pc = base;
      pc.variant = v;
      RunOptions opts;
      if (!out_dir.empty()) {
        const std::string cell =
            out_dir + "/" + to_string(v) + "_seed" + std::to_string(seed);
        fs::create_directories(cell);
        opts.out_dir = cell;
      }
      rows.push_back({v, seed, run_scenario(sc, pc, opts)});
    }
  }

  if (!out_dir.empty()) {
    auto os = open_out(out_dir + "/ablation.csv");
    os << "variant,seed,ate,mpe,change_precision,change_recall,mode_flips\n";
    for (const AblationRow& r : rows)
      os << to_string(r.variant) << ',' << r.seed << ',' << fmt9(r.metrics.ate) << ','
         << fmt9(r.metrics.mpe) << ',' << fmt9(r.metrics.change_precision) << ','
         << fmt9(r.metrics.change_recall) << ',' << r.metrics.mode_flips << '\n';
    for (Variant v : spec.variants) {
      std::vector<double> ate, mpe, prec, rec, flips;
      for (const AblationRow& r : rows)
        if (r.variant == v) {
          ate.push_back(r.metrics.ate);
          mpe.push_back(r.metrics.mpe);
          prec.push_back(r.metrics.change_precision);
          rec.push_back(r.metrics.change_recall);
          flips.push_back(static_cast<double>(r.metrics.mode_flips));
        }
      os << to_string(v) << ",median," << fmt9(median(ate)) << ',' << fmt9(median(mpe)) << ','
         << fmt9(median(prec)) << ',' << fmt9(median(rec)) << ','
         << static_cast<long>(median(flips)) << '\n';
    }
  }
  return rows;
}

}  // namespace svem
