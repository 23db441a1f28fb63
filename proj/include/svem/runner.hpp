#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svem/pipeline.hpp"
#include "svem/sim.hpp"

namespace svem {

struct RunMetrics {
  double ate = 0.0;  // RMS translational error [m]
  double mpe = 0.0;  // max translational error [m]
  double change_precision = 1.0;
  double change_recall = 1.0;
  double runtime_seconds = 0.0;  // reported, never serialized (keeps CSVs reproducible)
  long mode_flips = 0;
};

// RMS / max translational error between matching placements.
// Throws std::invalid_argument on length mismatch or empty input.
double trajectory_ate(const std::vector<Pose2>& est_placements,
                      const std::vector<Pose2>& gt_placements);
double trajectory_mpe(const std::vector<Pose2>& est_placements,
                      const std::vector<Pose2>& gt_placements);

// Change-detection score: a library object counts as detected-changed when its
// status became rejected_pending or removed at or after its ground-truth move
// frame. Library objects are matched to scene objects by centroid proximity at
// their creation frame.
void change_detection_scores(const Scene& scene, const std::vector<ObjectCreation>& creations,
                             const std::vector<ObjectRow>& rows, RunMetrics& out);

struct RunOptions {
  std::string out_dir;  // empty: no files written
  bool svg = false;
  std::string dump_graph_dir;
};

// End-to-end scenario execution: simulate every frame, feed the pipeline,
// compute metrics, optionally write trajectory.csv / objects.csv /
// elbo_trace.csv / consistency_trace.csv / metrics.csv (+ SVG charts).
RunMetrics run_scenario(const ScenarioConfig& scenario, PipelineConfig pcfg,
                        const RunOptions& opts);

struct AblationSpec {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  ScenarioConfig scenario;
};

struct AblationRow {
  Variant variant;
  std::uint64_t seed = 0;
  RunMetrics metrics;
};

// One run per (variant, seed); writes ablation.csv with per-cell rows plus a
// per-variant median summary row. Returns the per-cell rows.
std::vector<AblationRow> ablate(const AblationSpec& spec, const PipelineConfig& base,
                                const std::string& out_dir);

double median(std::vector<double> values);

// Verbosity toggle, read once from the SEMISTATIC_VEM_LOG environment variable.
bool log_enabled();

// Self-contained polyline chart; one series per (name, points) pair.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series);

}  // namespace svem
