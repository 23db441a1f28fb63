#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "svem/runner.hpp"

namespace fs = std::filesystem;
using namespace svem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
  std::string preset_name;
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int em_iters = -1;
  int window = -1;
  std::string out_dir;
  bool svg = false;
  bool zero_noise = false;
  std::string variant = "full";
  std::string dump_graph;
};

ScenarioConfig load_scenario(const CommonOpts& o) {
  ScenarioConfig sc = o.config_path.empty() ? preset(o.preset_name) : load_config(o.config_path);
  if (o.seed_set) sc.seed = o.seed;
  if (o.zero_noise) {
    sc.noise.meas_sigma = 0.0;
    sc.noise.odom_sigma_xy = 0.0;
    sc.noise.odom_sigma_theta = 0.0;
    sc.noise.init_sigma_xy = 0.0;
    sc.noise.init_sigma_theta = 0.0;
  }
  return sc;
}

PipelineConfig make_pipeline_config(const CommonOpts& o) {
  PipelineConfig pc;
  if (o.em_iters > 0) pc.em_iters = o.em_iters;
  if (o.window > 0) pc.window_size = o.window;
  pc.variant = variant_from_string(o.variant);
  return pc;
}

int check_out_dir(const std::string& dir) {
  std::error_code ec;
  if (dir.empty() || (!fs::is_directory(dir) && !fs::create_directories(dir, ec)) ||
      !fs::is_directory(dir)) {
    std::cerr << "error: cannot use output directory: " << dir << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required) {
  auto* p = cmd->add_option("--preset", o.preset_name, "scenario preset name");
  auto* c = cmd->add_option("--config", o.config_path, "scenario config JSON file");
  p->excludes(c);
  cmd->add_option("--seed", o.seed, "RNG seed override")->each([&o](const std::string&) {
    o.seed_set = true;
  });
  cmd->add_option("--em-iters", o.em_iters, "EM iterations per frame");
  cmd->add_option("--window", o.window, "sliding window size");
  auto* out = cmd->add_option("--out", o.out_dir, "output directory (created if missing)");
  if (out_required) out->required();
  cmd->add_flag("--svg", o.svg, "also emit SVG line charts");
  cmd->add_flag("--zero-noise", o.zero_noise, "zero all scenario noise sigmas");
  cmd->add_option("--variant", o.variant,
                  "full|point_estimate|no_max_mixture|gate_by_e_pi|plain_gaussian");
  cmd->add_option("--dump-graph", o.dump_graph, "directory for per-iteration graph dumps");
  cmd->callback([cmd, &o] {
    if (o.preset_name.empty() && o.config_path.empty())
      throw CLI::RequiredError("--preset or --config");
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-static variational-EM landmark SLAM"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "execute one scenario end to end");
  add_common(run_cmd, run_opts, true);

  CommonOpts ab_opts;
  std::vector<std::uint64_t> ab_seeds;
  std::vector<std::string> ab_variants = {"full", "point_estimate", "no_max_mixture",
                                          "gate_by_e_pi"};
  CLI::App* ab_cmd = app.add_subcommand("ablate", "variant x seed comparison table");
  add_common(ab_cmd, ab_opts, true);
  ab_cmd->add_option("--seeds", ab_seeds, "comma-separated seed list (default 1..20)")
      ->delimiter(',');
  ab_cmd->add_option("--variants", ab_variants, "comma-separated variant list")->delimiter(',');

  CLI::App* preset_cmd = app.add_subcommand("preset", "preset utilities");
  preset_cmd->add_subcommand("list", "print available preset names");
  preset_cmd->require_subcommand(1);

  std::string validate_path;
  CLI::App* val_cmd = app.add_subcommand("validate", "check a scenario config file");
  val_cmd->add_option("config", validate_path, "scenario config JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (preset_cmd->parsed()) {
      for (const std::string& n : preset_names()) std::cout << n << '\n';
      return kExitOk;
    }
    if (val_cmd->parsed()) {
      try {
        generate_scene(load_config(validate_path));
      } catch (const std::exception& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return kExitUsage;
      }
      std::cout << "ok\n";
      return kExitOk;
    }
    if (run_cmd->parsed()) {
      if (const int rc = check_out_dir(run_opts.out_dir)) return rc;
      ScenarioConfig sc;
      PipelineConfig pc;
      try {
        sc = load_scenario(run_opts);
        pc = make_pipeline_config(run_opts);
        generate_scene(sc);  // reject bad configs before any file is written
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
      }
      RunOptions ro;
      ro.out_dir = run_opts.out_dir;
      ro.svg = run_opts.svg;
      ro.dump_graph_dir = run_opts.dump_graph;
      if (!ro.dump_graph_dir.empty()) fs::create_directories(ro.dump_graph_dir);
      const RunMetrics m = run_scenario(sc, pc, ro);
      std::cout << "ate=" << m.ate << " mpe=" << m.mpe
                << " change_precision=" << m.change_precision
                << " change_recall=" << m.change_recall << " mode_flips=" << m.mode_flips
                << '\n';
      std::cerr << "runtime: " << m.runtime_seconds << " s\n";
      return kExitOk;
    }
    if (ab_cmd->parsed()) {
      if (const int rc = check_out_dir(ab_opts.out_dir)) return rc;
      AblationSpec spec;
      PipelineConfig pc;
      try {
        spec.scenario = load_scenario(ab_opts);
        pc = make_pipeline_config(ab_opts);
        generate_scene(spec.scenario);
        for (const std::string& v : ab_variants) spec.variants.push_back(variant_from_string(v));
        spec.seeds = ab_seeds;
        if (spec.seeds.empty()) {
          spec.seeds.resize(20);
          std::iota(spec.seeds.begin(), spec.seeds.end(), 1);
        }
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
      }
      ablate(spec, pc, ab_opts.out_dir);
      std::cout << "wrote " << ab_opts.out_dir << "/ablation.csv\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitUsage;
}
