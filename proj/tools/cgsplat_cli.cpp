// Command-line front end: dataset synthesis, the two-stage reconstruction
// pipeline, standalone rendering, metric evaluation and gradient checking.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cgsplat/autodiff.hpp"
#include "cgsplat/config.hpp"
#include "cgsplat/dataset.hpp"
#include "cgsplat/eval.hpp"
#include "cgsplat/pipeline.hpp"
#include "cgsplat/synth.hpp"

namespace fs = std::filesystem;
using namespace cgsplat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStageFailure = 2;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs* args) {
  cmd->add_option("--config", args->config_path,
                  "key=value config file (see README for keys)");
  cmd->add_option("--set", args->overrides,
                  "config override key=value (repeatable)");
}

PipelineConfig resolve_config(const ConfigArgs& args) {
  ConfigMap map;
  if (!args.config_path.empty()) map = load_config_file(args.config_path);
  apply_overrides(map, args.overrides);
  return make_pipeline_config(map);
}

uint64_t string_hash(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write: " + path);
  out << content;
}

void write_run_info(const std::string& out_dir, const PipelineConfig& cfg,
                    uint64_t dataset_hash) {
  const std::string snapshot = config_snapshot(cfg);
  write_text((fs::path(out_dir) / "config_snapshot.txt").string(), snapshot);
  std::ostringstream os;
  os << "seed=" << cfg.seed << "\n"
     << "dataset_hash=" << std::hex << dataset_hash << "\n"
     << "config_hash=" << std::hex << string_hash(snapshot) << "\n";
  write_text((fs::path(out_dir) / "run_info.txt").string(), os.str());
}

std::string frame_tag(const FrameSequence& seq, int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d", idx);
  (void)seq;
  return buf;
}

Trajectory chain_to_trajectory(const std::vector<Se3>& world_to_cam,
                               const std::vector<int>& frame_indices) {
  Trajectory t;
  for (size_t i = 0; i < world_to_cam.size(); ++i) {
    t.entries.push_back({frame_indices[i], world_to_cam[i].inverse()});
  }
  return t;
}

Trajectory gt_trajectory_for(const FrameSequence& seq,
                             const std::vector<int>& frame_indices) {
  Trajectory t;
  for (int idx : frame_indices) {
    t.entries.push_back({idx, seq.gt_world_to_cam[idx].inverse()});
  }
  return t;
}

struct MetricsTable {
  std::vector<std::pair<std::string, std::string>> rows;
  void add(const std::string& k, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    rows.emplace_back(k, os.str());
  }
  void add_text(const std::string& k, const std::string& v) {
    rows.emplace_back(k, v);
  }
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics CSV: " + path);
    out << "metric,value\n";
    for (const auto& [k, v] : rows) out << k << "," << v << "\n";
  }
};

// Pose metrics per the evaluation protocol: Umeyama alignment first, then
// ATE and RPE on the aligned trajectory.
void add_pose_metrics(MetricsTable* table, const Trajectory& est,
                      const Trajectory& gt) {
  const SimilarityTransform sim = umeyama_align(est, gt);
  const Trajectory aligned = apply_similarity(est, sim);
  table->add("ate", ate(aligned, gt, false));
  const RpeResult r = rpe(aligned, gt, 1);
  table->add("rpe_t", r.rpe_t);
  table->add("rpe_r_deg", r.rpe_r_deg);
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  write_synth_dataset(spec, out_dir);
  std::cout << "wrote synthetic dataset (" << spec.frames << " frames) to "
            << out_dir << "\n";
  return kExitOk;
}

int cmd_estimate_poses(const std::string& dataset_dir,
                       const std::string& out_dir, PipelineConfig cfg,
                       int test_every) {
  DatasetDescriptor desc;
  desc.root = dataset_dir;
  desc.test_every = test_every;
  const FrameSequence seq = load_dataset(desc);
  fs::create_directories(out_dir);
  write_run_info(out_dir, cfg, dataset_content_hash(desc));

  std::vector<TrainLog> fit_logs, pose_logs;
  const PoseStageResult pose =
      run_pose_stage(seq, cfg, &fit_logs, &pose_logs);
  save_trajectory(
      chain_to_trajectory(pose.chain.absolute, seq.train_indices),
      (fs::path(out_dir) / "traj_est.txt").string());
  for (size_t i = 0; i < fit_logs.size(); ++i) {
    save_train_log(fit_logs[i], (fs::path(out_dir) /
                                 ("fit_log_" + std::to_string(i) + ".csv"))
                                    .string());
  }
  for (size_t i = 0; i < pose_logs.size(); ++i) {
    save_train_log(pose_logs[i], (fs::path(out_dir) /
                                  ("pose_log_" + std::to_string(i) + ".csv"))
                                     .string());
  }
  if (pose.any_failure) {
    write_text((fs::path(out_dir) / "status.txt").string(),
               "status=pose_stage_partial\n");
    return kExitStageFailure;
  }
  write_text((fs::path(out_dir) / "status.txt").string(), "status=ok\n");
  return kExitOk;
}

int cmd_train_scene(const std::string& dataset_dir,
                    const std::string& traj_path, const std::string& out_dir,
                    PipelineConfig cfg) {
  DatasetDescriptor desc;
  desc.root = dataset_dir;
  desc.test_every = 0;
  FrameSequence seq = load_dataset(desc);
  const Trajectory traj = load_trajectory(traj_path);
  // The trajectory's indices choose the training frames.
  seq.train_indices.clear();
  seq.test_indices.clear();
  std::vector<Se3> poses;
  for (const auto& e : traj.entries) {
    if (e.index < 0 || e.index >= seq.count()) {
      throw IoError("trajectory frame index out of range");
    }
    seq.train_indices.push_back(e.index);
    poses.push_back(e.pose.inverse());
  }
  fs::create_directories(out_dir);
  write_run_info(out_dir, cfg, dataset_content_hash(desc));

  const SceneStageResult scene = run_scene_stage(seq, poses, cfg);
  save_gaussians(scene.scene, (fs::path(out_dir) / "scene.gsplat").string());
  export_ply(scene.scene, (fs::path(out_dir) / "scene.ply").string());
  save_train_log(scene.log, (fs::path(out_dir) / "scene_log.csv").string());
  if (!scene.ok) {
    write_text((fs::path(out_dir) / "status.txt").string(),
               "status=scene_stage_failed\n");
    return kExitStageFailure;
  }
  write_text((fs::path(out_dir) / "status.txt").string(), "status=ok\n");
  return kExitOk;
}

int cmd_render(const std::string& scene_path, const std::string& intr_path,
               const std::string& traj_path, const std::string& pose_line,
               const std::string& out_dir, bool with_depth) {
  const GaussianSet scene = load_gaussians(scene_path);
  const Intrinsics K = Intrinsics::load(intr_path);
  Trajectory traj;
  if (!traj_path.empty()) {
    traj = load_trajectory(traj_path);
  } else {
    std::istringstream ls(pose_line);
    TrajectoryEntry e;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      std::cerr << "bad --pose, expected: tx ty tz qx qy qz qw\n";
      return kExitUsage;
    }
    e.index = 0;
    e.pose.translation = {tx, ty, tz};
    e.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    traj.entries.push_back(e);
  }
  fs::create_directories(out_dir);
  RenderConfig rcfg;
  for (const auto& e : traj.entries) {
    const RenderOutput out = render(scene, e.pose.inverse(), K, rcfg);
    char name[64];
    std::snprintf(name, sizeof(name), "render_%04d.png", e.index);
    write_png(out.color, (fs::path(out_dir) / name).string());
    if (with_depth) {
      std::snprintf(name, sizeof(name), "render_depth_%04d.bin", e.index);
      write_depth_bin(out.depth, (fs::path(out_dir) / name).string());
    }
  }
  return kExitOk;
}

// Image pairs matched by sorted filename between two directories.
void add_image_metrics(MetricsTable* table, const std::string& render_dir,
                       const std::string& gt_dir) {
  auto list_pngs = [](const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".png") {
        names.push_back(e.path().filename().string());
      }
    }
    std::sort(names.begin(), names.end());
    return names;
  };
  const auto renders = list_pngs(render_dir);
  const auto gts = list_pngs(gt_dir);
  if (renders.size() != gts.size() || renders.empty()) {
    throw IoError("render/ground-truth image counts differ or are empty");
  }
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (size_t i = 0; i < renders.size(); ++i) {
    const Image r = read_png((fs::path(render_dir) / renders[i]).string());
    const Image g = read_png((fs::path(gt_dir) / gts[i]).string());
    const double p = psnr(r, g);
    const double s = ssim(r, g);
    psnr_sum += p;
    ssim_sum += s;
    table->add("psnr_" + renders[i], p);
    table->add("ssim_" + renders[i], s);
  }
  table->add("psnr_mean", psnr_sum / renders.size());
  table->add("ssim_mean", ssim_sum / renders.size());
  table->add_text("lpips_mean", "n/a");
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& render_dir, const std::string& gt_render_dir,
             const std::string& out_csv) {
  MetricsTable table;
  if (!render_dir.empty() && !gt_render_dir.empty()) {
    add_image_metrics(&table, render_dir, gt_render_dir);
  }
  if (!est_path.empty() && !gt_path.empty()) {
    const Trajectory est = load_trajectory(est_path);
    const Trajectory gt = load_trajectory(gt_path);
    add_pose_metrics(&table, est, gt);
  }
  table.save(out_csv);
  std::cout << "metric,value\n";
  for (const auto& [k, v] : table.rows) std::cout << k << "," << v << "\n";
  return kExitOk;
}

int cmd_run(const std::string& dataset_dir, const std::string& out_dir,
            PipelineConfig cfg, int test_every, bool ablate) {
  if (ablate) {
    cfg.weights.lambda1 = 0.0;
    cfg.weights.lambda2 = 1.0;
    cfg.weights.lambda3 = 0.0;
  }
  DatasetDescriptor desc;
  desc.root = dataset_dir;
  desc.test_every = test_every;
  const FrameSequence seq = load_dataset(desc);
  fs::create_directories(out_dir);
  write_run_info(out_dir, cfg, dataset_content_hash(desc));
  if (ablate) {
    write_text((fs::path(out_dir) / "ablation.txt").string(),
               "ablate_correspondence=1\n");
  }
  bool partial = false;

  // Stage 1: poses.
  std::vector<TrainLog> fit_logs, pose_logs;
  const PoseStageResult pose =
      run_pose_stage(seq, cfg, &fit_logs, &pose_logs);
  partial = partial || pose.any_failure;
  const std::string traj_est_path =
      (fs::path(out_dir) / "traj_est.txt").string();
  save_trajectory(chain_to_trajectory(pose.chain.absolute, seq.train_indices),
                  traj_est_path);
  for (size_t i = 0; i < pose_logs.size(); ++i) {
    save_train_log(pose_logs[i], (fs::path(out_dir) /
                                  ("pose_log_" + std::to_string(i) + ".csv"))
                                     .string());
  }

  // Stage 2: scene with the learned poses.
  const SceneStageResult scene =
      run_scene_stage(seq, pose.chain.absolute, cfg);
  partial = partial || !scene.ok;
  save_gaussians(scene.scene, (fs::path(out_dir) / "scene.gsplat").string());
  export_ply(scene.scene, (fs::path(out_dir) / "scene.ply").string());
  save_train_log(scene.log, (fs::path(out_dir) / "scene_log.csv").string());

  // Held-out evaluation: estimate test poses against the frozen scene, then
  // render. Metrics are computed from the files written below so that
  // `eval` on this run directory reproduces them exactly.
  const DepthProvider depths(seq, cfg.depth_noise, cfg.seed);
  const std::string render_dir = (fs::path(out_dir) / "test_renders").string();
  const std::string gt_dir = (fs::path(out_dir) / "test_gt").string();
  fs::create_directories(render_dir);
  fs::create_directories(gt_dir);
  const RenderConfig rcfg = cfg.render_config();
  std::vector<int> excluded_tests;
  for (int test_idx : seq.test_indices) {
    // Nearest training frame by index, its estimated pose as init.
    int nearest = 0;
    for (size_t j = 0; j < seq.train_indices.size(); ++j) {
      if (std::abs(seq.train_indices[j] - test_idx) <
          std::abs(seq.train_indices[nearest] - test_idx)) {
        nearest = static_cast<int>(j);
      }
    }
    auto handle = std::make_shared<HypothesisHandle>();
    const Se3 anchor = seq.has_gt()
                           ? seq.gt_world_to_cam[seq.train_indices[0]]
                           : Se3::identity();
    std::unique_ptr<Matcher> matcher;
    if (cfg.match_mode == MatchMode::Oracle) {
      matcher = std::make_unique<OracleMatcher>(
          depths.depth(test_idx), seq.gt_world_to_cam[test_idx],
          [handle] { return handle->pose; }, seq.intrinsics,
          cfg.match_samples, cfg.match_noise,
          Rng(cfg.seed).stream("test-match-" + std::to_string(test_idx))
              .seed());
    } else {
      matcher = std::make_unique<GridNccMatcher>(cfg.ncc_patch, cfg.ncc_stride,
                                                 cfg.ncc_radius);
    }
    const PoseEstimate est = estimate_test_pose(
        scene.scene, seq.images[test_idx], depths.depth(test_idx),
        seq.intrinsics, pose.chain.absolute[nearest], *matcher, cfg, handle,
        anchor);
    if (est.diverged) {
      excluded_tests.push_back(test_idx);
      partial = true;
      continue;
    }
    const RenderOutput out =
        render(scene.scene, est.transform, seq.intrinsics, rcfg);
    const std::string tag = frame_tag(seq, test_idx);
    write_png(out.color, (fs::path(render_dir) / ("test_" + tag + ".png"))
                             .string());
    write_png(seq.images[test_idx],
              (fs::path(gt_dir) / ("test_" + tag + ".png")).string());
  }

  // Metrics from the written artifacts.
  MetricsTable table;
  bool have_any_test = false;
  for (const auto& e : fs::directory_iterator(render_dir)) {
    (void)e;
    have_any_test = true;
    break;
  }
  if (have_any_test) add_image_metrics(&table, render_dir, gt_dir);
  if (seq.has_gt()) {
    const Trajectory est = load_trajectory(traj_est_path);
    add_pose_metrics(&table, est, gt_trajectory_for(seq, seq.train_indices));
  }
  if (ablate) table.add_text("ablation", "no_correspondence");
  for (int idx : excluded_tests) {
    table.add_text("excluded_test_" + frame_tag(seq, idx), "diverged");
  }
  table.save((fs::path(out_dir) / "metrics.csv").string());

  write_text((fs::path(out_dir) / "status.txt").string(),
             partial ? "status=partial\n" : "status=ok\n");
  return partial ? kExitStageFailure : kExitOk;
}

int cmd_gradcheck(int seeds, int gaussians, int size, const std::string& loss,
                  const std::string& out_path) {
  std::ostringstream report;
  bool ok = true;
  Intrinsics K;
  K.width = K.height = size;
  K.fx = K.fy = 0.9 * size;
  K.cx = K.cy = 0.5 * size;
  RenderConfig rcfg;

  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    Rng gr = rng.stream("fixture");
    GaussianSet set;
    set.reserve(gaussians);
    for (int i = 0; i < gaussians; ++i) {
      set.push_back(
          {gr.uniform(-1.2, 1.2), gr.uniform(-1.2, 1.2), gr.uniform(3.0, 6.0)},
          Eigen::Vector3d::Constant(std::log(gr.uniform(0.15, 0.4))),
          gr.random_rotation(),
          {gr.uniform(0.1, 0.9), gr.uniform(0.1, 0.9), gr.uniform(0.1, 0.9)},
          logit(gr.uniform(0.2, 0.8)));
    }
    const Se3 transform = se3_exp((Twist() << 0.02, -0.01, 0.015, 0.01,
                                   -0.008, 0.012)
                                      .finished());
    for (const auto mode :
         {GradCheckLoss::Scene, GradCheckLoss::Correspondence}) {
      if (loss == "scene" && mode != GradCheckLoss::Scene) continue;
      if (loss == "correspondence" && mode != GradCheckLoss::Correspondence) {
        continue;
      }
      const GradCheckReport r = check_gradients(
          set, transform, Se3::identity(), K, rcfg, mode, 1000 + s);
      report << "seed " << 1000 + s << " "
             << (mode == GradCheckLoss::Scene ? "scene" : "correspondence")
             << " loss\n"
             << r.to_string() << "\n";
      ok = ok && r.pass;
    }
  }
  std::cout << report.str();
  if (!out_path.empty()) write_text(out_path, report.str());
  return ok ? kExitOk : kExitStageFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"correspondence-guided SfM-free Gaussian splatting"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--gaussians", spec.gaussian_count, "scene Gaussian count");
  synth->add_option("--frames", spec.frames, "frame count");
  synth->add_option("--size", spec.width, "square image size in px");
  synth->add_option("--trajectory", spec.trajectory,
                    "orbit | line | arc | static");
  synth->add_option("--step-fraction", spec.step_fraction,
                    "camera step per frame as a fraction of scene extent");
  synth->add_option("--extent", spec.extent, "scene box side");
  synth->add_option("--fov", spec.fov_deg, "horizontal field of view, deg");
  synth->add_option("--distance", spec.camera_distance, "camera orbit radius");
  synth->add_option("--seed", spec.seed, "generator seed");

  // run
  auto* run = app.add_subcommand("run", "full pipeline: poses, scene, eval");
  std::string run_dataset, run_out;
  ConfigArgs run_cfg;
  int run_test_every = 8;
  bool run_ablate = false;
  run->add_option("--dataset", run_dataset, "dataset directory")->required();
  run->add_option("--out", run_out, "run output directory")->required();
  run->add_option("--test-every", run_test_every,
                  "hold out every Nth frame (0 disables)");
  run->add_flag("--ablate-correspondence", run_ablate,
                "pixel-only ablation: lambda=(0,1,0)");
  add_config_options(run, &run_cfg);

  // estimate-poses
  auto* ep = app.add_subcommand("estimate-poses", "pose stage only");
  std::string ep_dataset, ep_out;
  ConfigArgs ep_cfg;
  int ep_test_every = 8;
  ep->add_option("--dataset", ep_dataset)->required();
  ep->add_option("--out", ep_out)->required();
  ep->add_option("--test-every", ep_test_every);
  add_config_options(ep, &ep_cfg);

  // train-scene
  auto* ts = app.add_subcommand("train-scene", "scene stage with given poses");
  std::string ts_dataset, ts_traj, ts_out;
  ConfigArgs ts_cfg;
  ts->add_option("--dataset", ts_dataset)->required();
  ts->add_option("--trajectory", ts_traj, "trajectory file (poses to use)")
      ->required();
  ts->add_option("--out", ts_out)->required();
  add_config_options(ts, &ts_cfg);

  // render
  auto* rd = app.add_subcommand("render", "render a scene from poses");
  std::string rd_scene, rd_intr, rd_traj, rd_pose, rd_out;
  bool rd_depth = false;
  rd->add_option("--scene", rd_scene, "scene .gsplat file")->required();
  rd->add_option("--intrinsics", rd_intr)->required();
  rd->add_option("--trajectory", rd_traj, "trajectory file to render");
  rd->add_option("--pose", rd_pose, "single pose: tx ty tz qx qy qz qw");
  rd->add_option("--out", rd_out)->required();
  rd->add_flag("--depth", rd_depth, "also write float depth");

  // eval
  auto* ev = app.add_subcommand("eval", "standalone metric computation");
  std::string ev_est, ev_gt, ev_renders, ev_gts, ev_out = "metrics.csv";
  ev->add_option("--est", ev_est, "estimated trajectory");
  ev->add_option("--gt", ev_gt, "ground-truth trajectory");
  ev->add_option("--renders", ev_renders, "rendered image directory");
  ev->add_option("--gts", ev_gts, "ground-truth image directory");
  ev->add_option("--out", ev_out, "metrics CSV path");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  int gc_seeds = 3, gc_gaussians = 12, gc_size = 48;
  std::string gc_loss = "both", gc_out;
  gc->add_option("--seeds", gc_seeds, "number of seeded fixtures");
  gc->add_option("--gaussians", gc_gaussians, "Gaussians per fixture");
  gc->add_option("--size", gc_size, "image size");
  gc->add_option("--loss", gc_loss, "scene | correspondence | both");
  gc->add_option("--out", gc_out, "write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      spec.height = spec.width;
      return cmd_synth(spec, synth_out);
    }
    if (*run) {
      return cmd_run(run_dataset, run_out, resolve_config(run_cfg),
                     run_test_every, run_ablate);
    }
    if (*ep) {
      return cmd_estimate_poses(ep_dataset, ep_out, resolve_config(ep_cfg),
                                ep_test_every);
    }
    if (*ts) {
      return cmd_train_scene(ts_dataset, ts_traj, ts_out,
                             resolve_config(ts_cfg));
    }
    if (*rd) {
      if (rd_traj.empty() == rd_pose.empty()) {
        std::cerr << "render: provide exactly one of --trajectory or --pose\n";
        return kExitUsage;
      }
      return cmd_render(rd_scene, rd_intr, rd_traj, rd_pose, rd_out, rd_depth);
    }
    if (*ev) {
      if ((ev_est.empty() != ev_gt.empty()) ||
          (ev_renders.empty() != ev_gts.empty()) ||
          (ev_est.empty() && ev_renders.empty())) {
        std::cerr << "eval: provide --est/--gt and/or --renders/--gts\n";
        return kExitUsage;
      }
      return cmd_eval(ev_est, ev_gt, ev_renders, ev_gts, ev_out);
    }
    if (*gc) {
      return cmd_gradcheck(gc_seeds, gc_gaussians, gc_size, gc_loss, gc_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitUsage;
}
