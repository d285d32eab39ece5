#include "cgsplat/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cgsplat/errors.hpp"
#include "cgsplat/renderer.hpp"
#include "cgsplat/rng.hpp"

namespace cgsplat {

namespace {

Se3 look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  Eigen::Vector3d z = (target - center).normalized();
  Eigen::Vector3d up(0.0, 1.0, 0.0);
  if (std::abs(z.dot(up)) > 0.999) up = {1.0, 0.0, 0.0};
  const Eigen::Vector3d x = up.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  Se3 pose;
  pose.rotation = Eigen::Quaterniond(r).normalized();
  pose.translation = -(pose.rotation * center);
  return pose;
}

}  // namespace

SynthScene make_synth_scene(const SynthSpec& spec) {
  if (spec.frames < 1 || spec.gaussian_count < 1) {
    throw ContractViolation("make_synth_scene: bad spec");
  }
  Rng rng(spec.seed);
  Rng gr = rng.stream("scene");

  GaussianSet set;
  set.reserve(spec.gaussian_count);
  const double half = 0.5 * spec.extent;
  for (int i = 0; i < spec.gaussian_count; ++i) {
    const Eigen::Vector3d pos(gr.uniform(-half, half), gr.uniform(-half, half),
                              gr.uniform(-half, half));
    const double base_sigma = 0.12 * spec.extent / 3.0;
    const Eigen::Vector3d sigma(
        gr.uniform(base_sigma, 3.5 * base_sigma),
        gr.uniform(base_sigma, 3.5 * base_sigma),
        gr.uniform(base_sigma, 3.5 * base_sigma));
    const Eigen::Vector3d color(gr.uniform(0.05, 0.95),
                                gr.uniform(0.05, 0.95),
                                gr.uniform(0.05, 0.95));
    const double opacity = gr.uniform(0.75, 0.97);
    set.push_back(pos, sigma.array().log().matrix(), gr.random_rotation(),
                  color, logit(opacity));
  }

  const double scene_extent = std::max(set.extent(), 1e-6);
  const double step = spec.step_fraction * scene_extent;
  const double radius = spec.camera_distance;

  std::vector<Se3> poses;
  poses.reserve(spec.frames);
  for (int t = 0; t < spec.frames; ++t) {
    Se3 w;
    if (spec.trajectory == "static") {
      w = look_at({0.0, 0.0, -radius}, Eigen::Vector3d::Zero());
    } else if (spec.trajectory == "line") {
      const Eigen::Vector3d c(t * step, 0.0, -radius);
      w = look_at(c, {c.x(), 0.0, 0.0});
    } else if (spec.trajectory == "arc") {
      const double theta = t * step / radius;
      const Eigen::Vector3d c(radius * std::sin(theta),
                              0.25 * radius * std::sin(1.7 * theta),
                              -radius * std::cos(theta));
      w = look_at(c, Eigen::Vector3d::Zero());
    } else {  // orbit
      const double theta = t * step / radius;
      const Eigen::Vector3d c(radius * std::sin(theta), 0.0,
                              -radius * std::cos(theta));
      w = look_at(c, Eigen::Vector3d::Zero());
    }
    poses.push_back(w);
  }

  // Re-anchor everything to the first camera's frame so the generated
  // trajectory starts at the identity, matching the pipeline's convention.
  SynthScene out;
  const Se3 w0 = poses[0];
  out.set = transform_set(set, w0);
  const Se3 w0_inv = w0.inverse();
  for (const Se3& w : poses) {
    out.world_to_cam.push_back(compose(w, w0_inv).normalized());
  }

  out.intrinsics.width = spec.width;
  out.intrinsics.height = spec.height;
  const double f =
      0.5 * spec.width / std::tan(0.5 * spec.fov_deg * M_PI / 180.0);
  out.intrinsics.fx = out.intrinsics.fy = f;
  out.intrinsics.cx = 0.5 * spec.width;
  out.intrinsics.cy = 0.5 * spec.height;
  return out;
}

namespace {

// Ground-truth depth: alpha-normalized blended depth where the scene is
// opaque enough to define a surface, 0 (invalid) elsewhere.
Image surface_depth(const RenderOutput& out, double min_alpha = 0.5) {
  Image d = out.depth;
  for (int y = 0; y < d.height(); ++y) {
    for (int x = 0; x < d.width(); ++x) {
      const double a = out.alpha.at(y, x);
      d.at(y, x) = a >= min_alpha ? d.at(y, x) / a : 0.0;
    }
  }
  return d;
}

}  // namespace

FrameSequence synth_sequence(const SynthSpec& spec, int test_every) {
  const SynthScene scene = make_synth_scene(spec);
  FrameSequence seq;
  seq.intrinsics = scene.intrinsics;
  RenderConfig rcfg;
  for (int t = 0; t < spec.frames; ++t) {
    const RenderOutput out =
        render(scene.set, scene.world_to_cam[t], scene.intrinsics, rcfg);
    seq.images.push_back(out.color);
    seq.depths.push_back(surface_depth(out));
    seq.gt_world_to_cam.push_back(scene.world_to_cam[t]);
    seq.frame_names.push_back("synth_" + std::to_string(t));
    if (test_every > 0 && (t + 1) % test_every == 0) {
      seq.test_indices.push_back(t);
    } else {
      seq.train_indices.push_back(t);
    }
  }
  return seq;
}

void write_synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) {
    throw IoError("cannot create dataset directory: " + out_dir);
  }

  const SynthScene scene = make_synth_scene(spec);
  RenderConfig rcfg;
  Trajectory gt;
  char name[64];
  for (int t = 0; t < spec.frames; ++t) {
    const RenderOutput out =
        render(scene.set, scene.world_to_cam[t], scene.intrinsics, rcfg);
    const Image depth = surface_depth(out);
    std::snprintf(name, sizeof(name), "frame_%04d.png", t);
    write_png(out.color, (fs::path(out_dir) / name).string());
    std::snprintf(name, sizeof(name), "depth_%04d.bin", t);
    write_depth_bin(depth, (fs::path(out_dir) / name).string());
    std::snprintf(name, sizeof(name), "depth_%04d.png", t);
    write_depth_png16(depth, (fs::path(out_dir) / name).string());
    gt.entries.push_back({t, scene.world_to_cam[t].inverse()});
  }
  scene.intrinsics.save((fs::path(out_dir) / "intrinsics.txt").string());
  save_trajectory(gt, (fs::path(out_dir) / "traj_gt.txt").string());
  save_gaussians(scene.set, (fs::path(out_dir) / "scene_gt.gsplat").string());

  std::ofstream meta((fs::path(out_dir) / "synth_spec.txt").string());
  meta << "gaussian_count=" << spec.gaussian_count << "\n"
       << "extent=" << spec.extent << "\n"
       << "trajectory=" << spec.trajectory << "\n"
       << "frames=" << spec.frames << "\n"
       << "width=" << spec.width << "\n"
       << "height=" << spec.height << "\n"
       << "step_fraction=" << spec.step_fraction << "\n"
       << "fov_deg=" << spec.fov_deg << "\n"
       << "camera_distance=" << spec.camera_distance << "\n"
       << "seed=" << spec.seed << "\n";
}

}  // namespace cgsplat
