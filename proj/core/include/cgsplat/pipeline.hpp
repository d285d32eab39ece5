#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "cgsplat/correspond.hpp"
#include "cgsplat/eval.hpp"
#include "cgsplat/gaussians.hpp"
#include "cgsplat/losses.hpp"
#include "cgsplat/optimizer.hpp"
#include "cgsplat/renderer.hpp"

namespace cgsplat {

// An ordered sequence of frames sharing one camera, with optional
// ground-truth depth maps and poses (synthetic mode).
struct FrameSequence {
  std::vector<Image> images;
  std::vector<Image> depths;  // empty Image where unavailable
  Intrinsics intrinsics;
  std::vector<Se3> gt_world_to_cam;  // empty when no ground truth
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  std::vector<std::string> frame_names;

  int count() const { return static_cast<int>(images.size()); }
  bool has_gt() const { return !gt_world_to_cam.empty(); }
  bool has_depth(int i) const {
    return i < static_cast<int>(depths.size()) && !depths[i].empty();
  }
};

enum class MatchMode { Oracle, GridNcc };

struct PipelineConfig {
  uint64_t seed = 1;

  LossWeights weights;      // lambda1..3, paper defaults 10/1/1
  // Scale on the per-pixel term inside the pipeline objective; 0 means the
  // pixel*channel count, i.e. the L1 image norm read as a sum so it is
  // commensurate with the per-pair sums of the correspondence terms.
  double pix_gain = 0.0;
  double ssim_weight = 0.2;

  // Base schedule; the per-class rates decay by lr_final/lr_init over each
  // stage's iterations.
  double lr_init = 1e-5;
  double lr_final = 1e-6;
  ClassRates rates;

  int iters_fit = 300;
  int iters_pose = 300;
  int iters_scene = 5000;

  int cache_interval = 50;  // correspondence refresh interval H
  int match_samples = 256;
  double match_noise = 1.0;  // oracle pixel noise sigma
  int min_pairs = 8;
  MatchMode match_mode = MatchMode::Oracle;
  int ncc_patch = 7;
  int ncc_stride = 4;
  int ncc_radius = 6;

  int init_stride = 2;
  double init_opacity = 0.1;

  int densify_interval = 100;
  int densify_start = 500;
  int densify_end = 15000;
  DensifyOptions densify;
  int opacity_reset_interval = 0;  // 0 disables periodic resets
  double opacity_ceiling = 0.99;

  Eigen::Vector3d background{0.0, 0.0, 0.0};
  int workers = 1;
  int sh_degree = 0;

  double divergence_factor = 10.0;
  int divergence_window = 100;
  bool optimize_positions_in_fit = false;
  // Refine matched pairs to the dominant splat's projected center before
  // scoring (both sides shifted equally).
  bool snap_pairs = true;

  double depth_noise = 0.0;  // multiplicative noise on provided depth

  RenderConfig render_config() const {
    RenderConfig rc;
    rc.background = background;
    rc.workers = workers;
    rc.sh_degree = sh_degree;
    return rc;
  }
  double decay_ratio() const { return lr_final / lr_init; }
};

// Ground-truth (or file-provided) depth access with optional multiplicative
// noise, seeded per frame.
class DepthProvider {
 public:
  DepthProvider(const FrameSequence& seq, double noise, uint64_t seed)
      : seq_(&seq), noise_(noise), seed_(seed) {}
  Image depth(int frame) const;

 private:
  const FrameSequence* seq_;
  double noise_;
  uint64_t seed_;
};

struct TrainLogRow {
  int iter = 0;
  LossBreakdown loss;
};
using TrainLog = std::vector<TrainLogRow>;

// CSV: iter,cor_rgb,pix_rgb,cor_depth,total,M_used
void save_train_log(const TrainLog& log, const std::string& path);

// One Gaussian per sampled depth pixel, back-projected at identity pose.
// Isotropic scale from the mean distance to the 3 nearest sampled neighbors.
// Throws DegenerateInput when fewer than 8 valid depth pixels exist.
GaussianSet init_from_depth(const Image& image, const Image& depth,
                            const Intrinsics& K, int stride,
                            double init_opacity = 0.1);

struct FitResult {
  GaussianSet set;
  double final_total = 0.0;
  double final_pix = 0.0;
  bool ok = true;
};

// Per-frame Gaussian fit: minimizes the correspondence loss over the Gaussian
// attributes (positions optional, off by default). The matcher compares the
// evolving render against the fixed target.
FitResult fit_frame_gaussians(const GaussianSet& init, const Image& target,
                              const Image& reference_depth,
                              const Intrinsics& K, Matcher& matcher,
                              const PipelineConfig& cfg,
                              TrainLog* log = nullptr);

// Lets a running pose optimization publish its current hypothesis view pose
// (in ground-truth world coordinates) to an oracle matcher.
struct HypothesisHandle {
  Se3 pose;
};

struct PoseEstimate {
  Se3 transform;
  bool diverged = false;
  double final_total = 0.0;
  int matcher_calls = 0;
};

// Frozen-Gaussian relative pose: optimizes only the 6-dof twist of a
// transform applied to the set, rendered from an identity camera.
// hypothesis_anchor is the frozen set's frame expressed in ground-truth world
// coordinates; compose(T, anchor) is published through the handle for oracle
// matching.
PoseEstimate estimate_relative_pose(
    const GaussianSet& frozen, const Image& target,
    const Image& reference_depth, const Intrinsics& K, Matcher& matcher,
    const PipelineConfig& cfg, const Se3& init = {},
    const std::shared_ptr<HypothesisHandle>& hypothesis = nullptr,
    const Se3& hypothesis_anchor = {}, TrainLog* log = nullptr);

struct PoseChain {
  std::vector<Se3> relative;  // T_t between consecutive training frames
  std::vector<Se3> absolute;  // world-to-camera, absolute[0] = identity
  std::vector<uint8_t> diverged;

  static std::vector<Se3> accumulate(const std::vector<Se3>& relative);
};

struct PoseStageResult {
  PoseChain chain;
  std::vector<double> fit_final_pix;
  int matcher_calls = 0;
  bool any_failure = false;
};

// Chains fit + relative pose over the training frames: fit G_t, estimate
// T_t toward frame t+1, warm-start the next fit from the transformed set.
PoseStageResult run_pose_stage(const FrameSequence& seq,
                               const PipelineConfig& cfg,
                               std::vector<TrainLog>* fit_logs = nullptr,
                               std::vector<TrainLog>* pose_logs = nullptr);

struct SceneStageResult {
  GaussianSet scene;
  TrainLog log;
  bool ok = true;
};

// Scene optimization with fixed poses: random frame sampling, photometric
// loss, densify/prune and opacity adjustment on the configured schedule.
// train_poses must be world-to-camera, one per training frame; they are
// re-anchored so the first training pose is the identity.
SceneStageResult run_scene_stage(const FrameSequence& seq,
                                 const std::vector<Se3>& train_poses,
                                 const PipelineConfig& cfg);

// Frozen-scene pose recovery for a held-out view, initialized from a nearby
// training pose. Same machinery as estimate_relative_pose; scene_anchor is
// the scene frame expressed in ground-truth world coordinates (identity when
// the scene frame is the ground-truth first camera).
PoseEstimate estimate_test_pose(
    const GaussianSet& scene, const Image& test_image,
    const Image& reference_depth, const Intrinsics& K, const Se3& init_pose,
    Matcher& matcher, const PipelineConfig& cfg,
    const std::shared_ptr<HypothesisHandle>& hypothesis = nullptr,
    const Se3& scene_anchor = {}, TrainLog* log = nullptr);

}  // namespace cgsplat
