#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>
#include <vector>

#include "cgsplat/geom.hpp"
#include "cgsplat/image.hpp"

namespace cgsplat {

// Peak signal-to-noise ratio in dB over unit-range images, capped at the
// 99 dB sentinel for (near-)identical inputs.
double psnr(const Image& a, const Image& b);

// Windowed SSIM: 11x11 Gaussian window, sigma 1.5, C1=(0.01)^2, C2=(0.03)^2
// on unit range, mean over valid window positions; color images average the
// per-channel values. Images must be at least 11x11.
double ssim(const Image& a, const Image& b);

// SSIM value plus its gradient with respect to the first image.
double ssim_with_gradient(const Image& a, const Image& b, Image* d_a);

struct TrajectoryEntry {
  int index = 0;
  Se3 pose;  // stored as camera-to-world; translation is the camera center
};

struct Trajectory {
  std::vector<TrajectoryEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
  void validate() const;  // strictly increasing indices
  std::vector<Eigen::Vector3d> positions() const;
};

// One line per pose: `index tx ty tz qx qy qz qw`. Parse failures report the
// offending line number.
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const Trajectory& t, const std::string& path);

struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation{0.0, 0.0, 0.0};

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
};

// Closed-form least-squares similarity aligning est positions onto gt
// positions (Umeyama). Requires equal lengths >= 3 and a non-collinear
// configuration.
SimilarityTransform umeyama_align(const Trajectory& est, const Trajectory& gt);

// RMSE of position differences, optionally after Umeyama alignment of est
// onto gt. Units follow the ground-truth scale.
double ate(const Trajectory& est, const Trajectory& gt, bool align);

struct RpeResult {
  double rpe_t = 0.0;      // RMSE of relative translation error norms, x100
  double rpe_r_deg = 0.0;  // RMSE of relative rotation error angles, degrees
};

RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta = 1);

// Applies a similarity to every pose of a trajectory (rotating the
// orientation part and mapping the center), used to report aligned metrics.
Trajectory apply_similarity(const Trajectory& t, const SimilarityTransform& s);

}  // namespace cgsplat
