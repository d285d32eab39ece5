#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <string>
#include <vector>

#include "cgsplat/geom.hpp"
#include "cgsplat/rng.hpp"

namespace cgsplat {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

constexpr int kShCoeffs = 45;  // 15 per channel, degrees 1..3
using ShVector = Eigen::Matrix<double, kShCoeffs, 1>;

// Explicit scene: struct-of-arrays over Gaussian attributes. Scales are kept
// as logs and opacities as pre-sigmoid logits so unconstrained gradient steps
// stay in-domain.
struct GaussianSet {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> log_scales;
  std::vector<Eigen::Quaterniond> rotations;
  std::vector<Eigen::Vector3d> colors;  // base color, [0,1]
  std::vector<ShVector> sh;             // optional view dependence, default 0
  std::vector<double> opacity_logits;

  int size() const { return static_cast<int>(positions.size()); }
  bool empty() const { return positions.empty(); }

  double opacity(int i) const { return sigmoid(opacity_logits[i]); }
  Eigen::Vector3d scale(int i) const {
    return log_scales[i].array().exp().matrix();
  }

  void reserve(int n);
  void push_back(const Eigen::Vector3d& position,
                 const Eigen::Vector3d& log_scale,
                 const Eigen::Quaterniond& rotation,
                 const Eigen::Vector3d& color, double opacity_logit);
  void normalize_rotations();

  // Diagonal length of the positions' bounding box.
  double extent() const;

  // FNV-1a over all parameter bytes; used to assert frozen-Gaussian runs
  // leave the set untouched.
  uint64_t parameter_checksum() const;
};

// Sigma = R * diag(s^2) * R^T for one Gaussian. Symmetric PSD by
// construction.
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale,
                                 const Eigen::Quaterniond& rotation);
Eigen::Matrix3d build_covariance(const GaussianSet& g, int i);

// Screen-space covariance Sigma2D = J R Sigma R^T J^T with J the projection
// Jacobian at the camera-frame center (Eq. of the affine splat
// approximation). No dilation applied here. Throws BehindCameraError if
// mu_cam.z <= kNearPlane.
Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma,
                                   const Se3& pose,
                                   const Eigen::Vector3d& mu_cam,
                                   const Intrinsics& K);

// Rigid transform of the whole set: positions mapped, rotations left-composed
// with the transform's rotation; scales, colors, SH and opacities unchanged.
GaussianSet transform_set(const GaussianSet& g, const Se3& t);

struct DensifyOptions {
  double grad_threshold = 2e-4;      // mean screen-space positional gradient
  double prune_opacity = 0.005;      // remove below this opacity
  double split_scale_fraction = 0.01;  // of scene extent; above -> split
  double split_scale_shrink = 1.6;   // children scale reduction
  uint64_t seed = 0;
};

struct DensifyResult {
  GaussianSet set;
  int cloned = 0;
  int split = 0;
  int pruned = 0;
  bool prune_refused = false;  // pruning would have emptied the set
};

// grad_stats holds per-Gaussian mean positional (screen-space) gradient
// magnitudes; must have length == g.size().
DensifyResult densify_and_prune(const GaussianSet& g,
                                const std::vector<double>& grad_stats,
                                const DensifyOptions& opts);

enum class OpacityAdjustMode { Clamp, Reset };

// Clamp mode caps opacities at `ceiling`; reset mode lowers all opacities to
// at most `reset_target`.
GaussianSet adjust_opacity(const GaussianSet& g, OpacityAdjustMode mode,
                           double ceiling = 0.99, double reset_target = 0.01);

// Binary point-cloud serialization: magic tag, count, then per-Gaussian
// little-endian float32 records (position, log-scale, quaternion wxyz, color,
// 45 SH values, opacity logit).
void save_gaussians(const GaussianSet& g, const std::string& path);
GaussianSet load_gaussians(const std::string& path);

// Plain-text PLY export for visualization (positions + 8-bit colors +
// opacity).
void export_ply(const GaussianSet& g, const std::string& path);

}  // namespace cgsplat
