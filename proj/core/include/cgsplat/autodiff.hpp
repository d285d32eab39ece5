#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cgsplat/renderer.hpp"

namespace cgsplat {

// Reverse-mode gradients with respect to every Gaussian attribute plus the
// 6-dof twist of a transform applied on top of the set. Rotation gradients
// live in the left (world-side) tangent space: a step d applies as
// quat_exp(d) * q.
struct ParamGradients {
  std::vector<Eigen::Vector3d> d_position;
  std::vector<Eigen::Vector3d> d_log_scale;
  std::vector<Eigen::Vector3d> d_rotation;
  std::vector<Eigen::Vector3d> d_color;
  std::vector<double> d_opacity_logit;

  // Accumulated screen-space positional gradient magnitude and hit count,
  // consumed by the densification schedule.
  std::vector<double> screen_grad_norm;
  std::vector<int> screen_grad_seen;

  Twist d_twist = Twist::Zero();

  void resize(int n);
  void set_zero();
  void accumulate(const ParamGradients& other);
  bool all_finite() const;
  int size() const { return static_cast<int>(d_position.size()); }
};

// Adjoints of the render outputs. Empty images mean zero adjoint. The query
// fields must either all be empty or match the query list length; adjoints
// of invalid queries are ignored.
struct RenderAdjoints {
  Image d_color;
  Image d_depth;
  Image d_alpha;
  std::vector<Eigen::Vector2d> queries;
  std::vector<Eigen::Vector2d> d_q;
  std::vector<double> d_depth_at;
  std::vector<double> d_weight;  // adjoint of the accumulated query weight
  std::vector<Eigen::Vector3d> d_psi;
};

// Exact reverse-mode derivatives of the composited outputs through the
// per-fragment opacities, the projected covariances and the projection.
// Requires sh_degree == 0 in the render config.
ParamGradients backward(const FrameRender& fr, const RenderAdjoints& adj);

// Collapses per-Gaussian gradients of a transformed set into the twist
// gradient of the left-applied transform: a perturbation se3_exp(eps) moves
// every transformed position x to x + v + w x x.
Twist reduce_to_twist(const GaussianSet& transformed,
                      const ParamGradients& grads);

// ---------------------------------------------------------------------------
// Finite-difference verification harness.

enum class GradCheckLoss { Scene, Correspondence };

struct GradCheckClassReport {
  std::string name;
  double worst_abs = 0.0;
  double worst_rel = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckClassReport> classes;
  bool pass = true;
  std::string to_string() const;
};

struct GradCheckOptions {
  double fd_step = 1e-4;
  double tol_abs = 1e-4;
  double tol_rel = 1e-3;
  bool frozen_gaussians = false;  // only the twist gradient is checked
  int query_count = 24;           // correspondence loss query pairs
  double ssim_weight = 0.2;       // scene loss SSIM term weight
};

// Compares analytic gradients against central finite differences for a small
// scene under the chosen loss. The scene is rendered as transform * set from
// the given camera pose.
GradCheckReport check_gradients(const GaussianSet& set, const Se3& transform,
                                const Se3& camera_pose, const Intrinsics& K,
                                const RenderConfig& render_cfg,
                                GradCheckLoss loss, uint64_t seed,
                                const GradCheckOptions& opts = {});

}  // namespace cgsplat
