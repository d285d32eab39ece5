#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "cgsplat/gaussians.hpp"
#include "cgsplat/geom.hpp"
#include "cgsplat/image.hpp"

namespace cgsplat {

struct RenderConfig {
  Eigen::Vector3d background{0.0, 0.0, 0.0};
  // A fragment influences a pixel iff its blended opacity there is at least
  // alpha_min. Kept far below visibility so the influence cutoff cannot
  // perturb finite-difference gradient checks.
  double alpha_min = 1e-12;
  double transmittance_min = 1e-4;  // front-to-back early termination
  double dilation = 0.3;            // px^2 added to projected covariance
  double query_weight_min = 1e-4;   // below this a surface query is empty
  int tile_size = 16;
  int sh_degree = 0;  // 0 = base color only; 1 adds first-order view terms
  int workers = 1;
};

struct RenderOutput {
  Image color;  // HxWx3
  Image depth;  // HxW, alpha-blended camera-frame z, 0 where empty
  Image alpha;  // HxW accumulated opacity
  bool all_culled = false;
};

// Per-query outputs of the approximate surface renderer: the alpha-blended
// world-space center Psi, the blended camera depth, the accumulated weight,
// and the screen-space reprojection q of Psi. Entries with weight below
// query_weight_min (or an unprojectable Psi) are flagged invalid and must be
// excluded from losses.
struct SurfaceSamples {
  std::vector<Eigen::Vector2d> query;
  std::vector<Eigen::Vector3d> psi;
  std::vector<double> depth;
  std::vector<double> weight;
  std::vector<Eigen::Vector2d> q;
  std::vector<uint8_t> valid;

  int size() const { return static_cast<int>(query.size()); }
  int valid_count() const;
};

// One forward rasterization of a GaussianSet from a camera pose. Retains the
// projected splats and tile bins so the gradient pass and surface queries can
// re-walk the exact compositing order. The GaussianSet must outlive this
// object.
class FrameRender {
 public:
  struct Splat {
    int gaussian = -1;
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d cov2d;    // dilated
    Eigen::Matrix2d inv_cov;  // of the dilated covariance
    Eigen::Vector3d cam_pos;
    Eigen::Vector3d world_pos;
    Eigen::Vector3d color;  // view-evaluated
    Eigen::Vector2d lo, hi;  // continuous influence bounds in pixels
    double opacity = 0.0;
  };

  FrameRender(const GaussianSet& set, const Se3& pose, const Intrinsics& K,
              const RenderConfig& cfg = {});

  const RenderOutput& image() const { return output_; }
  SurfaceSamples sample_surface(
      const std::vector<Eigen::Vector2d>& queries) const;

  const GaussianSet& set() const { return *set_; }
  const Se3& pose() const { return pose_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  const RenderConfig& config() const { return cfg_; }
  const std::vector<Splat>& splats() const { return splats_; }
  bool all_culled() const { return output_.all_culled; }

  // Depth-ordered indices of splats that may influence the continuous pixel
  // position p. Throws if p is outside [0, W-1] x [0, H-1].
  const std::vector<int>& splats_for_point(const Eigen::Vector2d& p) const;

  // Rank of the largest-weight fragment at p, or -1 when nothing reaches it.
  int dominant_splat(const Eigen::Vector2d& p) const;

  // Walks the fragments covering p front to back, invoking
  // visit(splat_rank, alpha, transmittance_before) for each contributing
  // fragment, with the same inclusion and termination rules as the image
  // pass. Returns the final transmittance.
  template <typename Visit>
  double walk_point(const Eigen::Vector2d& p, Visit&& visit) const {
    double t = 1.0;
    for (int rank : splats_for_point(p)) {
      const Splat& s = splats_[rank];
      if (p.x() < s.lo.x() || p.x() > s.hi.x() || p.y() < s.lo.y() ||
          p.y() > s.hi.y()) {
        continue;
      }
      const Eigen::Vector2d d = p - s.mean2d;
      const double m2 = d.dot(s.inv_cov * d);
      const double alpha = s.opacity * std::exp(-0.5 * m2);
      if (alpha < cfg_.alpha_min) continue;
      visit(rank, alpha, t);
      t *= 1.0 - alpha;
      if (t < cfg_.transmittance_min) break;
    }
    return t;
  }

 private:
  void project_all();
  void rasterize();
  void rasterize_tile(int tx, int ty);

  const GaussianSet* set_;
  Se3 pose_;
  Intrinsics intrinsics_;
  RenderConfig cfg_;

  std::vector<Splat> splats_;  // visible only, sorted by (depth, gaussian)
  int tiles_x_ = 0, tiles_y_ = 0;
  std::vector<std::vector<int>> tile_splats_;
  RenderOutput output_;
};

// Convenience wrappers matching the operation-level surface.
RenderOutput render(const GaussianSet& set, const Se3& pose,
                    const Intrinsics& K, const RenderConfig& cfg = {});
SurfaceSamples render_surface_points(const GaussianSet& set, const Se3& pose,
                                     const Intrinsics& K,
                                     const std::vector<Eigen::Vector2d>& queries,
                                     const RenderConfig& cfg = {});

}  // namespace cgsplat
