#pragma once

#include <Eigen/Core>
#include <vector>

#include "cgsplat/autodiff.hpp"
#include "cgsplat/image.hpp"
#include "cgsplat/renderer.hpp"

namespace cgsplat {

struct LossWeights {
  double lambda1 = 10.0;  // correspondence reprojection term
  double lambda2 = 1.0;   // per-pixel term
  double lambda3 = 1.0;   // correspondence depth term
};

// A loss term that can be inactive when no usable pairs remain; inactive
// terms contribute 0 to the total and are flagged.
struct LossTerm {
  double value = 0.0;
  bool active = false;
};

struct LossBreakdown {
  double cor_rgb = 0.0;
  double pix_rgb = 0.0;
  double cor_depth = 0.0;
  double total = 0.0;
  int m_used = 0;
  bool cor_rgb_active = false;
  bool cor_depth_active = false;
};

// Sum over pairs of the L1 norm of q - k, in pixels. Lists must be equal
// length; empty lists yield an inactive term.
LossTerm loss_cor_rgb(const std::vector<Eigen::Vector2d>& q,
                      const std::vector<Eigen::Vector2d>& k);

// Mean absolute difference over all pixels and channels.
double loss_pix_rgb(const Image& target, const Image& rendered);

// Sum of absolute depth differences over pairs, scene units.
LossTerm loss_cor_depth(const std::vector<double>& d_rendered,
                        const std::vector<double>& d_reference);

LossBreakdown loss_correspondence_total(const LossTerm& cor_rgb,
                                        double pix_rgb,
                                        const LossTerm& cor_depth,
                                        const LossWeights& w);

// Scene-stage photometric objective: mean L1 plus ssim_weight * (1 - SSIM).
double loss_scene(const Image& target, const Image& rendered,
                  double ssim_weight = 0.2);

// Full correspondence objective over surface samples taken at the rendered
// coordinates k'. Invalid (empty-surface) samples are excluded from the
// reprojection and depth terms; m_used counts the survivors.
LossBreakdown correspondence_loss(const Image& target, const Image& rendered,
                                  const SurfaceSamples& samples,
                                  const std::vector<Eigen::Vector2d>& k_target,
                                  const std::vector<double>& ref_depth,
                                  const LossWeights& w);

// Same, also filling the render adjoints (d(loss)/d(rendered image), per
// query d(loss)/dq and d(loss)/d depth). Gradients flow only through the
// rendered quantities, never through the match coordinates.
LossBreakdown correspondence_loss_adjoints(
    const Image& target, const Image& rendered, const SurfaceSamples& samples,
    const std::vector<Eigen::Vector2d>& k_target,
    const std::vector<double>& ref_depth, const LossWeights& w,
    RenderAdjoints* adj);

// Scene loss and its adjoint with respect to the rendered image.
double scene_loss_adjoints(const Image& target, const Image& rendered,
                           double ssim_weight, Image* d_rendered);

}  // namespace cgsplat
