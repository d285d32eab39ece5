#include "cgsplat/losses.hpp"

#include <cmath>

#include "cgsplat/errors.hpp"
#include "cgsplat/eval.hpp"

namespace cgsplat {

namespace {
double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

LossTerm loss_cor_rgb(const std::vector<Eigen::Vector2d>& q,
                      const std::vector<Eigen::Vector2d>& k) {
  if (q.size() != k.size()) {
    throw ContractViolation("loss_cor_rgb: list length mismatch");
  }
  if (q.empty()) return {0.0, false};
  double sum = 0.0;
  for (size_t i = 0; i < q.size(); ++i) {
    sum += (q[i] - k[i]).cwiseAbs().sum();
  }
  return {sum, true};
}

double loss_pix_rgb(const Image& target, const Image& rendered) {
  if (!target.same_shape(rendered)) {
    throw ContractViolation("loss_pix_rgb: image shape mismatch");
  }
  double sum = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    sum += std::abs(rendered.data()[i] - target.data()[i]);
  }
  return sum / static_cast<double>(target.size());
}

LossTerm loss_cor_depth(const std::vector<double>& d_rendered,
                        const std::vector<double>& d_reference) {
  if (d_rendered.size() != d_reference.size()) {
    throw ContractViolation("loss_cor_depth: list length mismatch");
  }
  if (d_rendered.empty()) return {0.0, false};
  double sum = 0.0;
  for (size_t i = 0; i < d_rendered.size(); ++i) {
    sum += std::abs(d_rendered[i] - d_reference[i]);
  }
  return {sum, true};
}

LossBreakdown loss_correspondence_total(const LossTerm& cor_rgb,
                                        double pix_rgb,
                                        const LossTerm& cor_depth,
                                        const LossWeights& w) {
  if (w.lambda1 < 0.0 || w.lambda2 < 0.0 || w.lambda3 < 0.0) {
    throw ContractViolation("loss weights must be non-negative");
  }
  LossBreakdown b;
  b.cor_rgb = cor_rgb.active ? cor_rgb.value : 0.0;
  b.pix_rgb = pix_rgb;
  b.cor_depth = cor_depth.active ? cor_depth.value : 0.0;
  b.cor_rgb_active = cor_rgb.active;
  b.cor_depth_active = cor_depth.active;
  b.total = w.lambda1 * b.cor_rgb + w.lambda2 * b.pix_rgb +
            w.lambda3 * b.cor_depth;
  return b;
}

double loss_scene(const Image& target, const Image& rendered,
                  double ssim_weight) {
  if (!target.same_shape(rendered)) {
    throw ContractViolation("loss_scene: image shape mismatch");
  }
  return loss_pix_rgb(target, rendered) +
         ssim_weight * (1.0 - ssim(rendered, target));
}

namespace {

LossBreakdown correspondence_loss_impl(
    const Image& target, const Image& rendered, const SurfaceSamples& samples,
    const std::vector<Eigen::Vector2d>& k_target,
    const std::vector<double>& ref_depth, const LossWeights& w,
    RenderAdjoints* adj) {
  if (samples.size() != static_cast<int>(k_target.size()) ||
      samples.size() != static_cast<int>(ref_depth.size())) {
    throw ContractViolation("correspondence_loss: pair list length mismatch");
  }
  std::vector<Eigen::Vector2d> q_used, k_used;
  std::vector<double> d_hat_used, d_ref_used;
  for (int j = 0; j < samples.size(); ++j) {
    if (!samples.valid[j]) continue;
    q_used.push_back(samples.q[j]);
    k_used.push_back(k_target[j]);
    // The blended depth scales with the accumulated weight; normalize so the
    // comparison against reference surface depth is unbiased on
    // semi-transparent regions.
    d_hat_used.push_back(samples.depth[j] / samples.weight[j]);
    d_ref_used.push_back(ref_depth[j]);
  }
  const LossTerm cor = loss_cor_rgb(q_used, k_used);
  const LossTerm dep = loss_cor_depth(d_hat_used, d_ref_used);
  const double pix = loss_pix_rgb(target, rendered);
  LossBreakdown b = loss_correspondence_total(cor, pix, dep, w);
  b.m_used = static_cast<int>(q_used.size());

  if (adj != nullptr) {
    adj->queries = samples.query;
    adj->d_q.assign(samples.size(), Eigen::Vector2d::Zero());
    adj->d_depth_at.assign(samples.size(), 0.0);
    adj->d_weight.assign(samples.size(), 0.0);
    for (int j = 0; j < samples.size(); ++j) {
      if (!samples.valid[j]) continue;
      adj->d_q[j] = w.lambda1 * Eigen::Vector2d(
                                    sgn(samples.q[j].x() - k_target[j].x()),
                                    sgn(samples.q[j].y() - k_target[j].y()));
      const double wq = samples.weight[j];
      const double s =
          w.lambda3 * sgn(samples.depth[j] / wq - ref_depth[j]);
      adj->d_depth_at[j] = s / wq;
      adj->d_weight[j] = -s * samples.depth[j] / (wq * wq);
    }
    adj->d_color = Image(rendered.height(), rendered.width(), 3);
    const double inv_n = 1.0 / static_cast<double>(rendered.size());
    for (size_t i = 0; i < rendered.size(); ++i) {
      adj->d_color.data()[i] =
          w.lambda2 * inv_n * sgn(rendered.data()[i] - target.data()[i]);
    }
  }
  return b;
}

}  // namespace

LossBreakdown correspondence_loss(const Image& target, const Image& rendered,
                                  const SurfaceSamples& samples,
                                  const std::vector<Eigen::Vector2d>& k_target,
                                  const std::vector<double>& ref_depth,
                                  const LossWeights& w) {
  return correspondence_loss_impl(target, rendered, samples, k_target,
                                  ref_depth, w, nullptr);
}

LossBreakdown correspondence_loss_adjoints(
    const Image& target, const Image& rendered, const SurfaceSamples& samples,
    const std::vector<Eigen::Vector2d>& k_target,
    const std::vector<double>& ref_depth, const LossWeights& w,
    RenderAdjoints* adj) {
  return correspondence_loss_impl(target, rendered, samples, k_target,
                                  ref_depth, w, adj);
}

double scene_loss_adjoints(const Image& target, const Image& rendered,
                           double ssim_weight, Image* d_rendered) {
  if (!target.same_shape(rendered)) {
    throw ContractViolation("scene_loss_adjoints: image shape mismatch");
  }
  Image d_ssim;
  const double s = ssim_with_gradient(rendered, target, &d_ssim);
  const double l1 = loss_pix_rgb(target, rendered);
  *d_rendered = Image(rendered.height(), rendered.width(),
                      rendered.channels());
  const double inv_n = 1.0 / static_cast<double>(rendered.size());
  for (size_t i = 0; i < rendered.size(); ++i) {
    d_rendered->data()[i] =
        inv_n * sgn(rendered.data()[i] - target.data()[i]) -
        ssim_weight * d_ssim.data()[i];
  }
  return l1 + ssim_weight * (1.0 - s);
}

}  // namespace cgsplat
