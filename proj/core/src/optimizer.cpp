#include "cgsplat/optimizer.hpp"

#include "cgsplat/errors.hpp"

namespace cgsplat {

namespace {

Eigen::VectorXd flatten3(const std::vector<Eigen::Vector3d>& v) {
  Eigen::VectorXd out(3 * v.size());
  for (size_t i = 0; i < v.size(); ++i) out.segment<3>(3 * i) = v[i];
  return out;
}

}  // namespace

void GaussianOptimizer::step(GaussianSet& set, const ParamGradients& grads,
                             const ClassRates& rates, double decay,
                             const ParamMask& mask) {
  if (set.size() != n_ || grads.size() != n_) {
    throw ContractViolation("GaussianOptimizer::step: size mismatch");
  }
  if (mask.position) {
    const Eigen::VectorXd d =
        position_.step(flatten3(grads.d_position), rates.position * decay);
    for (int i = 0; i < n_; ++i) set.positions[i] += d.segment<3>(3 * i);
  }
  if (mask.log_scale) {
    const Eigen::VectorXd d = log_scale_.step(flatten3(grads.d_log_scale),
                                              rates.log_scale * decay);
    for (int i = 0; i < n_; ++i) set.log_scales[i] += d.segment<3>(3 * i);
  }
  if (mask.rotation) {
    const Eigen::VectorXd d =
        rotation_.step(flatten3(grads.d_rotation), rates.rotation * decay);
    for (int i = 0; i < n_; ++i) {
      set.rotations[i] =
          (quat_exp(d.segment<3>(3 * i)) * set.rotations[i]).normalized();
    }
  }
  if (mask.color) {
    const Eigen::VectorXd d =
        color_.step(flatten3(grads.d_color), rates.color * decay);
    for (int i = 0; i < n_; ++i) set.colors[i] += d.segment<3>(3 * i);
  }
  if (mask.opacity) {
    Eigen::VectorXd g(n_);
    for (int i = 0; i < n_; ++i) g[i] = grads.d_opacity_logit[i];
    const Eigen::VectorXd d = opacity_.step(g, rates.opacity * decay);
    for (int i = 0; i < n_; ++i) set.opacity_logits[i] += d[i];
  }
}

double lr_decay(int iter, int total_iters, double final_ratio) {
  if (total_iters <= 1) return 1.0;
  const double t = static_cast<double>(iter) / (total_iters - 1);
  return std::pow(final_ratio, t);
}

}  // namespace cgsplat
