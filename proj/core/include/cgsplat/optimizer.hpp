#pragma once

#include <Eigen/Core>
#include <vector>

#include "cgsplat/autodiff.hpp"
#include "cgsplat/gaussians.hpp"

namespace cgsplat {

// First-order adaptive stepper (Adam). step() returns the update to add to
// the parameters for the given gradient.
class Adam {
 public:
  explicit Adam(int dim = 0) { resize(dim); }

  void resize(int dim) {
    m_ = Eigen::VectorXd::Zero(dim);
    v_ = Eigen::VectorXd::Zero(dim);
    t_ = 0;
  }

  Eigen::VectorXd step(const Eigen::VectorXd& grad, double lr) {
    ++t_;
    m_ = beta1 * m_ + (1.0 - beta1) * grad;
    v_ = beta2 * v_.array().matrix() +
         (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    return (-lr * (m_ / bc1).array() /
            ((v_ / bc2).array().sqrt() + eps))
        .matrix();
  }

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

 private:
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

// Per-parameter-class learning rates, multiplied by the shared decay factor
// each step.
struct ClassRates {
  double position = 2e-3;
  double log_scale = 5e-3;
  double rotation = 1e-3;
  double color = 2e-2;
  double opacity = 2.5e-2;
  double twist = 5e-3;
};

struct ParamMask {
  bool position = true;
  bool log_scale = true;
  bool rotation = true;
  bool color = true;
  bool opacity = true;
};

// Adam over all Gaussian attribute arrays. Rotations are updated through the
// exp-map retraction so unit norm is preserved exactly.
class GaussianOptimizer {
 public:
  explicit GaussianOptimizer(int n = 0) { reset(n); }

  void reset(int n) {
    position_.resize(3 * n);
    log_scale_.resize(3 * n);
    rotation_.resize(3 * n);
    color_.resize(3 * n);
    opacity_.resize(n);
    n_ = n;
  }

  int size() const { return n_; }

  void step(GaussianSet& set, const ParamGradients& grads,
            const ClassRates& rates, double decay, const ParamMask& mask);

 private:
  Adam position_, log_scale_, rotation_, color_, opacity_;
  int n_ = 0;
};

// Exponential decay from 1 at iteration 0 down to final_ratio at the last
// iteration.
double lr_decay(int iter, int total_iters, double final_ratio);

}  // namespace cgsplat
