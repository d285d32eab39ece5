#include "cgsplat/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "cgsplat/errors.hpp"
#include "cgsplat/losses.hpp"
#include "cgsplat/rng.hpp"

namespace cgsplat {

void ParamGradients::resize(int n) {
  d_position.assign(n, Eigen::Vector3d::Zero());
  d_log_scale.assign(n, Eigen::Vector3d::Zero());
  d_rotation.assign(n, Eigen::Vector3d::Zero());
  d_color.assign(n, Eigen::Vector3d::Zero());
  d_opacity_logit.assign(n, 0.0);
  screen_grad_norm.assign(n, 0.0);
  screen_grad_seen.assign(n, 0);
  d_twist.setZero();
}

void ParamGradients::set_zero() { resize(size()); }

void ParamGradients::accumulate(const ParamGradients& other) {
  if (other.size() != size()) {
    throw ContractViolation("ParamGradients::accumulate: size mismatch");
  }
  for (int i = 0; i < size(); ++i) {
    d_position[i] += other.d_position[i];
    d_log_scale[i] += other.d_log_scale[i];
    d_rotation[i] += other.d_rotation[i];
    d_color[i] += other.d_color[i];
    d_opacity_logit[i] += other.d_opacity_logit[i];
    screen_grad_norm[i] += other.screen_grad_norm[i];
    screen_grad_seen[i] += other.screen_grad_seen[i];
  }
  d_twist += other.d_twist;
}

bool ParamGradients::all_finite() const {
  for (int i = 0; i < size(); ++i) {
    if (!d_position[i].allFinite() || !d_log_scale[i].allFinite() ||
        !d_rotation[i].allFinite() || !d_color[i].allFinite() ||
        !std::isfinite(d_opacity_logit[i])) {
      return false;
    }
  }
  return d_twist.allFinite();
}

namespace {

struct SplatAcc {
  Eigen::Vector2d d_mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d d_inv_cov = Eigen::Matrix2d::Zero();
  double d_camz = 0.0;
  Eigen::Vector3d d_world = Eigen::Vector3d::Zero();
  bool touched = false;
};

struct Fragment {
  int rank;
  double alpha;
  double t;      // transmittance before this fragment
  double udot;   // payload-adjoint dot product
};

// Shared reverse compositing scan. Calls emit(fragment, d_alpha, weight)
// front fragments last. suffix_init carries the background adjoint term for
// image pixels.
template <typename Emit>
void reverse_scan(std::vector<Fragment>& frags, double suffix_init,
                  Emit&& emit) {
  double suffix = suffix_init;
  for (int i = static_cast<int>(frags.size()) - 1; i >= 0; --i) {
    const Fragment& f = frags[i];
    const double weight = f.alpha * f.t;
    const double d_alpha = f.t * f.udot - suffix / (1.0 - f.alpha);
    suffix += weight * f.udot;
    emit(f, d_alpha, weight);
  }
}

}  // namespace

ParamGradients backward(const FrameRender& fr, const RenderAdjoints& adj) {
  const GaussianSet& set = fr.set();
  const Intrinsics& K = fr.intrinsics();
  const RenderConfig& cfg = fr.config();
  if (cfg.sh_degree != 0) {
    throw ContractViolation("backward: sh_degree must be 0");
  }
  const bool have_color = !adj.d_color.empty();
  const bool have_depth = !adj.d_depth.empty();
  const bool have_alpha = !adj.d_alpha.empty();
  if (have_color && (adj.d_color.height() != K.height ||
                     adj.d_color.width() != K.width ||
                     adj.d_color.channels() != 3)) {
    throw ContractViolation("backward: color adjoint shape mismatch");
  }
  if (have_depth && (adj.d_depth.height() != K.height ||
                     adj.d_depth.width() != K.width)) {
    throw ContractViolation("backward: depth adjoint shape mismatch");
  }
  if (have_alpha && (adj.d_alpha.height() != K.height ||
                     adj.d_alpha.width() != K.width)) {
    throw ContractViolation("backward: alpha adjoint shape mismatch");
  }
  const size_t nq = adj.queries.size();
  if ((!adj.d_q.empty() && adj.d_q.size() != nq) ||
      (!adj.d_depth_at.empty() && adj.d_depth_at.size() != nq) ||
      (!adj.d_weight.empty() && adj.d_weight.size() != nq) ||
      (!adj.d_psi.empty() && adj.d_psi.size() != nq)) {
    throw ContractViolation("backward: query adjoint length mismatch");
  }

  ParamGradients pg;
  pg.resize(set.size());
  const auto& splats = fr.splats();
  std::vector<SplatAcc> acc(splats.size());
  const Eigen::Matrix3d r_pose = fr.pose().rotation.toRotationMatrix();

  std::vector<Fragment> frags;
  frags.reserve(64);

  // Image outputs.
  if (have_color || have_depth || have_alpha) {
    for (int y = 0; y < K.height; ++y) {
      for (int x = 0; x < K.width; ++x) {
        Eigen::Vector3d dc = Eigen::Vector3d::Zero();
        double dd = 0.0, da = 0.0;
        if (have_color) dc = adj.d_color.rgb(y, x);
        if (have_depth) dd = adj.d_depth.at(y, x);
        if (have_alpha) da = adj.d_alpha.at(y, x);
        if (dc.isZero(0.0) && dd == 0.0 && da == 0.0) continue;

        frags.clear();
        const Eigen::Vector2d p(x, y);
        const double t_final =
            fr.walk_point(p, [&](int rank, double alpha, double t) {
              const auto& s = splats[rank];
              const double udot =
                  s.color.dot(dc) + s.cam_pos.z() * dd + da;
              frags.push_back({rank, alpha, t, udot});
            });
        if (frags.empty()) continue;

        const double suffix_init = t_final * cfg.background.dot(dc);
        reverse_scan(frags, suffix_init, [&](const Fragment& f,
                                             double d_alpha, double weight) {
          const auto& s = splats[f.rank];
          SplatAcc& a = acc[f.rank];
          a.touched = true;
          pg.d_color[s.gaussian] += weight * dc;
          a.d_camz += weight * dd;
          // alpha = opacity * exp(-m2 / 2)
          pg.d_opacity_logit[s.gaussian] +=
              d_alpha * f.alpha * (1.0 - s.opacity);
          const double d_m2 = -0.5 * f.alpha * d_alpha;
          const Eigen::Vector2d delta = p - s.mean2d;
          const Eigen::Vector2d md = s.inv_cov * delta;
          a.d_mean2d -= d_m2 * 2.0 * md;
          a.d_inv_cov += d_m2 * delta * delta.transpose();
        });
      }
    }
  }

  // Surface queries.
  for (size_t j = 0; j < nq; ++j) {
    Eigen::Vector2d dq = Eigen::Vector2d::Zero();
    double ddh = 0.0, dw = 0.0;
    Eigen::Vector3d dpsi = Eigen::Vector3d::Zero();
    if (!adj.d_q.empty()) dq = adj.d_q[j];
    if (!adj.d_depth_at.empty()) ddh = adj.d_depth_at[j];
    if (!adj.d_weight.empty()) dw = adj.d_weight[j];
    if (!adj.d_psi.empty()) dpsi = adj.d_psi[j];
    if (dq.isZero(0.0) && ddh == 0.0 && dw == 0.0 && dpsi.isZero(0.0)) {
      continue;
    }

    // Recompute the forward blend at this query.
    const Eigen::Vector2d p = adj.queries[j];
    Eigen::Vector3d psi = Eigen::Vector3d::Zero();
    double weight = 0.0;
    frags.clear();
    fr.walk_point(p, [&](int rank, double alpha, double t) {
      const auto& s = splats[rank];
      psi += alpha * t * s.world_pos;
      weight += alpha * t;
      frags.push_back({rank, alpha, t, 0.0});
    });
    if (weight < cfg.query_weight_min) continue;  // was flagged invalid

    Eigen::Vector3d dpsi_world = dpsi;
    if (!dq.isZero(0.0)) {
      const Eigen::Vector3d psi_cam = fr.pose().apply(psi);
      if (psi_cam.z() <= kNearPlane) continue;  // invalid in forward too
      const Eigen::Matrix<double, 2, 3> jq = projection_jacobian(psi_cam, K);
      dpsi_world += r_pose.transpose() * (jq.transpose() * dq);
    }

    for (Fragment& f : frags) {
      const auto& s = splats[f.rank];
      f.udot = s.world_pos.dot(dpsi_world) + s.cam_pos.z() * ddh + dw;
    }
    reverse_scan(frags, 0.0, [&](const Fragment& f, double d_alpha,
                                 double w) {
      const auto& s = splats[f.rank];
      SplatAcc& a = acc[f.rank];
      a.touched = true;
      a.d_world += w * dpsi_world;
      a.d_camz += w * ddh;
      pg.d_opacity_logit[s.gaussian] += d_alpha * f.alpha * (1.0 - s.opacity);
      const double d_m2 = -0.5 * f.alpha * d_alpha;
      const Eigen::Vector2d delta = p - s.mean2d;
      const Eigen::Vector2d md = s.inv_cov * delta;
      a.d_mean2d -= d_m2 * 2.0 * md;
      a.d_inv_cov += d_m2 * delta * delta.transpose();
    });
  }

  // Chain the screen-space accumulators through projection, covariance
  // and the rigid pose, once per splat.
  for (size_t rank = 0; rank < splats.size(); ++rank) {
    if (!acc[rank].touched) continue;
    const auto& s = splats[rank];
    const SplatAcc& a = acc[rank];
    const int g = s.gaussian;

    pg.screen_grad_norm[g] += a.d_mean2d.norm();
    pg.screen_grad_seen[g] += 1;

    // inv_cov -> dilated covariance (dilation is additive, so this is also
    // the adjoint of the projected covariance).
    const Eigen::Matrix2d d_inv = 0.5 * (a.d_inv_cov + a.d_inv_cov.transpose());
    const Eigen::Matrix2d d_cov = -s.inv_cov * d_inv * s.inv_cov;

    const Eigen::Matrix<double, 2, 3> jac =
        projection_jacobian(s.cam_pos, K);
    const Eigen::Matrix<double, 2, 3> aj = jac * r_pose;
    const Eigen::Matrix3d sigma = build_covariance(set, g);

    const Eigen::Matrix<double, 2, 3> d_aj = 2.0 * d_cov * aj * sigma;
    const Eigen::Matrix3d d_sigma = aj.transpose() * d_cov * aj;
    const Eigen::Matrix<double, 2, 3> d_jac = d_aj * r_pose.transpose();

    // mean2d and the Jacobian both depend on the camera-frame center.
    Eigen::Vector3d d_cam = jac.transpose() * a.d_mean2d;
    const double z = s.cam_pos.z();
    const double z2 = z * z;
    d_cam.x() += d_jac(0, 2) * (-K.fx / z2);
    d_cam.y() += d_jac(1, 2) * (-K.fy / z2);
    d_cam.z() += d_jac(0, 0) * (-K.fx / z2) + d_jac(1, 1) * (-K.fy / z2) +
                 d_jac(0, 2) * (2.0 * K.fx * s.cam_pos.x() / (z2 * z)) +
                 d_jac(1, 2) * (2.0 * K.fy * s.cam_pos.y() / (z2 * z));
    d_cam.z() += a.d_camz;

    pg.d_position[g] += r_pose.transpose() * d_cam + a.d_world;

    // sigma = R diag(exp(2 ls)) R^T
    const Eigen::Matrix3d rg = set.rotations[g].toRotationMatrix();
    const Eigen::Vector3d s2 =
        (2.0 * set.log_scales[g]).array().exp().matrix();
    const Eigen::Matrix3d d_rg = 2.0 * d_sigma * rg * s2.asDiagonal();
    const Eigen::Matrix3d rtd = rg.transpose() * d_sigma * rg;
    for (int k = 0; k < 3; ++k) {
      pg.d_log_scale[g][k] += 2.0 * s2[k] * rtd(k, k);
    }
    const Eigen::Matrix3d pmat = d_rg * rg.transpose();
    pg.d_rotation[g] += Eigen::Vector3d(pmat(2, 1) - pmat(1, 2),
                                        pmat(0, 2) - pmat(2, 0),
                                        pmat(1, 0) - pmat(0, 1));
  }

  return pg;
}

Twist reduce_to_twist(const GaussianSet& transformed,
                      const ParamGradients& grads) {
  if (grads.size() != transformed.size()) {
    throw ContractViolation("reduce_to_twist: gradient size mismatch");
  }
  Twist t = Twist::Zero();
  for (int i = 0; i < transformed.size(); ++i) {
    t.head<3>() += grads.d_position[i];
    t.tail<3>() += transformed.positions[i].cross(grads.d_position[i]) +
                   grads.d_rotation[i];
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

struct GradCheckFixture {
  Image target;
  std::vector<Eigen::Vector2d> kprime;
  std::vector<Eigen::Vector2d> k_target;
  std::vector<double> ref_depth;
};

GradCheckFixture build_fixture(const GaussianSet& set, const Se3& transform,
                               const Se3& camera_pose, const Intrinsics& K,
                               const RenderConfig& cfg, GradCheckLoss loss,
                               const GradCheckOptions& opts, Rng& rng) {
  GradCheckFixture fx;

  // The target is a lightly jittered render shifted by a constant offset
  // large enough that no pixel residual can cross the L1 kink within the
  // finite-difference window; the offset keeps central differences a valid
  // derivative oracle while the SSIM term still exercises a spatially rich
  // smooth adjoint.
  GaussianSet jit = set;
  Rng jr = rng.stream("target-jitter");
  for (int i = 0; i < jit.size(); ++i) {
    jit.colors[i] += jr.normal3(0.015);
    jit.positions[i] += jr.normal3(0.004);
  }
  fx.target =
      FrameRender(transform_set(jit, transform), camera_pose, K, cfg).image()
          .color;
  for (size_t i = 0; i < fx.target.size(); ++i) fx.target.data()[i] += 0.12;

  if (loss == GradCheckLoss::Correspondence) {
    GaussianSet moved = transform_set(set, transform);
    FrameRender fr(moved, camera_pose, K, cfg);
    // Query pixels with solid coverage, offset targets clear of zero
    // residuals so the L1 signs are stable under the FD step.
    Rng qr = rng.stream("queries");
    int attempts = 0;
    while (static_cast<int>(fx.kprime.size()) < opts.query_count &&
           attempts < 4000) {
      ++attempts;
      const Eigen::Vector2d cand(qr.uniform(1.0, K.width - 2.0),
                                 qr.uniform(1.0, K.height - 2.0));
      SurfaceSamples one = fr.sample_surface({cand});
      if (!one.valid[0] || one.weight[0] < 0.05) continue;
      fx.kprime.push_back(cand);
      Eigen::Vector2d off(qr.uniform(0.8, 2.5), qr.uniform(0.8, 2.5));
      if (qr.uniform() < 0.5) off.x() = -off.x();
      if (qr.uniform() < 0.5) off.y() = -off.y();
      fx.k_target.push_back(one.q[0] + off);
      const double d_norm = one.depth[0] / one.weight[0];
      const double doff = (qr.uniform() < 0.5 ? -1.0 : 1.0) *
                          qr.uniform(0.05, 0.2) * std::max(1.0, d_norm);
      fx.ref_depth.push_back(d_norm + doff);
    }
  }
  return fx;
}

}  // namespace

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  for (const auto& c : classes) {
    os << (c.pass ? "  ok  " : " FAIL ") << c.name
       << "  worst_abs=" << c.worst_abs << "  worst_rel=" << c.worst_rel
       << "\n";
  }
  os << (pass ? "gradient check PASSED" : "gradient check FAILED") << "\n";
  return os.str();
}

GradCheckReport check_gradients(const GaussianSet& set, const Se3& transform,
                                const Se3& camera_pose, const Intrinsics& K,
                                const RenderConfig& render_cfg,
                                GradCheckLoss loss, uint64_t seed,
                                const GradCheckOptions& opts) {
  Rng rng(seed);
  GradCheckFixture fx = build_fixture(set, transform, camera_pose, K,
                                      render_cfg, loss, opts, rng);

  LossWeights weights;  // paper defaults
  auto eval = [&](const GaussianSet& s, const Se3& tw) -> double {
    const GaussianSet moved = transform_set(s, tw);
    FrameRender fr(moved, camera_pose, K, render_cfg);
    if (loss == GradCheckLoss::Scene) {
      return loss_scene(fx.target, fr.image().color, opts.ssim_weight);
    }
    const SurfaceSamples ss = fr.sample_surface(fx.kprime);
    return correspondence_loss(fx.target, fr.image().color, ss, fx.k_target,
                               fx.ref_depth, weights)
        .total;
  };

  // Analytic gradients.
  const GaussianSet moved = transform_set(set, transform);
  FrameRender fr(moved, camera_pose, K, render_cfg);
  RenderAdjoints adj;
  if (loss == GradCheckLoss::Scene) {
    scene_loss_adjoints(fx.target, fr.image().color, opts.ssim_weight,
                        &adj.d_color);
  } else {
    const SurfaceSamples ss = fr.sample_surface(fx.kprime);
    correspondence_loss_adjoints(fx.target, fr.image().color, ss, fx.k_target,
                                 fx.ref_depth, weights, &adj);
  }
  ParamGradients pg = backward(fr, adj);
  const Twist twist_grad = reduce_to_twist(moved, pg);
  // backward differentiates the transformed set; pull position and rotation
  // gradients back to the original parameters for comparison against finite
  // differences taken there.
  const Eigen::Matrix3d rt =
      transform.rotation.toRotationMatrix().transpose();
  for (int i = 0; i < pg.size(); ++i) {
    pg.d_position[i] = rt * pg.d_position[i];
    pg.d_rotation[i] = rt * pg.d_rotation[i];
  }

  GradCheckReport report;
  const double h = opts.fd_step;
  auto check_class = [&](const std::string& name, auto&& fd_loop) {
    GradCheckClassReport c;
    c.name = name;
    fd_loop([&](double analytic, double numeric) {
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      c.worst_abs = std::max(c.worst_abs, abs_err);
      c.worst_rel = std::max(c.worst_rel, rel_err);
      // Each element passes on either tolerance.
      if (abs_err > opts.tol_abs && rel_err > opts.tol_rel) c.pass = false;
    });
    report.classes.push_back(c);
    report.pass = report.pass && c.pass;
  };

  if (!opts.frozen_gaussians) {
    check_class("position", [&](auto&& cmp) {
      for (int i = 0; i < set.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
          GaussianSet s = set;
          s.positions[i][d] += h;
          const double up = eval(s, transform);
          s.positions[i][d] -= 2.0 * h;
          const double dn = eval(s, transform);
          cmp(pg.d_position[i][d], (up - dn) / (2.0 * h));
        }
      }
    });
    check_class("log_scale", [&](auto&& cmp) {
      for (int i = 0; i < set.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
          GaussianSet s = set;
          s.log_scales[i][d] += h;
          const double up = eval(s, transform);
          s.log_scales[i][d] -= 2.0 * h;
          const double dn = eval(s, transform);
          cmp(pg.d_log_scale[i][d], (up - dn) / (2.0 * h));
        }
      }
    });
    check_class("rotation", [&](auto&& cmp) {
      for (int i = 0; i < set.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
          Eigen::Vector3d step = Eigen::Vector3d::Zero();
          step[d] = h;
          GaussianSet s = set;
          s.rotations[i] = quat_exp(step) * set.rotations[i];
          const double up = eval(s, transform);
          s.rotations[i] = quat_exp(-step) * set.rotations[i];
          const double dn = eval(s, transform);
          cmp(pg.d_rotation[i][d], (up - dn) / (2.0 * h));
        }
      }
    });
    check_class("color", [&](auto&& cmp) {
      for (int i = 0; i < set.size(); ++i) {
        for (int d = 0; d < 3; ++d) {
          GaussianSet s = set;
          s.colors[i][d] += h;
          const double up = eval(s, transform);
          s.colors[i][d] -= 2.0 * h;
          const double dn = eval(s, transform);
          cmp(pg.d_color[i][d], (up - dn) / (2.0 * h));
        }
      }
    });
    check_class("opacity", [&](auto&& cmp) {
      for (int i = 0; i < set.size(); ++i) {
        GaussianSet s = set;
        s.opacity_logits[i] += h;
        const double up = eval(s, transform);
        s.opacity_logits[i] -= 2.0 * h;
        const double dn = eval(s, transform);
        cmp(pg.d_opacity_logit[i], (up - dn) / (2.0 * h));
      }
    });
  }
  check_class("twist", [&](auto&& cmp) {
    for (int d = 0; d < 6; ++d) {
      Twist step = Twist::Zero();
      step[d] = h;
      const double up = eval(set, compose(se3_exp(step), transform));
      const double dn = eval(set, compose(se3_exp(-step), transform));
      cmp(twist_grad[d], (up - dn) / (2.0 * h));
    }
  });
  return report;
}

}  // namespace cgsplat
