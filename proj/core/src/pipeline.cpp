#include "cgsplat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "cgsplat/errors.hpp"
#include "cgsplat/rng.hpp"

namespace cgsplat {

Image DepthProvider::depth(int frame) const {
  if (!seq_->has_depth(frame)) {
    return Image();
  }
  Image d = seq_->depths[frame];
  if (noise_ > 0.0) {
    Rng rng = Rng(seed_).stream("depth-noise-" + std::to_string(frame));
    for (size_t i = 0; i < d.size(); ++i) {
      if (d.data()[i] > 0.0) {
        d.data()[i] *= std::max(0.05, 1.0 + rng.normal(0.0, noise_));
      }
    }
  }
  return d;
}

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write training log: " + path);
  out.precision(17);
  out << "iter,cor_rgb,pix_rgb,cor_depth,total,M_used\n";
  for (const auto& row : log) {
    out << row.iter << "," << row.loss.cor_rgb << "," << row.loss.pix_rgb
        << "," << row.loss.cor_depth << "," << row.loss.total << ","
        << row.loss.m_used << "\n";
  }
}

GaussianSet init_from_depth(const Image& image, const Image& depth,
                            const Intrinsics& K, int stride,
                            double init_opacity) {
  if (depth.empty() || depth.channels() != 1) {
    throw ContractViolation("init_from_depth: missing depth map");
  }
  if (stride < 1) throw ContractViolation("init_from_depth: stride < 1");

  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> colors;
  for (int y = 0; y < depth.height(); y += stride) {
    for (int x = 0; x < depth.width(); x += stride) {
      const double d = depth.at(y, x);
      if (!(d > 0.0)) continue;
      points.push_back(backproject(x, y, d, K));
      colors.push_back(image.rgb(y, x));
    }
  }
  const int n = static_cast<int>(points.size());
  if (n < 8) {
    throw DegenerateInput("init_from_depth: fewer than 8 valid depth pixels");
  }

  GaussianSet g;
  g.reserve(n);
  const double op_logit = logit(init_opacity);
  std::vector<double> d2(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      d2[j] = j == i ? std::numeric_limits<double>::infinity()
                     : (points[i] - points[j]).squaredNorm();
    }
    std::partial_sort(d2.begin(), d2.begin() + 3, d2.end());
    const double mean_dist =
        (std::sqrt(d2[0]) + std::sqrt(d2[1]) + std::sqrt(d2[2])) / 3.0;
    const double s = std::max(mean_dist, 1e-6);
    g.push_back(points[i], Eigen::Vector3d::Constant(std::log(s)),
                Eigen::Quaterniond::Identity(), colors[i], op_logit);
  }
  return g;
}

namespace {

struct PairLists {
  std::vector<Eigen::Vector2d> kprime;  // query pixels in the render
  std::vector<Eigen::Vector2d> k;       // target pixels
  std::vector<double> ref_depth;
};

// Drops out-of-bounds pairs and falls back to pixel-only (empty lists) when
// fewer than min_pairs survive.
PairLists build_pairs(const CorrespondenceSet& matches, const Intrinsics& K,
                      int min_pairs) {
  PairLists out;
  const double umax = K.width - 1.0;
  const double vmax = K.height - 1.0;
  for (const auto& p : matches.pairs) {
    if (p.rendered_px.x() < 0.0 || p.rendered_px.x() > umax ||
        p.rendered_px.y() < 0.0 || p.rendered_px.y() > vmax ||
        p.target_px.x() < 0.0 || p.target_px.x() > umax ||
        p.target_px.y() < 0.0 || p.target_px.y() > vmax) {
      continue;
    }
    out.kprime.push_back(p.rendered_px);
    out.k.push_back(p.target_px);
  }
  if (static_cast<int>(out.kprime.size()) < min_pairs) {
    out.kprime.clear();
    out.k.clear();
  }
  return out;
}

// Reference depth at the target pixels. Pixels on or near depth
// discontinuities are left at 0 (depth term neutralized for that pair): the
// blended ground-truth depth mixes foreground and background there.
void fetch_reference_depths(const Image& reference_depth, PairLists* pairs) {
  pairs->ref_depth.assign(pairs->k.size(), 0.0);
  if (reference_depth.empty()) return;
  for (size_t i = 0; i < pairs->k.size(); ++i) {
    const int x = static_cast<int>(std::lround(pairs->k[i].x()));
    const int y = static_cast<int>(std::lround(pairs->k[i].y()));
    if (x < 1 || y < 1 || x > reference_depth.width() - 2 ||
        y > reference_depth.height() - 2) {
      continue;
    }
    const double c = reference_depth.at(y, x);
    if (!(c > 0.0)) continue;
    double lo = c, hi = c;
    bool solid = true;
    for (int dy = -1; dy <= 1 && solid; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const double v = reference_depth.at(y + dy, x + dx);
        if (!(v > 0.0)) {
          solid = false;
          break;
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (solid && hi - lo <= 0.05 * c) pairs->ref_depth[i] = c;
  }
}

// Pairs without a usable reference depth get their depth term neutralized by
// targeting the rendered depth itself.
void patch_missing_depth(PairLists* pairs, const SurfaceSamples& samples) {
  for (size_t i = 0; i < pairs->ref_depth.size(); ++i) {
    if (!(pairs->ref_depth[i] > 0.0)) {
      pairs->ref_depth[i] =
          samples.weight[i] > 0.0 ? samples.depth[i] / samples.weight[i]
                                  : 0.0;
    }
  }
}

// Refines each pair to the projected center of the dominant splat at k',
// shifting k by the same offset. The blended reprojection q is unbiased at
// splat cores, so this removes the systematic pull of q toward near-side
// content while leaving the alignment signal k' - k untouched (the same
// subpixel refinement to salient points a feature matcher performs).
void snap_pairs_to_cores(const FrameRender& fr, PairLists* pairs) {
  const Intrinsics& K = fr.intrinsics();
  const double umax = K.width - 1.0;
  const double vmax = K.height - 1.0;
  for (size_t i = 0; i < pairs->kprime.size(); ++i) {
    const int rank = fr.dominant_splat(pairs->kprime[i]);
    if (rank < 0) continue;
    const Eigen::Vector2d core = fr.splats()[rank].mean2d;
    const Eigen::Vector2d delta = core - pairs->kprime[i];
    if (delta.norm() > 3.0) continue;  // empty or ridge region, leave as is
    const Eigen::Vector2d k_new = pairs->k[i] + delta;
    if (core.x() < 0.0 || core.x() > umax || core.y() < 0.0 ||
        core.y() > vmax || k_new.x() < 0.0 || k_new.x() > umax ||
        k_new.y() < 0.0 || k_new.y() > vmax) {
      continue;
    }
    pairs->kprime[i] = core;
    pairs->k[i] = k_new;
  }
}

LossWeights effective_weights(const PipelineConfig& cfg, const Image& image) {
  LossWeights w = cfg.weights;
  const double gain = cfg.pix_gain > 0.0
                          ? cfg.pix_gain
                          : static_cast<double>(image.size());
  w.lambda2 *= gain;
  return w;
}

}  // namespace

FitResult fit_frame_gaussians(const GaussianSet& init, const Image& target,
                              const Image& reference_depth,
                              const Intrinsics& K, Matcher& matcher,
                              const PipelineConfig& cfg, TrainLog* log) {
  FitResult res;
  res.set = init;
  const RenderConfig rcfg = cfg.render_config();
  const LossWeights weights = effective_weights(cfg, target);
  GaussianOptimizer opt(res.set.size());
  ParamMask mask;
  mask.position = cfg.optimize_positions_in_fit;
  CorrespondenceCache cache;
  const Se3 identity;

  for (int iter = 0; iter < cfg.iters_fit; ++iter) {
    FrameRender fr(res.set, identity, K, rcfg);
    const CorrespondenceSet& matches = cached_match(
        matcher, target, fr.image().color, cache, iter, cfg.cache_interval);
    PairLists pairs = build_pairs(matches, K, cfg.min_pairs);
    if (cfg.snap_pairs) snap_pairs_to_cores(fr, &pairs);
    fetch_reference_depths(reference_depth, &pairs);
    const SurfaceSamples samples = fr.sample_surface(pairs.kprime);
    patch_missing_depth(&pairs, samples);

    RenderAdjoints adj;
    const LossBreakdown lb = correspondence_loss_adjoints(
        target, fr.image().color, samples, pairs.k, pairs.ref_depth, weights,
        &adj);
    if (!std::isfinite(lb.total)) {
      res.ok = false;
      res.final_total = lb.total;
      return res;
    }
    if (log != nullptr) log->push_back({iter, lb});
    res.final_total = lb.total;

    const ParamGradients pg = backward(fr, adj);
    opt.step(res.set, pg, cfg.rates,
             lr_decay(iter, cfg.iters_fit, cfg.decay_ratio()), mask);
    res.set = adjust_opacity(res.set, OpacityAdjustMode::Clamp,
                             cfg.opacity_ceiling);
  }
  res.final_pix =
      loss_pix_rgb(target, render(res.set, identity, K, rcfg).color);
  return res;
}

PoseEstimate estimate_relative_pose(
    const GaussianSet& frozen, const Image& target,
    const Image& reference_depth, const Intrinsics& K, Matcher& matcher,
    const PipelineConfig& cfg, const Se3& init,
    const std::shared_ptr<HypothesisHandle>& hypothesis,
    const Se3& hypothesis_anchor, TrainLog* log) {
  PoseEstimate res;
  res.transform = init;
  const RenderConfig rcfg = cfg.render_config();
  const LossWeights weights = effective_weights(cfg, target);
  Adam adam(6);
  CorrespondenceCache cache;
  const Se3 identity;

  double initial_total = std::numeric_limits<double>::quiet_NaN();
  int consecutive_high = 0;

  for (int iter = 0; iter < cfg.iters_pose; ++iter) {
    if (hypothesis) {
      hypothesis->pose = compose(res.transform, hypothesis_anchor);
    }
    const GaussianSet moved = transform_set(frozen, res.transform);
    FrameRender fr(moved, identity, K, rcfg);
    const CorrespondenceSet& matches = cached_match(
        matcher, target, fr.image().color, cache, iter, cfg.cache_interval);
    PairLists pairs = build_pairs(matches, K, cfg.min_pairs);
    if (cfg.snap_pairs) snap_pairs_to_cores(fr, &pairs);
    fetch_reference_depths(reference_depth, &pairs);
    const SurfaceSamples samples = fr.sample_surface(pairs.kprime);
    patch_missing_depth(&pairs, samples);

    RenderAdjoints adj;
    const LossBreakdown lb = correspondence_loss_adjoints(
        target, fr.image().color, samples, pairs.k, pairs.ref_depth, weights,
        &adj);
    if (!std::isfinite(lb.total)) {
      res.diverged = true;
      res.transform = Se3::identity();
      res.matcher_calls = cache.matcher_calls;
      return res;
    }
    if (log != nullptr) log->push_back({iter, lb});
    res.final_total = lb.total;

    if (iter == 0) initial_total = lb.total;
    if (lb.total > cfg.divergence_factor * initial_total) {
      if (++consecutive_high >= cfg.divergence_window) {
        res.diverged = true;
        res.transform = Se3::identity();
        res.matcher_calls = cache.matcher_calls;
        return res;
      }
    } else {
      consecutive_high = 0;
    }

    const ParamGradients pg = backward(fr, adj);
    const Twist grad = reduce_to_twist(moved, pg);
    const Eigen::VectorXd delta =
        adam.step(grad, cfg.rates.twist *
                            lr_decay(iter, cfg.iters_pose, cfg.decay_ratio()));
    res.transform =
        compose(se3_exp(Twist(delta)), res.transform).normalized();
  }
  res.matcher_calls = cache.matcher_calls;
  return res;
}

std::vector<Se3> PoseChain::accumulate(const std::vector<Se3>& relative) {
  std::vector<Se3> absolute;
  absolute.reserve(relative.size() + 1);
  absolute.push_back(Se3::identity());
  for (const Se3& t : relative) {
    absolute.push_back(compose(t, absolute.back()).normalized());
  }
  return absolute;
}

namespace {

std::unique_ptr<Matcher> make_matcher(const FrameSequence& seq,
                                      const PipelineConfig& cfg,
                                      int target_frame,
                                      const DepthProvider& depths,
                                      std::shared_ptr<HypothesisHandle> h) {
  if (cfg.match_mode == MatchMode::GridNcc) {
    return std::make_unique<GridNccMatcher>(cfg.ncc_patch, cfg.ncc_stride,
                                            cfg.ncc_radius);
  }
  if (!seq.has_gt() || !seq.has_depth(target_frame)) {
    throw ContractViolation(
        "oracle matching requires ground-truth poses and depth");
  }
  const uint64_t seed =
      Rng(cfg.seed).stream("match-" + std::to_string(target_frame)).seed();
  return std::make_unique<OracleMatcher>(
      depths.depth(target_frame), seq.gt_world_to_cam[target_frame],
      [h] { return h->pose; }, seq.intrinsics, cfg.match_samples,
      cfg.match_noise, seed);
}

}  // namespace

PoseStageResult run_pose_stage(const FrameSequence& seq,
                               const PipelineConfig& cfg,
                               std::vector<TrainLog>* fit_logs,
                               std::vector<TrainLog>* pose_logs) {
  if (seq.count() < 2 || seq.train_indices.size() < 2) {
    throw ContractViolation("run_pose_stage: need at least 2 frames");
  }
  const auto& train = seq.train_indices;
  const DepthProvider depths(seq, cfg.depth_noise, cfg.seed);
  PoseStageResult res;

  auto fit_one = [&](const GaussianSet& start, int frame) -> FitResult {
    auto handle = std::make_shared<HypothesisHandle>();
    if (seq.has_gt()) handle->pose = seq.gt_world_to_cam[frame];
    auto matcher = make_matcher(seq, cfg, frame, depths, handle);
    TrainLog log;
    FitResult fit = fit_frame_gaussians(start, seq.images[frame],
                                        depths.depth(frame), seq.intrinsics,
                                        *matcher, cfg, &log);
    if (fit_logs != nullptr) fit_logs->push_back(std::move(log));
    res.fit_final_pix.push_back(fit.final_pix);
    res.any_failure = res.any_failure || !fit.ok;
    return fit;
  };

  // First frame: initialize from depth, then fit.
  GaussianSet current =
      init_from_depth(seq.images[train[0]], depths.depth(train[0]),
                      seq.intrinsics, cfg.init_stride, cfg.init_opacity);
  current = fit_one(current, train[0]).set;

  for (size_t j = 0; j + 1 < train.size(); ++j) {
    const int frame_next = train[j + 1];
    auto handle = std::make_shared<HypothesisHandle>();
    const Se3 anchor =
        seq.has_gt() ? seq.gt_world_to_cam[train[j]] : Se3::identity();
    auto matcher = make_matcher(seq, cfg, frame_next, depths, handle);
    TrainLog log;
    const PoseEstimate est = estimate_relative_pose(
        current, seq.images[frame_next], depths.depth(frame_next),
        seq.intrinsics, *matcher, cfg, Se3::identity(), handle, anchor, &log);
    if (pose_logs != nullptr) pose_logs->push_back(std::move(log));
    res.matcher_calls += est.matcher_calls;
    res.any_failure = res.any_failure || est.diverged;
    res.chain.relative.push_back(est.transform);
    res.chain.diverged.push_back(est.diverged ? 1 : 0);

    // Warm-start the next frame's fit from the transformed set.
    current = fit_one(transform_set(current, est.transform), frame_next).set;
  }
  res.chain.absolute = PoseChain::accumulate(res.chain.relative);
  return res;
}

SceneStageResult run_scene_stage(const FrameSequence& seq,
                                 const std::vector<Se3>& train_poses,
                                 const PipelineConfig& cfg) {
  const auto& train = seq.train_indices;
  if (train_poses.size() != train.size()) {
    throw ContractViolation(
        "run_scene_stage: one pose per training frame required");
  }
  const DepthProvider depths(seq, cfg.depth_noise, cfg.seed);

  // Re-anchor so the first training pose is the identity; the scene is
  // built in that camera's frame by the depth back-projection.
  const Se3 anchor_inv = train_poses[0].inverse();
  std::vector<Se3> poses;
  poses.reserve(train_poses.size());
  for (const Se3& w : train_poses) {
    poses.push_back(compose(w, anchor_inv).normalized());
  }

  SceneStageResult res;
  res.scene =
      init_from_depth(seq.images[train[0]], depths.depth(train[0]),
                      seq.intrinsics, cfg.init_stride, cfg.init_opacity);
  const RenderConfig rcfg = cfg.render_config();
  GaussianOptimizer opt(res.scene.size());
  Rng sampler = Rng(cfg.seed).stream("scene-frame-sampling");

  std::vector<double> grad_norm_sum(res.scene.size(), 0.0);
  std::vector<int> grad_seen(res.scene.size(), 0);

  for (int iter = 0; iter < cfg.iters_scene; ++iter) {
    const int j = sampler.uniform_int(0, static_cast<int>(train.size()) - 1);
    const Image& target = seq.images[train[j]];
    FrameRender fr(res.scene, poses[j], seq.intrinsics, rcfg);

    RenderAdjoints adj;
    const double total = scene_loss_adjoints(target, fr.image().color,
                                             cfg.ssim_weight, &adj.d_color);
    if (!std::isfinite(total)) {
      res.ok = false;
      return res;
    }
    LossBreakdown lb;
    lb.pix_rgb = loss_pix_rgb(target, fr.image().color);
    lb.total = total;
    res.log.push_back({iter, lb});

    const ParamGradients pg = backward(fr, adj);
    opt.step(res.scene, pg, cfg.rates,
             lr_decay(iter, cfg.iters_scene, cfg.decay_ratio()), ParamMask{});
    res.scene = adjust_opacity(res.scene, OpacityAdjustMode::Clamp,
                               cfg.opacity_ceiling);

    for (int i = 0; i < res.scene.size(); ++i) {
      grad_norm_sum[i] += pg.screen_grad_norm[i];
      grad_seen[i] += pg.screen_grad_seen[i];
    }

    const bool densify_due =
        cfg.densify_interval > 0 && iter >= cfg.densify_start &&
        iter <= cfg.densify_end && (iter - cfg.densify_start) > 0 &&
        (iter - cfg.densify_start) % cfg.densify_interval == 0;
    if (densify_due) {
      std::vector<double> stats(res.scene.size());
      for (int i = 0; i < res.scene.size(); ++i) {
        stats[i] = grad_norm_sum[i] / std::max(1, grad_seen[i]);
      }
      DensifyOptions dopts = cfg.densify;
      dopts.seed = Rng(cfg.seed).stream("densify-" + std::to_string(iter))
                       .seed();
      res.scene = densify_and_prune(res.scene, stats, dopts).set;
      opt.reset(res.scene.size());
      grad_norm_sum.assign(res.scene.size(), 0.0);
      grad_seen.assign(res.scene.size(), 0);
    }
    if (cfg.opacity_reset_interval > 0 && iter > 0 &&
        iter % cfg.opacity_reset_interval == 0) {
      res.scene = adjust_opacity(res.scene, OpacityAdjustMode::Reset,
                                 cfg.opacity_ceiling);
      opt.reset(res.scene.size());
    }
  }
  return res;
}

PoseEstimate estimate_test_pose(
    const GaussianSet& scene, const Image& test_image,
    const Image& reference_depth, const Intrinsics& K, const Se3& init_pose,
    Matcher& matcher, const PipelineConfig& cfg,
    const std::shared_ptr<HypothesisHandle>& hypothesis,
    const Se3& scene_anchor, TrainLog* log) {
  // The scene lives in the first training camera's frame, so the learned
  // transform IS the world-to-camera pose of the test view.
  return estimate_relative_pose(scene, test_image, reference_depth, K,
                                matcher, cfg, init_pose, hypothesis,
                                scene_anchor, log);
}

}  // namespace cgsplat
