#include "cgsplat/renderer.hpp"

#include <algorithm>
#include <thread>

#include "cgsplat/errors.hpp"

namespace cgsplat {

namespace {

constexpr double kSh1 = 0.4886025119029199;

Eigen::Vector3d eval_color(const GaussianSet& set, int i,
                           const Eigen::Vector3d& camera_center,
                           int sh_degree) {
  Eigen::Vector3d c = set.colors[i];
  if (sh_degree >= 1) {
    Eigen::Vector3d dir = set.positions[i] - camera_center;
    const double n = dir.norm();
    if (n > 1e-12) {
      dir /= n;
      for (int ch = 0; ch < 3; ++ch) {
        c[ch] += kSh1 * (-dir.y() * set.sh[i][0 * 3 + ch] +
                         dir.z() * set.sh[i][1 * 3 + ch] -
                         dir.x() * set.sh[i][2 * 3 + ch]);
      }
    }
    c = c.cwiseMax(0.0).cwiseMin(1.0);
  }
  return c;
}

}  // namespace

int SurfaceSamples::valid_count() const {
  int n = 0;
  for (uint8_t v : valid) n += v != 0;
  return n;
}

FrameRender::FrameRender(const GaussianSet& set, const Se3& pose,
                         const Intrinsics& K, const RenderConfig& cfg)
    : set_(&set), pose_(pose), intrinsics_(K), cfg_(cfg) {
  if (set.empty()) {
    throw ContractViolation("FrameRender: empty GaussianSet");
  }
  K.validate();
  tiles_x_ = (K.width + cfg_.tile_size - 1) / cfg_.tile_size;
  tiles_y_ = (K.height + cfg_.tile_size - 1) / cfg_.tile_size;
  tile_splats_.resize(static_cast<size_t>(tiles_x_) * tiles_y_);
  project_all();
  rasterize();
}

void FrameRender::project_all() {
  const GaussianSet& g = *set_;
  const Eigen::Matrix3d r = pose_.rotation.toRotationMatrix();
  const Eigen::Vector3d camera_center = pose_.inverse().translation;
  const double umax = intrinsics_.width - 1.0;
  const double vmax = intrinsics_.height - 1.0;

  splats_.reserve(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const Eigen::Vector3d cam = r * g.positions[i] + pose_.translation;
    if (cam.z() <= kNearPlane) continue;  // culled, not an error
    const double opacity = g.opacity(i);
    if (opacity <= cfg_.alpha_min) continue;

    Splat s;
    s.gaussian = i;
    s.cam_pos = cam;
    s.world_pos = g.positions[i];
    s.opacity = opacity;
    s.mean2d = {intrinsics_.fx * cam.x() / cam.z() + intrinsics_.cx,
                intrinsics_.fy * cam.y() / cam.z() + intrinsics_.cy};

    const Eigen::Matrix3d sigma = build_covariance(g, i);
    Eigen::Matrix2d cov = project_covariance(sigma, pose_, cam, intrinsics_);
    cov(0, 0) += cfg_.dilation;
    cov(1, 1) += cfg_.dilation;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0)) continue;
    Eigen::Matrix2d inv;
    inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
    inv /= det;
    s.cov2d = cov;
    s.inv_cov = 0.5 * (inv + inv.transpose());

    // Influence radius where alpha falls to alpha_min.
    const double m2_max = 2.0 * std::log(opacity / cfg_.alpha_min);
    if (!(m2_max > 0.0)) continue;
    const double m_max = std::sqrt(m2_max);
    const Eigen::Vector2d half_extent(m_max * std::sqrt(cov(0, 0)),
                                      m_max * std::sqrt(cov(1, 1)));
    s.lo = s.mean2d - half_extent;
    s.hi = s.mean2d + half_extent;
    if (s.hi.x() < 0.0 || s.lo.x() > umax || s.hi.y() < 0.0 ||
        s.lo.y() > vmax) {
      continue;
    }
    s.color = eval_color(g, i, camera_center, cfg_.sh_degree);
    splats_.push_back(s);
  }

  // Global front-to-back order; ties broken by index for determinism.
  std::sort(splats_.begin(), splats_.end(), [](const Splat& a, const Splat& b) {
    if (a.cam_pos.z() != b.cam_pos.z()) return a.cam_pos.z() < b.cam_pos.z();
    return a.gaussian < b.gaussian;
  });

  for (int rank = 0; rank < static_cast<int>(splats_.size()); ++rank) {
    const Splat& s = splats_[rank];
    const int tx0 = std::max(0, static_cast<int>(
                                    std::floor(s.lo.x() / cfg_.tile_size)));
    const int tx1 = std::min(tiles_x_ - 1, static_cast<int>(std::floor(
                                               s.hi.x() / cfg_.tile_size)));
    const int ty0 = std::max(0, static_cast<int>(
                                    std::floor(s.lo.y() / cfg_.tile_size)));
    const int ty1 = std::min(tiles_y_ - 1, static_cast<int>(std::floor(
                                               s.hi.y() / cfg_.tile_size)));
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        tile_splats_[static_cast<size_t>(ty) * tiles_x_ + tx].push_back(rank);
      }
    }
  }
}

void FrameRender::rasterize_tile(int tx, int ty) {
  const int x0 = tx * cfg_.tile_size;
  const int y0 = ty * cfg_.tile_size;
  const int x1 = std::min(intrinsics_.width, x0 + cfg_.tile_size);
  const int y1 = std::min(intrinsics_.height, y0 + cfg_.tile_size);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const Eigen::Vector2d p(x, y);
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      double depth = 0.0, acc = 0.0;
      const double t_final =
          walk_point(p, [&](int rank, double alpha, double t) {
            const Splat& s = splats_[rank];
            const double w = alpha * t;
            c += w * s.color;
            depth += w * s.cam_pos.z();
            acc += w;
          });
      c += t_final * cfg_.background;
      output_.color.set_rgb(y, x, c);
      output_.depth.at(y, x) = depth;
      output_.alpha.at(y, x) = acc;
    }
  }
}

void FrameRender::rasterize() {
  output_.color = Image(intrinsics_.height, intrinsics_.width, 3);
  output_.depth = Image(intrinsics_.height, intrinsics_.width, 1);
  output_.alpha = Image(intrinsics_.height, intrinsics_.width, 1);
  if (splats_.empty()) {
    for (int y = 0; y < intrinsics_.height; ++y) {
      for (int x = 0; x < intrinsics_.width; ++x) {
        output_.color.set_rgb(y, x, cfg_.background);
      }
    }
    output_.all_culled = true;
    return;
  }

  const int n_tiles = tiles_x_ * tiles_y_;
  const int workers = std::max(1, std::min(cfg_.workers, n_tiles));
  if (workers == 1) {
    for (int t = 0; t < n_tiles; ++t) {
      rasterize_tile(t % tiles_x_, t / tiles_x_);
    }
    return;
  }
  // Tiles write disjoint pixels, so plain slicing is race-free and the
  // result is independent of the number of workers.
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([this, w, workers, n_tiles] {
      for (int t = w; t < n_tiles; t += workers) {
        rasterize_tile(t % tiles_x_, t / tiles_x_);
      }
    });
  }
  for (auto& th : pool) th.join();
}

const std::vector<int>& FrameRender::splats_for_point(
    const Eigen::Vector2d& p) const {
  if (p.x() < 0.0 || p.x() > intrinsics_.width - 1.0 || p.y() < 0.0 ||
      p.y() > intrinsics_.height - 1.0) {
    throw ContractViolation("query outside image bounds");
  }
  const int tx = std::min(tiles_x_ - 1,
                          static_cast<int>(p.x()) / cfg_.tile_size);
  const int ty = std::min(tiles_y_ - 1,
                          static_cast<int>(p.y()) / cfg_.tile_size);
  return tile_splats_[static_cast<size_t>(ty) * tiles_x_ + tx];
}

int FrameRender::dominant_splat(const Eigen::Vector2d& p) const {
  int best = -1;
  double best_w = 0.0;
  walk_point(p, [&](int rank, double alpha, double t) {
    const double w = alpha * t;
    if (w > best_w) {
      best_w = w;
      best = rank;
    }
  });
  return best;
}

SurfaceSamples FrameRender::sample_surface(
    const std::vector<Eigen::Vector2d>& queries) const {
  SurfaceSamples out;
  const int n = static_cast<int>(queries.size());
  out.query = queries;
  out.psi.assign(n, Eigen::Vector3d::Zero());
  out.depth.assign(n, 0.0);
  out.weight.assign(n, 0.0);
  out.q.assign(n, Eigen::Vector2d::Zero());
  out.valid.assign(n, 0);

  for (int j = 0; j < n; ++j) {
    Eigen::Vector3d psi = Eigen::Vector3d::Zero();
    double depth = 0.0, acc = 0.0;
    walk_point(queries[j], [&](int rank, double alpha, double t) {
      const Splat& s = splats_[rank];
      const double w = alpha * t;
      psi += w * s.world_pos;
      depth += w * s.cam_pos.z();
      acc += w;
    });
    out.psi[j] = psi;
    out.depth[j] = depth;
    out.weight[j] = acc;
    if (acc < cfg_.query_weight_min) continue;
    const Eigen::Vector3d psi_cam = pose_.apply(psi);
    if (psi_cam.z() <= kNearPlane) continue;
    out.q[j] = {intrinsics_.fx * psi_cam.x() / psi_cam.z() + intrinsics_.cx,
                intrinsics_.fy * psi_cam.y() / psi_cam.z() + intrinsics_.cy};
    out.valid[j] = 1;
  }
  return out;
}

RenderOutput render(const GaussianSet& set, const Se3& pose,
                    const Intrinsics& K, const RenderConfig& cfg) {
  return FrameRender(set, pose, K, cfg).image();
}

SurfaceSamples render_surface_points(const GaussianSet& set, const Se3& pose,
                                     const Intrinsics& K,
                                     const std::vector<Eigen::Vector2d>& queries,
                                     const RenderConfig& cfg) {
  return FrameRender(set, pose, K, cfg).sample_surface(queries);
}

}  // namespace cgsplat
