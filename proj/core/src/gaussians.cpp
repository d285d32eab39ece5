#include "cgsplat/gaussians.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>

#include "cgsplat/errors.hpp"

namespace cgsplat {

void GaussianSet::reserve(int n) {
  positions.reserve(n);
  log_scales.reserve(n);
  rotations.reserve(n);
  colors.reserve(n);
  sh.reserve(n);
  opacity_logits.reserve(n);
}

void GaussianSet::push_back(const Eigen::Vector3d& position,
                            const Eigen::Vector3d& log_scale,
                            const Eigen::Quaterniond& rotation,
                            const Eigen::Vector3d& color,
                            double opacity_logit) {
  positions.push_back(position);
  log_scales.push_back(log_scale);
  rotations.push_back(rotation);
  colors.push_back(color);
  sh.push_back(ShVector::Zero());
  opacity_logits.push_back(opacity_logit);
}

void GaussianSet::normalize_rotations() {
  for (auto& q : rotations) q.normalize();
}

double GaussianSet::extent() const {
  if (empty()) return 0.0;
  Eigen::Vector3d lo = positions[0], hi = positions[0];
  for (const auto& p : positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

uint64_t GaussianSet::parameter_checksum() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* bytes = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (int i = 0; i < size(); ++i) {
    mix(positions[i].data(), 3 * sizeof(double));
    mix(log_scales[i].data(), 3 * sizeof(double));
    mix(rotations[i].coeffs().data(), 4 * sizeof(double));
    mix(colors[i].data(), 3 * sizeof(double));
    mix(sh[i].data(), kShCoeffs * sizeof(double));
    mix(&opacity_logits[i], sizeof(double));
  }
  return h;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale,
                                 const Eigen::Quaterniond& rotation) {
  const Eigen::Matrix3d r = rotation.normalized().toRotationMatrix();
  const Eigen::Vector3d s2 = (2.0 * log_scale).array().exp().matrix();
  Eigen::Matrix3d sigma = r * s2.asDiagonal() * r.transpose();
  // Force exact symmetry against round-off.
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::Matrix3d build_covariance(const GaussianSet& g, int i) {
  return build_covariance(g.log_scales[i], g.rotations[i]);
}

Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma,
                                   const Se3& pose,
                                   const Eigen::Vector3d& mu_cam,
                                   const Intrinsics& K) {
  if (mu_cam.z() <= kNearPlane) {
    throw BehindCameraError("project_covariance: center behind camera");
  }
  const Eigen::Matrix<double, 2, 3> j = projection_jacobian(mu_cam, K);
  const Eigen::Matrix3d r = pose.rotation.toRotationMatrix();
  const Eigen::Matrix<double, 2, 3> a = j * r;
  Eigen::Matrix2d out = a * sigma * a.transpose();
  return 0.5 * (out + out.transpose());
}

GaussianSet transform_set(const GaussianSet& g, const Se3& t) {
  GaussianSet out = g;
  for (int i = 0; i < g.size(); ++i) {
    out.positions[i] = t.apply(g.positions[i]);
    out.rotations[i] = (t.rotation * g.rotations[i]).normalized();
  }
  return out;
}

DensifyResult densify_and_prune(const GaussianSet& g,
                                const std::vector<double>& grad_stats,
                                const DensifyOptions& opts) {
  if (static_cast<int>(grad_stats.size()) != g.size()) {
    throw ContractViolation("densify_and_prune: grad_stats length mismatch");
  }
  DensifyResult res;
  Rng rng = Rng(opts.seed).stream("densify");
  const double split_scale = opts.split_scale_fraction * g.extent();

  GaussianSet& out = res.set;
  out.reserve(g.size() * 2);
  for (int i = 0; i < g.size(); ++i) {
    if (g.opacity(i) < opts.prune_opacity) {
      ++res.pruned;
      continue;
    }
    const bool hot = grad_stats[i] > opts.grad_threshold;
    const double max_scale = g.scale(i).maxCoeff();
    if (hot && max_scale > split_scale) {
      // Split: two children sampled inside the parent, scales shrunk.
      const Eigen::Vector3d child_ls =
          g.log_scales[i].array() - std::log(opts.split_scale_shrink);
      const Eigen::Matrix3d r = g.rotations[i].toRotationMatrix();
      for (int k = 0; k < 2; ++k) {
        const Eigen::Vector3d local =
            rng.normal3().cwiseProduct(g.scale(i));
        out.push_back(g.positions[i] + r * local, child_ls, g.rotations[i],
                      g.colors[i], g.opacity_logits[i]);
        out.sh.back() = g.sh[i];
      }
      ++res.split;
    } else if (hot) {
      // Clone: keep the original and add a copy.
      for (int k = 0; k < 2; ++k) {
        out.push_back(g.positions[i], g.log_scales[i], g.rotations[i],
                      g.colors[i], g.opacity_logits[i]);
        out.sh.back() = g.sh[i];
      }
      ++res.cloned;
    } else {
      out.push_back(g.positions[i], g.log_scales[i], g.rotations[i],
                    g.colors[i], g.opacity_logits[i]);
      out.sh.back() = g.sh[i];
    }
  }

  if (out.empty()) {
    // Never return an empty scene: keep the most opaque Gaussian.
    res.prune_refused = true;
    int best = 0;
    for (int i = 1; i < g.size(); ++i) {
      if (g.opacity_logits[i] > g.opacity_logits[best]) best = i;
    }
    out.push_back(g.positions[best], g.log_scales[best], g.rotations[best],
                  g.colors[best], g.opacity_logits[best]);
    out.sh.back() = g.sh[best];
    res.pruned = g.size() - 1;
  }
  return res;
}

GaussianSet adjust_opacity(const GaussianSet& g, OpacityAdjustMode mode,
                           double ceiling, double reset_target) {
  GaussianSet out = g;
  const double cap =
      mode == OpacityAdjustMode::Clamp ? logit(ceiling) : logit(reset_target);
  for (auto& l : out.opacity_logits) l = std::min(l, cap);
  return out;
}

namespace {
constexpr char kMagic[8] = {'C', 'G', 'S', 'P', 'L', 'T', '0', '1'};
}

void save_gaussians(const GaussianSet& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write gaussian file: " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint32_t n = static_cast<uint32_t>(g.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  std::vector<float> rec(3 + 3 + 4 + 3 + kShCoeffs + 1);
  for (int i = 0; i < g.size(); ++i) {
    int k = 0;
    for (int c = 0; c < 3; ++c) rec[k++] = static_cast<float>(g.positions[i][c]);
    for (int c = 0; c < 3; ++c) rec[k++] = static_cast<float>(g.log_scales[i][c]);
    rec[k++] = static_cast<float>(g.rotations[i].w());
    rec[k++] = static_cast<float>(g.rotations[i].x());
    rec[k++] = static_cast<float>(g.rotations[i].y());
    rec[k++] = static_cast<float>(g.rotations[i].z());
    for (int c = 0; c < 3; ++c) rec[k++] = static_cast<float>(g.colors[i][c]);
    for (int c = 0; c < kShCoeffs; ++c) rec[k++] = static_cast<float>(g.sh[i][c]);
    rec[k++] = static_cast<float>(g.opacity_logits[i]);
    out.write(reinterpret_cast<const char*>(rec.data()),
              static_cast<std::streamsize>(rec.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on gaussian file: " + path);
}

GaussianSet load_gaussians(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read gaussian file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("bad magic in gaussian file: " + path);
  }
  uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in) throw IoError("truncated gaussian file: " + path);
  GaussianSet g;
  g.reserve(static_cast<int>(n));
  std::vector<float> rec(3 + 3 + 4 + 3 + kShCoeffs + 1);
  for (uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(rec.data()),
            static_cast<std::streamsize>(rec.size() * sizeof(float)));
    if (!in) throw IoError("truncated gaussian file: " + path);
    int k = 0;
    Eigen::Vector3d pos(rec[k], rec[k + 1], rec[k + 2]);
    k += 3;
    Eigen::Vector3d ls(rec[k], rec[k + 1], rec[k + 2]);
    k += 3;
    Eigen::Quaterniond q(rec[k], rec[k + 1], rec[k + 2], rec[k + 3]);
    k += 4;
    Eigen::Vector3d col(rec[k], rec[k + 1], rec[k + 2]);
    k += 3;
    ShVector shv;
    for (int c = 0; c < kShCoeffs; ++c) shv[c] = rec[k++];
    g.push_back(pos, ls, q.normalized(), col, rec[k]);
    g.sh.back() = shv;
  }
  return g;
}

void export_ply(const GaussianSet& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write PLY: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << g.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property float opacity\nend_header\n";
  for (int i = 0; i < g.size(); ++i) {
    auto u8 = [](double v) {
      return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    out << g.positions[i].x() << " " << g.positions[i].y() << " "
        << g.positions[i].z() << " " << u8(g.colors[i].x()) << " "
        << u8(g.colors[i].y()) << " " << u8(g.colors[i].z()) << " "
        << g.opacity(i) << "\n";
  }
}

}  // namespace cgsplat
