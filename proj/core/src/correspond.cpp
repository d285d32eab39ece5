#include "cgsplat/correspond.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgsplat/errors.hpp"
#include "cgsplat/rng.hpp"

namespace cgsplat {

void save_correspondences_csv(const CorrespondenceSet& set,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write correspondence CSV: " + path);
  out.precision(17);
  out << "kx,ky,kpx,kpy,conf\n";
  for (const auto& p : set.pairs) {
    out << p.target_px.x() << "," << p.target_px.y() << ","
        << p.rendered_px.x() << "," << p.rendered_px.y() << ","
        << p.confidence << "\n";
  }
}

CorrespondenceSet load_correspondences_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read correspondence CSV: " + path);
  CorrespondenceSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "kx,ky,kpx,kpy,conf") continue;
    std::istringstream ls(line);
    Correspondence c;
    char comma;
    if (!(ls >> c.target_px.x() >> comma >> c.target_px.y() >> comma >>
          c.rendered_px.x() >> comma >> c.rendered_px.y() >> comma >>
          c.confidence)) {
      throw IoError("correspondence CSV parse error at " + path + ":" +
                    std::to_string(line_no));
    }
    set.pairs.push_back(c);
  }
  return set;
}

CorrespondenceSet oracle_match(const Image& target_depth,
                               const Se3& target_pose,
                               const Se3& hypothesis_pose, const Intrinsics& K,
                               int sample_count, double noise_sigma,
                               uint64_t seed) {
  if (target_depth.channels() != 1) {
    throw ContractViolation("oracle_match: depth must be single-channel");
  }
  Rng rng = Rng(seed).stream("oracle-match");
  const Se3 target_to_world = target_pose.inverse();
  const double umax = K.width - 1.0;
  const double vmax = K.height - 1.0;

  // Reject samples near depth discontinuities: the blended ground-truth
  // depth is a foreground/background mixture there, back-projecting to
  // phantom points no matcher would report.
  auto depth_is_reliable = [&](int x, int y) {
    if (x < 1 || y < 1 || x > target_depth.width() - 2 ||
        y > target_depth.height() - 2) {
      return false;
    }
    const double c = target_depth.at(y, x);
    if (!(c > 0.0)) return false;
    double lo = c, hi = c;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const double v = target_depth.at(y + dy, x + dx);
        if (!(v > 0.0)) return false;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    return hi - lo <= 0.05 * c;
  };

  CorrespondenceSet set;
  set.pairs.reserve(sample_count);
  int attempts = 0;
  const int max_attempts = sample_count * 40;
  while (set.size() < sample_count && attempts < max_attempts) {
    ++attempts;
    const int x = rng.uniform_int(0, target_depth.width() - 1);
    const int y = rng.uniform_int(0, target_depth.height() - 1);
    if (!depth_is_reliable(x, y)) continue;
    const double d = target_depth.at(y, x);

    const Eigen::Vector3d world =
        target_to_world.apply(backproject(x, y, d, K));
    const Eigen::Vector3d hyp = hypothesis_pose.apply(world);
    if (hyp.z() <= kNearPlane) continue;
    Eigen::Vector2d kp(K.fx * hyp.x() / hyp.z() + K.cx,
                       K.fy * hyp.y() / hyp.z() + K.cy);
    if (noise_sigma > 0.0) {
      kp.x() += rng.normal(0.0, noise_sigma);
      kp.y() += rng.normal(0.0, noise_sigma);
    }
    if (kp.x() < 0.0 || kp.x() > umax || kp.y() < 0.0 || kp.y() > vmax) {
      continue;
    }
    set.pairs.push_back({{static_cast<double>(x), static_cast<double>(y)},
                         kp,
                         1.0});
  }
  return set;
}

CorrespondenceSet grid_ncc_match(const Image& target, const Image& rendered,
                                 int patch, int stride, int search_radius,
                                 double min_ncc) {
  if (target.height() != rendered.height() ||
      target.width() != rendered.width()) {
    throw ContractViolation("grid_ncc_match: image size mismatch");
  }
  const Image a = target.to_gray();
  const Image b = rendered.to_gray();
  const int half = patch / 2;
  const int w = a.width(), h = a.height();

  auto patch_stats = [&](const Image& img, int cy, int cx, double* mean,
                         double* var) {
    double s = 0.0, s2 = 0.0;
    const int n = patch * patch;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) {
        const double v = img.at(cy + dy, cx + dx);
        s += v;
        s2 += v * v;
      }
    }
    *mean = s / n;
    *var = s2 / n - (*mean) * (*mean);
  };

  CorrespondenceSet set;
  const int margin = half + search_radius;
  for (int y = margin; y < h - margin; y += stride) {
    for (int x = margin; x < w - margin; x += stride) {
      double mean_a, var_a;
      patch_stats(a, y, x, &mean_a, &var_a);
      if (var_a < 1e-8) continue;  // textureless

      double best_ncc = -2.0;
      Eigen::Vector2i best_off(0, 0);
      for (int oy = -search_radius; oy <= search_radius; ++oy) {
        for (int ox = -search_radius; ox <= search_radius; ++ox) {
          double mean_b, var_b;
          patch_stats(b, y + oy, x + ox, &mean_b, &var_b);
          if (var_b < 1e-8) continue;
          double cov = 0.0;
          for (int dy = -half; dy <= half; ++dy) {
            for (int dx = -half; dx <= half; ++dx) {
              cov += (a.at(y + dy, x + dx) - mean_a) *
                     (b.at(y + oy + dy, x + ox + dx) - mean_b);
            }
          }
          cov /= patch * patch;
          const double ncc = cov / std::sqrt(var_a * var_b);
          if (ncc > best_ncc) {
            best_ncc = ncc;
            best_off = {ox, oy};
          }
        }
      }
      if (best_ncc >= min_ncc) {
        set.pairs.push_back(
            {{static_cast<double>(x), static_cast<double>(y)},
             {static_cast<double>(x + best_off.x()),
              static_cast<double>(y + best_off.y())},
             0.5 * (best_ncc + 1.0)});
      }
    }
  }
  return set;
}

CorrespondenceSet ExternalMatcher::match(const Image& target,
                                         const Image& rendered) {
  namespace fs = std::filesystem;
  fs::create_directories(work_dir_);
  write_png(target, (fs::path(work_dir_) / "target.png").string());
  write_png(rendered, (fs::path(work_dir_) / "rendered.png").string());
  const std::string cmd = command_ + " " + work_dir_;
  if (std::system(cmd.c_str()) != 0) {
    throw IoError("external matcher command failed: " + cmd);
  }
  return load_correspondences_csv(
      (fs::path(work_dir_) / "matches.csv").string());
}

const CorrespondenceSet& cached_match(Matcher& matcher, const Image& target,
                                      const Image& rendered,
                                      CorrespondenceCache& cache,
                                      int iteration, int refresh_interval) {
  if (refresh_interval < 1) {
    throw ContractViolation("cached_match: refresh interval must be >= 1");
  }
  if (!cache.filled || iteration % refresh_interval == 0) {
    cache.set = matcher.match(target, rendered);
    cache.set.age = 0;
    cache.filled = true;
    ++cache.matcher_calls;
  } else {
    ++cache.set.age;
  }
  return cache.set;
}

}  // namespace cgsplat
