#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cgsplat/geom.hpp"
#include "cgsplat/image.hpp"

namespace cgsplat {

// A matched pixel pair: k in the target image, k' in the rendered image.
struct Correspondence {
  Eigen::Vector2d target_px;    // k
  Eigen::Vector2d rendered_px;  // k'
  double confidence = 1.0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
  int age = 0;  // iterations since computed

  int size() const { return static_cast<int>(pairs.size()); }
  bool empty() const { return pairs.empty(); }
};

void save_correspondences_csv(const CorrespondenceSet& set,
                              const std::string& path);
CorrespondenceSet load_correspondences_csv(const std::string& path);

// Pluggable matcher between a target image and a rendered image. Must be
// deterministic given identical inputs and seed.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual CorrespondenceSet match(const Image& target,
                                  const Image& rendered) = 0;
};

// Ground-truth reprojection matcher: samples target pixels with valid depth,
// back-projects them with the true target pose, reprojects them into the
// hypothesis view and adds isotropic pixel noise. Pairs landing outside the
// image are dropped. Stands in for neural matchers at desk scale.
CorrespondenceSet oracle_match(const Image& target_depth,
                               const Se3& target_pose,
                               const Se3& hypothesis_pose, const Intrinsics& K,
                               int sample_count, double noise_sigma,
                               uint64_t seed);

class OracleMatcher : public Matcher {
 public:
  // hypothesis_pose is polled at every match so a cache refresh sees the
  // current estimate.
  OracleMatcher(Image target_depth, Se3 target_pose,
                std::function<Se3()> hypothesis_pose, Intrinsics K,
                int sample_count, double noise_sigma, uint64_t seed)
      : target_depth_(std::move(target_depth)),
        target_pose_(target_pose),
        hypothesis_pose_(std::move(hypothesis_pose)),
        intrinsics_(K),
        sample_count_(sample_count),
        noise_sigma_(noise_sigma),
        seed_(seed) {}

  CorrespondenceSet match(const Image&, const Image&) override {
    return oracle_match(target_depth_, target_pose_, hypothesis_pose_(),
                        intrinsics_, sample_count_, noise_sigma_, seed_);
  }

 private:
  Image target_depth_;
  Se3 target_pose_;
  std::function<Se3()> hypothesis_pose_;
  Intrinsics intrinsics_;
  int sample_count_;
  double noise_sigma_;
  uint64_t seed_;
};

// Classical block matcher: normalized cross-correlation of patches on a grid,
// searching integer offsets within search_radius. Matches with NCC below 0.7
// and textureless patches (variance < 1e-8) are dropped.
CorrespondenceSet grid_ncc_match(const Image& target, const Image& rendered,
                                 int patch = 7, int stride = 4,
                                 int search_radius = 6,
                                 double min_ncc = 0.7);

class GridNccMatcher : public Matcher {
 public:
  GridNccMatcher(int patch = 7, int stride = 4, int search_radius = 6,
                 double min_ncc = 0.7)
      : patch_(patch), stride_(stride), radius_(search_radius),
        min_ncc_(min_ncc) {}
  CorrespondenceSet match(const Image& target, const Image& rendered) override {
    return grid_ncc_match(target, rendered, patch_, stride_, radius_,
                          min_ncc_);
  }

 private:
  int patch_, stride_, radius_;
  double min_ncc_;
};

// Adapter for out-of-process matchers: writes target.png and rendered.png
// into work_dir, runs `command <work_dir>`, reads back
// <work_dir>/matches.csv.
class ExternalMatcher : public Matcher {
 public:
  ExternalMatcher(std::string command, std::string work_dir)
      : command_(std::move(command)), work_dir_(std::move(work_dir)) {}
  CorrespondenceSet match(const Image& target, const Image& rendered) override;

 private:
  std::string command_;
  std::string work_dir_;
};

struct CorrespondenceCache {
  CorrespondenceSet set;
  bool filled = false;
  int matcher_calls = 0;
};

// Refreshes the cache through the matcher iff iteration is a multiple of
// refresh_interval or the cache is empty; otherwise returns the cached set
// with its age incremented. Cached k' coordinates are still evaluated against
// the current render by the loss each step.
const CorrespondenceSet& cached_match(Matcher& matcher, const Image& target,
                                      const Image& rendered,
                                      CorrespondenceCache& cache,
                                      int iteration, int refresh_interval);

}  // namespace cgsplat
