#pragma once

#include <string>

#include "cgsplat/pipeline.hpp"

namespace cgsplat {

// On-disk dataset description. Frames are the lexicographically sorted files
// matching frame_glob under root; depth files pair with frames by replacing
// the "frame" stem prefix with "depth" and the extension with .bin.
struct DatasetDescriptor {
  std::string root;
  std::string frame_glob = "frame_*.png";
  std::string intrinsics_path;  // default: <root>/intrinsics.txt
  std::string gt_trajectory_path;  // default: <root>/traj_gt.txt if present
  int test_every = 8;  // every test_every-th frame held out; 0 disables
};

FrameSequence load_dataset(const DatasetDescriptor& desc);

// FNV-1a content hash over the dataset inputs, recorded in run directories
// for reproducibility.
uint64_t dataset_content_hash(const DatasetDescriptor& desc);

}  // namespace cgsplat
