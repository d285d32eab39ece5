#pragma once

#include <string>

#include "cgsplat/eval.hpp"
#include "cgsplat/gaussians.hpp"
#include "cgsplat/geom.hpp"
#include "cgsplat/pipeline.hpp"

namespace cgsplat {

// Procedural ground-truth generator: a random Gaussian scene observed from a
// parametric camera path, rendered with the library renderer so images,
// depth maps and poses are exactly consistent.
struct SynthSpec {
  int gaussian_count = 32;
  double extent = 3.0;  // side of the position sampling box
  std::string trajectory = "orbit";  // orbit | line | arc | static
  int frames = 8;
  int width = 64;
  int height = 64;
  double step_fraction = 0.02;  // per-frame camera step / scene extent
  double fov_deg = 60.0;
  double camera_distance = 6.0;
  uint64_t seed = 1;
};

struct SynthScene {
  GaussianSet set;                    // in the first camera's frame
  std::vector<Se3> world_to_cam;      // per frame; first is identity
  Intrinsics intrinsics;
};

SynthScene make_synth_scene(const SynthSpec& spec);

// Renders and writes the full dataset layout consumed by load_dataset:
// frame_%04d.png, depth_%04d.bin (+ 16-bit PNG), intrinsics.txt,
// traj_gt.txt (camera-to-world), scene_gt.gsplat and a spec snapshot.
void write_synth_dataset(const SynthSpec& spec, const std::string& out_dir);

// In-memory equivalent, for tests and the acceptance suite.
FrameSequence synth_sequence(const SynthSpec& spec, int test_every = 8);

}  // namespace cgsplat
