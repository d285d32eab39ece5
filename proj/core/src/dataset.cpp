#include "cgsplat/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "cgsplat/errors.hpp"

namespace cgsplat {

namespace fs = std::filesystem;

namespace {

// Single-wildcard glob: prefix*suffix.
bool glob_match(const std::string& pattern, const std::string& name) {
  const size_t star = pattern.find('*');
  if (star == std::string::npos) return pattern == name;
  const std::string prefix = pattern.substr(0, star);
  const std::string suffix = pattern.substr(star + 1);
  if (name.size() < prefix.size() + suffix.size()) return false;
  return name.compare(0, prefix.size(), prefix) == 0 &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) ==
             0;
}

std::string depth_name_for(const std::string& frame_name) {
  std::string n = frame_name;
  if (n.rfind("frame", 0) == 0) n.replace(0, 5, "depth");
  const size_t dot = n.rfind('.');
  if (dot != std::string::npos) n = n.substr(0, dot);
  return n + ".bin";
}

}  // namespace

FrameSequence load_dataset(const DatasetDescriptor& desc) {
  if (!fs::is_directory(desc.root)) {
    throw IoError("dataset root is not a directory: " + desc.root);
  }
  std::vector<std::string> frame_files;
  for (const auto& entry : fs::directory_iterator(desc.root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (glob_match(desc.frame_glob, name)) frame_files.push_back(name);
  }
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.empty()) {
    throw IoError("no frames matching '" + desc.frame_glob + "' under " +
                  desc.root);
  }

  FrameSequence seq;
  const std::string intr = desc.intrinsics_path.empty()
                               ? (fs::path(desc.root) / "intrinsics.txt").string()
                               : desc.intrinsics_path;
  seq.intrinsics = Intrinsics::load(intr);

  for (const std::string& name : frame_files) {
    seq.images.push_back(read_png((fs::path(desc.root) / name).string()));
    seq.frame_names.push_back(name);
    const fs::path dpath = fs::path(desc.root) / depth_name_for(name);
    seq.depths.push_back(fs::exists(dpath) ? read_depth_bin(dpath.string())
                                           : Image());
  }

  std::string traj = desc.gt_trajectory_path;
  if (traj.empty()) {
    const fs::path p = fs::path(desc.root) / "traj_gt.txt";
    if (fs::exists(p)) traj = p.string();
  }
  if (!traj.empty()) {
    const Trajectory t = load_trajectory(traj);
    if (t.size() != seq.count()) {
      throw IoError("ground-truth trajectory length does not match frames");
    }
    for (const auto& e : t.entries) {
      seq.gt_world_to_cam.push_back(e.pose.inverse());
    }
  }

  for (int i = 0; i < seq.count(); ++i) {
    if (desc.test_every > 0 && (i + 1) % desc.test_every == 0) {
      seq.test_indices.push_back(i);
    } else {
      seq.train_indices.push_back(i);
    }
  }
  return seq;
}

uint64_t dataset_content_hash(const DatasetDescriptor& desc) {
  uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const char* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<uint8_t>(data[i]);
      h *= 1099511628211ull;
    }
  };
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(desc.root)) {
    if (entry.is_regular_file()) {
      files.push_back(entry.path().filename().string());
    }
  }
  std::sort(files.begin(), files.end());
  for (const std::string& name : files) {
    mix_bytes(name.data(), name.size());
    std::ifstream in(fs::path(desc.root) / name, std::ios::binary);
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
      mix_bytes(buf, static_cast<size_t>(in.gcount()));
      if (!in) break;
    }
  }
  return h;
}

}  // namespace cgsplat
