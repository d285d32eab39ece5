#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>

#include "cgsplat/errors.hpp"

namespace cgsplat {

using Twist = Eigen::Matrix<double, 6, 1>;  // [translational; rotational]

// Near-plane cutoff in scene units. Points with camera-frame z at or below
// this are behind the camera for projection purposes.
inline constexpr double kNearPlane = 1e-6;

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// Exponential map so(3) -> unit quaternion and its inverse. quat_log returns
// the rotation vector with angle in [0, pi].
Eigen::Quaterniond quat_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d quat_log(const Eigen::Quaterniond& q);

// Rigid transform: x -> rotation * x + translation. Used both for camera
// poses (world-to-camera) and for learnable transforms applied to Gaussians.
struct Se3 {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d translation{0.0, 0.0, 0.0};

  static Se3 identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return rotation * x + translation;
  }
  Se3 inverse() const;
  Eigen::Matrix4d matrix() const;
  Se3 normalized() const;
};

// a then b is compose(b, a): compose(a, b).apply(x) == a.apply(b.apply(x)).
Se3 compose(const Se3& a, const Se3& b);

Se3 se3_exp(const Twist& twist);
Twist se3_log(const Se3& t);

// Pinhole camera. fx, fy, cx, cy in pixels.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
  static Intrinsics load(const std::string& path);
  void save(const std::string& path) const;
};

struct PixelDepth {
  Eigen::Vector2d uv;
  double depth = 0.0;
};

// Perspective projection of a world point: uv = K * (W p) / (W p)_z.
// Throws BehindCameraError if the camera-frame depth is <= kNearPlane.
PixelDepth project_point(const Eigen::Vector3d& p_world, const Se3& pose,
                         const Intrinsics& K);

// Inverse of project_point at identity pose. Throws on depth <= 0.
Eigen::Vector3d backproject(double u, double v, double depth,
                            const Intrinsics& K);

// 2x3 Jacobian of the perspective projection (u, v) with respect to the
// camera-frame point, evaluated at p_cam.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p_cam,
                                                const Intrinsics& K);

}  // namespace cgsplat
