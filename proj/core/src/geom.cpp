#include "cgsplat/geom.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cgsplat {

namespace {
constexpr double kTaylorEps = 1e-10;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond quat_exp(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  double w, k;
  if (theta < kTaylorEps) {
    // sin(t/2)/t and cos(t/2) expanded around zero.
    w = 1.0 - theta * theta / 8.0;
    k = 0.5 - theta * theta / 48.0;
  } else {
    w = std::cos(0.5 * theta);
    k = std::sin(0.5 * theta) / theta;
  }
  Eigen::Quaterniond q(w, k * omega.x(), k * omega.y(), k * omega.z());
  return q.normalized();
}

Eigen::Vector3d quat_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // take the short arc
  const Eigen::Vector3d v(q.x(), q.y(), q.z());
  const double vnorm = v.norm();
  if (vnorm < kTaylorEps) {
    return 2.0 / q.w() * v;
  }
  const double theta = 2.0 * std::atan2(vnorm, q.w());
  return (theta / vnorm) * v;
}

Se3 Se3::inverse() const {
  const Eigen::Quaterniond rinv = rotation.conjugate();
  return {rinv, -(rinv * translation)};
}

Eigen::Matrix4d Se3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Se3 Se3::normalized() const { return {rotation.normalized(), translation}; }

Se3 compose(const Se3& a, const Se3& b) {
  return {(a.rotation * b.rotation).normalized(),
          a.rotation * b.translation + a.translation};
}

Se3 se3_exp(const Twist& twist) {
  if (!twist.allFinite()) {
    throw std::invalid_argument("se3_exp: twist has non-finite components");
  }
  const Eigen::Vector3d v = twist.head<3>();
  const Eigen::Vector3d omega = twist.tail<3>();
  const double theta = omega.norm();
  const Eigen::Matrix3d Om = skew(omega);

  Eigen::Matrix3d V;
  if (theta < kTaylorEps) {
    V = Eigen::Matrix3d::Identity() + 0.5 * Om + (1.0 / 6.0) * Om * Om;
  } else {
    const double t2 = theta * theta;
    V = Eigen::Matrix3d::Identity() + (1.0 - std::cos(theta)) / t2 * Om +
        (theta - std::sin(theta)) / (t2 * theta) * Om * Om;
  }
  return {quat_exp(omega), V * v};
}

Twist se3_log(const Se3& t) {
  const Eigen::Vector3d omega = quat_log(t.rotation);
  const double theta = omega.norm();
  const Eigen::Matrix3d Om = skew(omega);

  Eigen::Matrix3d Vinv;
  if (theta < kTaylorEps) {
    Vinv = Eigen::Matrix3d::Identity() - 0.5 * Om + (1.0 / 12.0) * Om * Om;
  } else {
    const double half = 0.5 * theta;
    Vinv = Eigen::Matrix3d::Identity() - 0.5 * Om +
           (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta) *
               Om * Om;
  }
  Twist out;
  out.head<3>() = Vinv * t.translation;
  out.tail<3>() = omega;
  return out;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("Intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("Intrinsics: image size must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw std::invalid_argument(
        "Intrinsics: principal point outside image bounds");
  }
}

Intrinsics Intrinsics::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open intrinsics file: " + path);
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw IoError("malformed intrinsics file: " + path);
  }
  k.validate();
  return k;
}

void Intrinsics::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write intrinsics file: " + path);
  out.precision(17);
  out << fx << " " << fy << " " << cx << " " << cy << " " << width << " "
      << height << "\n";
}

PixelDepth project_point(const Eigen::Vector3d& p_world, const Se3& pose,
                         const Intrinsics& K) {
  const Eigen::Vector3d p = pose.apply(p_world);
  if (p.z() <= kNearPlane) {
    throw BehindCameraError("project_point: point at or behind camera");
  }
  return {{K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy}, p.z()};
}

Eigen::Vector3d backproject(double u, double v, double depth,
                            const Intrinsics& K) {
  if (!(depth > 0.0)) {
    throw std::invalid_argument("backproject: depth must be positive");
  }
  return {(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth};
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p_cam,
                                                const Intrinsics& K) {
  const double z = p_cam.z();
  Eigen::Matrix<double, 2, 3> j;
  j << K.fx / z, 0.0, -K.fx * p_cam.x() / (z * z), 0.0, K.fy / z,
      -K.fy * p_cam.y() / (z * z);
  return j;
}

}  // namespace cgsplat
