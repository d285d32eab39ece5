#include "cgsplat/eval.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cgsplat/errors.hpp"

namespace cgsplat {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ContractViolation("psnr: shape mismatch");
  double se = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin * kWin>& ssim_window() {
  static const std::array<double, kWin * kWin> w = [] {
    std::array<double, kWin * kWin> out{};
    double sum = 0.0;
    for (int dy = -kHalf; dy <= kHalf; ++dy) {
      for (int dx = -kHalf; dx <= kHalf; ++dx) {
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        out[(dy + kHalf) * kWin + (dx + kHalf)] = v;
        sum += v;
      }
    }
    for (double& v : out) v /= sum;
    return out;
  }();
  return w;
}

// Per-channel SSIM over valid windows; optionally accumulates d(ssim)/d(a)
// into grad (which must be pre-sized and zeroed). upstream is the factor
// applied to each window's contribution (1 / (num_windows * channels)).
double ssim_channel(const Image& a, const Image& b, int ch, double upstream,
                    Image* grad) {
  const auto& w = ssim_window();
  const int h = a.height(), wd = a.width();
  double total = 0.0;
  for (int yc = kHalf; yc < h - kHalf; ++yc) {
    for (int xc = kHalf; xc < wd - kHalf; ++xc) {
      double mx = 0.0, my = 0.0, exx = 0.0, eyy = 0.0, exy = 0.0;
      for (int dy = -kHalf; dy <= kHalf; ++dy) {
        for (int dx = -kHalf; dx <= kHalf; ++dx) {
          const double wk = w[(dy + kHalf) * kWin + (dx + kHalf)];
          const double xa = a.at(yc + dy, xc + dx, ch);
          const double xb = b.at(yc + dy, xc + dx, ch);
          mx += wk * xa;
          my += wk * xb;
          exx += wk * xa * xa;
          eyy += wk * xb * xb;
          exy += wk * xa * xb;
        }
      }
      const double sxx = exx - mx * mx;
      const double syy = eyy - my * my;
      const double sxy = exy - mx * my;
      const double a1 = 2.0 * mx * my + kC1;
      const double a2 = 2.0 * sxy + kC2;
      const double b1 = mx * mx + my * my + kC1;
      const double b2 = sxx + syy + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;

      if (grad != nullptr) {
        const double g = upstream;
        const double da1 = g * a2 / (b1 * b2);
        const double da2 = g * a1 / (b1 * b2);
        const double db1 = -g * s / b1;
        const double db2 = -g * s / b2;
        const double dsxy = 2.0 * da2;
        const double dsxx = db2;
        const double dmx =
            2.0 * my * da1 + 2.0 * mx * db1 - 2.0 * mx * dsxx - my * dsxy;
        for (int dy = -kHalf; dy <= kHalf; ++dy) {
          for (int dx = -kHalf; dx <= kHalf; ++dx) {
            const double wk = w[(dy + kHalf) * kWin + (dx + kHalf)];
            const double xa = a.at(yc + dy, xc + dx, ch);
            const double xb = b.at(yc + dy, xc + dx, ch);
            grad->at(yc + dy, xc + dx, ch) +=
                wk * (dmx + 2.0 * xa * dsxx + xb * dsxy);
          }
        }
      }
    }
  }
  const int windows = (h - 2 * kHalf) * (wd - 2 * kHalf);
  return total / windows;
}

double ssim_impl(const Image& a, const Image& b, Image* grad) {
  if (!a.same_shape(b)) throw ContractViolation("ssim: shape mismatch");
  if (a.height() < kWin || a.width() < kWin) {
    throw ContractViolation("ssim: image smaller than the 11x11 window");
  }
  const int windows = (a.height() - 2 * kHalf) * (a.width() - 2 * kHalf);
  const double upstream = 1.0 / (static_cast<double>(windows) * a.channels());
  if (grad != nullptr) *grad = Image(a.height(), a.width(), a.channels());
  double total = 0.0;
  for (int ch = 0; ch < a.channels(); ++ch) {
    total += ssim_channel(a, b, ch, upstream, grad);
  }
  return total / a.channels();
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_gradient(const Image& a, const Image& b, Image* d_a) {
  return ssim_impl(a, b, d_a);
}

void Trajectory::validate() const {
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].index <= entries[i - 1].index) {
      throw ContractViolation("trajectory indices must strictly increase");
    }
  }
}

std::vector<Eigen::Vector3d> Trajectory::positions() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.pose.translation);
  return out;
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);
  Trajectory t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TrajectoryEntry e;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> e.index >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw IoError("trajectory parse error at " + path + ":" +
                    std::to_string(line_no));
    }
    e.pose.translation = {tx, ty, tz};
    e.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    t.entries.push_back(e);
  }
  t.validate();
  return t;
}

void save_trajectory(const Trajectory& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  out.precision(17);
  for (const auto& e : t.entries) {
    const auto& p = e.pose;
    out << e.index << " " << p.translation.x() << " " << p.translation.y()
        << " " << p.translation.z() << " " << p.rotation.x() << " "
        << p.rotation.y() << " " << p.rotation.z() << " " << p.rotation.w()
        << "\n";
  }
}

SimilarityTransform umeyama_align(const Trajectory& est,
                                  const Trajectory& gt) {
  if (est.size() != gt.size()) {
    throw ContractViolation("umeyama_align: trajectory length mismatch");
  }
  const int n = est.size();
  if (n < 3) throw ContractViolation("umeyama_align: need at least 3 poses");

  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = est.entries[i].pose.translation;
    dst.col(i) = gt.entries[i].pose.translation;
  }
  // Degeneracy: the source points must span at least a plane's worth of
  // directions for the rotation to be determined.
  const Eigen::Matrix3Xd centered =
      src.colwise() - src.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv[1] <= 1e-12 * std::max(1.0, sv[0])) {
    throw DegenerateInput("umeyama_align: collinear configuration");
  }

  const Eigen::Matrix4d m = Eigen::umeyama(src, dst, true);
  const Eigen::Matrix3d sr = m.topLeftCorner<3, 3>();
  SimilarityTransform out;
  out.scale = std::cbrt(sr.determinant());
  out.rotation = Eigen::Quaterniond(Eigen::Matrix3d(sr / out.scale));
  out.rotation.normalize();
  out.translation = m.topRightCorner<3, 1>();
  return out;
}

double ate(const Trajectory& est, const Trajectory& gt, bool align) {
  if (est.size() != gt.size()) {
    throw ContractViolation("ate: trajectory length mismatch");
  }
  SimilarityTransform sim;
  if (align) sim = umeyama_align(est, gt);
  double se = 0.0;
  for (int i = 0; i < est.size(); ++i) {
    const Eigen::Vector3d p = align
                                  ? sim.apply(est.entries[i].pose.translation)
                                  : est.entries[i].pose.translation;
    se += (p - gt.entries[i].pose.translation).squaredNorm();
  }
  return std::sqrt(se / est.size());
}

RpeResult rpe(const Trajectory& est, const Trajectory& gt, int delta) {
  if (est.size() != gt.size()) {
    throw ContractViolation("rpe: trajectory length mismatch");
  }
  if (est.size() <= delta) {
    throw ContractViolation("rpe: trajectory shorter than delta");
  }
  double se_t = 0.0, se_r = 0.0;
  const int n = est.size() - delta;
  for (int i = 0; i < n; ++i) {
    const Se3 rel_gt = compose(gt.entries[i].pose.inverse(),
                               gt.entries[i + delta].pose);
    const Se3 rel_est = compose(est.entries[i].pose.inverse(),
                                est.entries[i + delta].pose);
    const Se3 err = compose(rel_gt.inverse(), rel_est);
    se_t += err.translation.squaredNorm();
    const double ang = quat_log(err.rotation).norm();
    se_r += ang * ang;
  }
  RpeResult r;
  r.rpe_t = 100.0 * std::sqrt(se_t / n);
  r.rpe_r_deg = std::sqrt(se_r / n) * 180.0 / M_PI;
  return r;
}

Trajectory apply_similarity(const Trajectory& t,
                            const SimilarityTransform& s) {
  Trajectory out = t;
  for (auto& e : out.entries) {
    e.pose.translation = s.apply(e.pose.translation);
    e.pose.rotation = (s.rotation * e.pose.rotation).normalized();
  }
  return out;
}

}  // namespace cgsplat
