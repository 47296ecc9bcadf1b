#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "dsample/autodiff.hpp"
#include "dsample/geometry.hpp"

namespace dsample {

using Mat3 = std::array<std::array<double, 3>, 3>;

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
};

inline double dot(const Quaternion& a, const Quaternion& b) { return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z; }

/// Unit quaternion (w, x, y, z) and its rotation matrix.
class Rotation {
 public:
  Rotation() = default;

  static Rotation identity() { return {}; }

  static Rotation from_quaternion(Quaternion q) {
    const double n = std::sqrt(dot(q, q));
    if (!(n > 0.0)) throw Error("Rotation: zero quaternion");
    Rotation r;
    r.q_ = {q.w / n, q.x / n, q.y / n, q.z / n};
    return r;
  }

  /// Intrinsic Z-Y-X Euler angles in radians: R = Rz(yaw) Ry(pitch) Rx(roll).
  static Rotation from_euler_zyx(double yaw, double pitch, double roll) {
    const double cz = std::cos(yaw / 2), sz = std::sin(yaw / 2);
    const double cy = std::cos(pitch / 2), sy = std::sin(pitch / 2);
    const double cx = std::cos(roll / 2), sx = std::sin(roll / 2);
    return from_quaternion({cz * cy * cx + sz * sy * sx, cz * cy * sx - sz * sy * cx, cz * sy * cx + sz * cy * sx,
                            sz * cy * cx - cz * sy * sx});
  }

  const Quaternion& quaternion() const { return q_; }

  Mat3 matrix() const {
    const auto [w, x, y, z] = q_;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
  }

  Rotation inverse() const {
    Rotation r;
    r.q_ = {q_.w, -q_.x, -q_.y, -q_.z};
    return r;
  }

  Point3 apply(const Point3& p) const {
    const auto R = matrix();
    Point3 out{};
    for (int i = 0; i < 3; ++i) out[i] = R[i][0] * p[0] + R[i][1] * p[1] + R[i][2] * p[2];
    return out;
  }

  PointCloud apply(const PointCloud& c) const {
    std::vector<Point3> out;
    out.reserve(c.size());
    for (const auto& p : c) out.push_back(apply(p));
    return PointCloud(std::move(out));
  }

  /// Row-stacked clouds rotate as X R^T.
  ad::Tensor matrix_tensor() const {
    const auto R = matrix();
    std::vector<double> v;
    for (const auto& row : R) v.insert(v.end(), row.begin(), row.end());
    return ad::Tensor::from_data({3, 3}, std::move(v));
  }

 private:
  Quaternion q_;
};

inline ad::Tensor identity3() { return ad::Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}); }

/// Rotation matrix [3, 3] of a unit quaternion tensor [4] = (w, x, y, z).
inline ad::Tensor quat_to_matrix(const ad::Tensor& q) {
  if (q.rank() != 1 || q.dim(0) != 4) throw_shape("quat_to_matrix", q.shape());
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const Mat3 R{{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
                {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
                {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
  std::vector<double> v;
  for (const auto& row : R) v.insert(v.end(), row.begin(), row.end());
  return ad::detail::make_op("quat_to_matrix", {3, 3}, std::move(v), {q}, [](ad::detail::Node& self) {
    double* gq = ad::detail::sink(self, 0);
    if (!gq) return;
    const auto& qv = ad::detail::in_value(self, 0);
    const double w = qv[0], x = qv[1], y = qv[2], z = qv[3];
    // Partial derivatives of the nine entries with respect to w, x, y, z.
    const double dw[9] = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
    const double dx[9] = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
    const double dy[9] = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
    const double dz[9] = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
    for (int i = 0; i < 9; ++i) {
      const double g = self.grad[i];
      gq[0] += g * dw[i];
      gq[1] += g * dx[i];
      gq[2] += g * dy[i];
      gq[3] += g * dz[i];
    }
  });
}

/// 2 acos(2 <q_pred, q_gt>^2 - 1) in degrees, argument clamped to [-1, 1].
/// This equals twice the geodesic angle between the two rotations.
inline double rotation_error(const Rotation& pred, const Rotation& gt) {
  const double d = dot(pred.quaternion(), gt.quaternion());
  const double c = std::clamp(2.0 * d * d - 1.0, -1.0, 1.0);
  return 2.0 * std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace dsample
