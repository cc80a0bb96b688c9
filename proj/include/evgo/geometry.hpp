#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

#include "evgo/core.hpp"

namespace evgo {

template <typename Scalar>
struct Intrinsics {
  Scalar fx{1}, fy{1}, cx{0}, cy{0};
};
using Intrinsicsd = Intrinsics<double>;

// Rigid transform, camera-to-world. Unit quaternion plus translation; the
// quaternion is renormalized after every composition.
template <typename Scalar>
class Pose {
 public:
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Quat = Eigen::Quaternion<Scalar>;

  Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Pose(const Quat& q, const Vec3& t) : q_(q.normalized()), t_(t) {}

  static Pose identity() { return Pose(); }

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }
  Eigen::Matrix<Scalar, 3, 3> rotation_matrix() const { return q_.toRotationMatrix(); }

  Pose inverse() const {
    const Quat qi = q_.conjugate();
    return Pose(qi, qi * (-t_));
  }

  Pose operator*(const Pose& rhs) const { return Pose(q_ * rhs.q_, q_ * rhs.t_ + t_); }

  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

 private:
  Quat q_;
  Vec3 t_;
};
using Posed = Pose<double>;

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return m;
}

namespace detail {
constexpr double kSmallAngle = 1e-8;  // Taylor branch threshold for exp/log
}

template <typename Scalar>
Eigen::Quaternion<Scalar> so3_exp(const Eigen::Matrix<Scalar, 3, 1>& omega) {
  const Scalar theta2 = omega.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  Scalar w, k;
  if (theta < Scalar(detail::kSmallAngle)) {
    // sin(t/2)/t and cos(t/2) to second order
    w = Scalar(1) - theta2 / Scalar(8);
    k = Scalar(0.5) - theta2 / Scalar(48);
  } else {
    w = std::cos(theta / Scalar(2));
    k = std::sin(theta / Scalar(2)) / theta;
  }
  Eigen::Quaternion<Scalar> q(w, k * omega.x(), k * omega.y(), k * omega.z());
  q.normalize();
  return q;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> so3_log(const Eigen::Quaternion<Scalar>& q_in) {
  Eigen::Matrix<Scalar, 3, 1> vec = q_in.vec();
  Scalar w = q_in.w();
  if (w < Scalar(0)) {  // shortest representative
    vec = -vec;
    w = -w;
  }
  const Scalar n = vec.norm();
  if (n < Scalar(detail::kSmallAngle)) {
    return vec * (Scalar(2) / w) * (Scalar(1) - n * n / (Scalar(3) * w * w));
  }
  const Scalar theta = Scalar(2) * std::atan2(n, w);
  return vec * (theta / n);
}

// V matrix of the SO(3) exponential: exp((omega,v)) has translation V(omega)*v.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_left_jacobian(const Eigen::Matrix<Scalar, 3, 1>& omega) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  const Scalar theta2 = omega.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  const Mat3 o = skew(omega);
  Scalar a, b;
  if (theta < Scalar(1e-4)) {
    a = Scalar(0.5) - theta2 / Scalar(24);
    b = Scalar(1) / Scalar(6) - theta2 / Scalar(120);
  } else {
    a = (Scalar(1) - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * o + b * o * o;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3_left_jacobian_inv(const Eigen::Matrix<Scalar, 3, 1>& omega) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  const Scalar theta2 = omega.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  const Mat3 o = skew(omega);
  Scalar c;
  if (theta < Scalar(1e-4)) {
    c = Scalar(1) / Scalar(12) + theta2 / Scalar(720);
  } else {
    c = (Scalar(1) - theta * std::sin(theta) / (Scalar(2) * (Scalar(1) - std::cos(theta)))) / theta2;
  }
  return Mat3::Identity() - Scalar(0.5) * o + c * o * o;
}

// Twist ordering is (omega, v): rotation in coords 0..2, translation in 3..5.
template <typename Scalar>
Pose<Scalar> se3_exp(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  const Eigen::Matrix<Scalar, 3, 1> omega = xi.template head<3>();
  const Eigen::Matrix<Scalar, 3, 1> v = xi.template tail<3>();
  return Pose<Scalar>(so3_exp(omega), so3_left_jacobian(omega) * v);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 6, 1> se3_log(const Pose<Scalar>& pose) {
  Eigen::Matrix<Scalar, 6, 1> xi;
  const Eigen::Matrix<Scalar, 3, 1> omega = so3_log(pose.rotation());
  xi.template head<3>() = omega;
  xi.template tail<3>() = so3_left_jacobian_inv(omega) * pose.translation();
  return xi;
}

// Inverse left Jacobian of SE(3) at xi = (omega, v), so that
// log(exp(delta) * exp(xi)) = xi + J_l^{-1}(xi) * delta + O(|delta|^2).
template <typename Scalar>
Eigen::Matrix<Scalar, 6, 6> se3_left_jacobian_inv(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  const Eigen::Matrix<Scalar, 3, 1> omega = xi.template head<3>();
  const Eigen::Matrix<Scalar, 3, 1> v = xi.template tail<3>();
  const Scalar theta2 = omega.squaredNorm();
  const Scalar theta = std::sqrt(theta2);
  const Mat3 oh = skew(omega);
  const Mat3 vh = skew(v);

  Scalar c1, c2, c3;
  if (theta < Scalar(1e-4)) {
    c1 = Scalar(1) / Scalar(6) - theta2 / Scalar(120);
    c2 = Scalar(1) / Scalar(24) - theta2 / Scalar(720);
    c3 = Scalar(1) / Scalar(120) - theta2 / Scalar(2520);
  } else {
    const Scalar t3 = theta2 * theta;
    const Scalar t4 = theta2 * theta2;
    const Scalar t5 = t4 * theta;
    const Scalar st = std::sin(theta);
    const Scalar ct = std::cos(theta);
    c1 = (theta - st) / t3;
    const Scalar big_a = (Scalar(1) - theta2 / Scalar(2) - ct) / t4;
    const Scalar big_b = (theta - st - t3 / Scalar(6)) / t5;
    c2 = -big_a;
    c3 = -Scalar(0.5) * (big_a - Scalar(3) * big_b);
  }
  const Mat3 q = Scalar(0.5) * vh + c1 * (oh * vh + vh * oh + oh * vh * oh) +
                 c2 * (oh * oh * vh + vh * oh * oh - Scalar(3) * oh * vh * oh) +
                 c3 * (oh * vh * oh * oh + oh * oh * vh * oh);

  const Mat3 w = so3_left_jacobian_inv(omega);
  Eigen::Matrix<Scalar, 6, 6> inv;
  inv.setZero();
  inv.template block<3, 3>(0, 0) = w;
  inv.template block<3, 3>(3, 3) = w;
  inv.template block<3, 3>(3, 0) = -w * q * w;
  return inv;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 6, 6> se3_right_jacobian_inv(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  return se3_left_jacobian_inv<Scalar>(-xi);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> unproject(const Eigen::Matrix<Scalar, 2, 1>& u, Scalar depth,
                                      const Intrinsics<Scalar>& k) {
  if (!(depth > Scalar(0))) throw std::invalid_argument("unproject: depth must be positive");
  return {(u.x() - k.cx) / k.fx * depth, (u.y() - k.cy) / k.fy * depth, depth};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project(const Eigen::Matrix<Scalar, 3, 1>& x,
                                    const Intrinsics<Scalar>& k) {
  if (!(x.z() > Scalar(0))) throw std::domain_error("project: point behind camera");
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

// Lerp on translation, shortest-arc slerp on rotation.
template <typename Scalar>
Pose<Scalar> interpolate_pose(const Pose<Scalar>& pose_a, Scalar t_a, const Pose<Scalar>& pose_b,
                              Scalar t_b, Scalar t_query) {
  if (!(t_a < t_b)) throw std::invalid_argument("interpolate_pose: need t_a < t_b");
  if (t_query < t_a || t_query > t_b)
    throw std::out_of_range("interpolate_pose: query outside [t_a, t_b]");
  const Scalar f = (t_query - t_a) / (t_b - t_a);
  const Eigen::Matrix<Scalar, 3, 1> t =
      pose_a.translation() + f * (pose_b.translation() - pose_a.translation());
  const Eigen::Quaternion<Scalar> q = pose_a.rotation().slerp(f, pose_b.rotation());
  return Pose<Scalar>(q, t);
}

// Warp of a point between two timestamped poses:
//   X_i = R(t_i) R(t_d)^-1 (X_d - T(t_d)) + T(t_i)
// This tracks a point rigidly attached to the moving camera; a scene-static
// point is instead left unchanged in world coordinates (see sync warp modes).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> warp_depth(const Eigen::Matrix<Scalar, 3, 1>& x_d,
                                       const Pose<Scalar>& pose_td, const Pose<Scalar>& pose_ti) {
  const Eigen::Matrix<Scalar, 3, 1> local =
      pose_td.rotation().conjugate() * (x_d - pose_td.translation());
  return pose_ti.rotation() * local + pose_ti.translation();
}

// --- dense double-precision field types ---

struct DepthMap {
  Eigen::ArrayXXd values;  // (row, col); <= 0 marks invalid

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
  bool valid(int row, int col) const { return values(row, col) > 0.0; }
};

struct Pointmap {
  Eigen::ArrayXXd x, y, z;     // world or camera coordinates per pixel
  Eigen::ArrayXXd confidence;  // <= 0 marks invalid
  std::string frame;

  int height() const { return static_cast<int>(x.rows()); }
  int width() const { return static_cast<int>(x.cols()); }
};

struct MotionField {
  Eigen::ArrayXXd du, dv;  // pixel displacement
  Mask valid;

  int height() const { return static_cast<int>(du.rows()); }
  int width() const { return static_cast<int>(du.cols()); }
};

Pointmap pointmap_from_depth(const DepthMap& depth, const Intrinsicsd& k, const Posed& pose,
                             const std::string& frame = "world");

// Pixel displacement field induced by camera motion and the depth of frame t:
// project each valid depth pixel into the second camera and subtract.
MotionField motion_field(const DepthMap& depth_t, const Intrinsicsd& k_t, const Posed& pose_t,
                         const Intrinsicsd& k_tp, const Posed& pose_tp);

}  // namespace evgo
