#include "evgo/geometry.hpp"

namespace evgo {

Pointmap pointmap_from_depth(const DepthMap& depth, const Intrinsicsd& k, const Posed& pose,
                             const std::string& frame) {
  const int h = depth.height(), w = depth.width();
  Pointmap pm;
  pm.x.setZero(h, w);
  pm.y.setZero(h, w);
  pm.z.setZero(h, w);
  pm.confidence.setZero(h, w);
  pm.frame = frame;
  const Eigen::Matrix3d r = pose.rotation_matrix();
  const Eigen::Vector3d t = pose.translation();
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      if (!depth.valid(row, col)) continue;
      const double d = depth.values(row, col);
      const Eigen::Vector3d local((col - k.cx) / k.fx * d, (row - k.cy) / k.fy * d, d);
      const Eigen::Vector3d world = r * local + t;
      pm.x(row, col) = world.x();
      pm.y(row, col) = world.y();
      pm.z(row, col) = world.z();
      pm.confidence(row, col) = 1.0;
    }
  }
  return pm;
}

MotionField motion_field(const DepthMap& depth_t, const Intrinsicsd& k_t, const Posed& pose_t,
                         const Intrinsicsd& k_tp, const Posed& pose_tp) {
  const int h = depth_t.height(), w = depth_t.width();
  MotionField field;
  field.du.setZero(h, w);
  field.dv.setZero(h, w);
  field.valid.setConstant(h, w, false);
  const Eigen::Matrix3d r_t = pose_t.rotation_matrix();
  const Eigen::Vector3d t_t = pose_t.translation();
  const Eigen::Matrix3d r_tp_inv = pose_tp.rotation_matrix().transpose();
  const Eigen::Vector3d t_tp = pose_tp.translation();
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      if (!depth_t.valid(row, col)) continue;
      const double d = depth_t.values(row, col);
      const Eigen::Vector3d local((col - k_t.cx) / k_t.fx * d, (row - k_t.cy) / k_t.fy * d, d);
      const Eigen::Vector3d cam2 = r_tp_inv * (r_t * local + t_t - t_tp);
      if (!(cam2.z() > 0.0)) continue;
      field.du(row, col) = k_tp.fx * cam2.x() / cam2.z() + k_tp.cx - col;
      field.dv(row, col) = k_tp.fy * cam2.y() / cam2.z() + k_tp.cy - row;
      field.valid(row, col) = true;
    }
  }
  return field;
}

}  // namespace evgo
