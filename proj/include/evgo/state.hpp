#pragma once

#include <Eigen/Dense>

#include <vector>

#include "evgo/core.hpp"
#include "evgo/geometry.hpp"

namespace evgo {

enum class DepthMode {
  kPerPixel,       // one log-depth parameter per valid pixel
  kPerFrameScale,  // one log-scale per frame over a frozen reference depth
};

// The optimization variable: per-frame poses, intrinsics and depths, plus
// per-edge alignment poses and scales. Depths are parameterized in log space
// so they stay positive under unconstrained updates.
struct GlobalState {
  std::vector<Posed> poses;              // camera-to-world
  std::vector<Intrinsicsd> intrinsics;   // held fixed by the solver
  DepthMode depth_mode = DepthMode::kPerPixel;
  std::vector<Eigen::ArrayXXd> log_depths;  // per frame; reference depths in scale mode
  std::vector<double> depth_log_scales;     // per frame, used in kPerFrameScale
  std::vector<Mask> depth_valid;            // per frame
  std::vector<Posed> edge_poses;            // P_W per edge
  std::vector<double> edge_log_scales;      // log sigma per edge

  int frame_count() const { return static_cast<int>(poses.size()); }
  int edge_count() const { return static_cast<int>(edge_poses.size()); }
  int frame_height(int f) const { return static_cast<int>(log_depths[static_cast<size_t>(f)].rows()); }
  int frame_width(int f) const { return static_cast<int>(log_depths[static_cast<size_t>(f)].cols()); }

  double depth_at(int frame, int row, int col) const {
    const auto& ld = log_depths[static_cast<size_t>(frame)];
    const double s = depth_mode == DepthMode::kPerFrameScale
                         ? depth_log_scales[static_cast<size_t>(frame)]
                         : 0.0;
    return std::exp(ld(row, col) + s);
  }

  bool depth_valid_at(int frame, int row, int col) const {
    return depth_valid[static_cast<size_t>(frame)](row, col);
  }

  DepthMap depth(int frame) const;
};

// Builds a state from initial depth maps (<= 0 marks invalid) and poses.
GlobalState make_state(const std::vector<DepthMap>& depths, const std::vector<Posed>& poses,
                       const std::vector<Intrinsicsd>& intrinsics, int n_edges,
                       DepthMode mode = DepthMode::kPerPixel);

// Flat parameter order: per-frame pose twists, per-frame depth blocks, then
// per-edge (log-scale, pose twist). Invalid pixels keep a slot with zero
// gradient so the layout depends only on frame shapes.
struct ParamLayout {
  bool per_frame_scale = false;
  std::vector<int> pose_offset;
  std::vector<int> depth_offset;
  std::vector<int> depth_size;
  std::vector<int> frame_width;
  std::vector<int> edge_scale_offset;
  std::vector<int> edge_pose_offset;
  int total = 0;

  static ParamLayout build(const GlobalState& state);
};

struct GradAccum {
  explicit GradAccum(const ParamLayout& layout)
      : layout(&layout), g(Eigen::VectorXd::Zero(layout.total)) {}

  const ParamLayout* layout;
  Eigen::VectorXd g;

  void add_pose(int frame, const Vector6d& v) {
    g.segment<6>(layout->pose_offset[static_cast<size_t>(frame)]) += v;
  }
  void add_depth(int frame, int row, int col, double v) {
    const auto f = static_cast<size_t>(frame);
    if (layout->per_frame_scale) {
      g(layout->depth_offset[f]) += v;
    } else {
      g(layout->depth_offset[f] + row * layout->frame_width[f] + col) += v;
    }
  }
  void add_edge_scale(int edge, double v) {
    g(layout->edge_scale_offset[static_cast<size_t>(edge)]) += v;
  }
  void add_edge_pose(int edge, const Vector6d& v) {
    g.segment<6>(layout->edge_pose_offset[static_cast<size_t>(edge)]) += v;
  }
};

// Retraction: poses move by exp of their twist block, Euclidean parameters by
// plain addition. Quaternions are renormalized by the Pose constructor.
void apply_update(GlobalState& state, const ParamLayout& layout, const Eigen::VectorXd& delta);

}  // namespace evgo
