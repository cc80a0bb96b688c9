#include "evgo/state.hpp"

#include <stdexcept>

namespace evgo {

DepthMap GlobalState::depth(int frame) const {
  const auto f = static_cast<size_t>(frame);
  const double s = depth_mode == DepthMode::kPerFrameScale ? depth_log_scales[f] : 0.0;
  DepthMap out;
  out.values = depth_valid[f].select((log_depths[f] + s).exp(), 0.0);
  return out;
}

GlobalState make_state(const std::vector<DepthMap>& depths, const std::vector<Posed>& poses,
                       const std::vector<Intrinsicsd>& intrinsics, int n_edges, DepthMode mode) {
  if (depths.size() != poses.size() || intrinsics.size() != poses.size()) {
    throw std::invalid_argument("make_state: per-frame input sizes differ");
  }
  GlobalState state;
  state.poses = poses;
  state.intrinsics = intrinsics;
  state.depth_mode = mode;
  state.log_depths.reserve(depths.size());
  state.depth_valid.reserve(depths.size());
  for (const auto& d : depths) {
    const Mask valid = d.values > 0.0;
    state.depth_valid.push_back(valid);
    state.log_depths.push_back(valid.select(d.values, 1.0).log());
  }
  state.depth_log_scales.assign(depths.size(), 0.0);
  state.edge_poses.assign(static_cast<size_t>(n_edges), Posed::identity());
  state.edge_log_scales.assign(static_cast<size_t>(n_edges), 0.0);
  return state;
}

ParamLayout ParamLayout::build(const GlobalState& state) {
  ParamLayout layout;
  layout.per_frame_scale = state.depth_mode == DepthMode::kPerFrameScale;
  int offset = 0;
  const int n = state.frame_count();
  for (int f = 0; f < n; ++f) {
    layout.pose_offset.push_back(offset);
    offset += 6;
  }
  for (int f = 0; f < n; ++f) {
    layout.depth_offset.push_back(offset);
    const int size = state.depth_mode == DepthMode::kPerFrameScale
                         ? 1
                         : state.frame_height(f) * state.frame_width(f);
    layout.depth_size.push_back(size);
    layout.frame_width.push_back(state.frame_width(f));
    offset += size;
  }
  for (int e = 0; e < state.edge_count(); ++e) {
    layout.edge_scale_offset.push_back(offset);
    offset += 1;
    layout.edge_pose_offset.push_back(offset);
    offset += 6;
  }
  layout.total = offset;
  return layout;
}

void apply_update(GlobalState& state, const ParamLayout& layout, const Eigen::VectorXd& delta) {
  if (delta.size() != layout.total) throw std::invalid_argument("apply_update: size mismatch");
  const int n = state.frame_count();
  for (int f = 0; f < n; ++f) {
    const Vector6d xi = delta.segment<6>(layout.pose_offset[static_cast<size_t>(f)]);
    state.poses[static_cast<size_t>(f)] = state.poses[static_cast<size_t>(f)] * se3_exp<double>(xi);
  }
  for (int f = 0; f < n; ++f) {
    const auto fs = static_cast<size_t>(f);
    if (layout.per_frame_scale) {
      state.depth_log_scales[fs] += delta(layout.depth_offset[fs]);
    } else {
      auto& ld = state.log_depths[fs];
      const int w = layout.frame_width[fs];
      for (int row = 0; row < ld.rows(); ++row) {
        for (int col = 0; col < ld.cols(); ++col) {
          ld(row, col) += delta(layout.depth_offset[fs] + row * w + col);
        }
      }
    }
  }
  for (int e = 0; e < state.edge_count(); ++e) {
    const auto es = static_cast<size_t>(e);
    state.edge_log_scales[es] += delta(layout.edge_scale_offset[es]);
    const Vector6d xi = delta.segment<6>(layout.edge_pose_offset[es]);
    state.edge_poses[es] = state.edge_poses[es] * se3_exp<double>(xi);
  }
}

}  // namespace evgo
