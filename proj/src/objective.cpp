#include "evgo/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace evgo {

namespace {

// Per-frame depth maps rebuilt at most once per objective evaluation.
struct DepthCache {
  explicit DepthCache(const GlobalState& s)
      : state(&s), maps(static_cast<size_t>(s.frame_count())),
        ready(static_cast<size_t>(s.frame_count()), false) {}

  const GlobalState* state;
  std::vector<DepthMap> maps;
  std::vector<bool> ready;

  const DepthMap& get(int frame) {
    const auto f = static_cast<size_t>(frame);
    if (!ready[f]) {
      maps[f] = state->depth(frame);
      ready[f] = true;
    }
    return maps[f];
  }
};

struct FramePose {
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
};

FramePose frame_pose(const GlobalState& state, int frame) {
  return {state.poses[static_cast<size_t>(frame)].rotation_matrix(),
          state.poses[static_cast<size_t>(frame)].translation()};
}

// Intermediates of projecting pixel (col,row) of frame a into frame b.
struct PixelChain {
  Eigen::Vector3d x_cam;
  Eigen::Vector3d q;
  double du = 0.0, dv = 0.0;
  bool ok = false;
};

PixelChain project_pixel(int col, int row, double depth, const Intrinsicsd& ka,
                         const FramePose& pa, const Intrinsicsd& kb, const FramePose& pb) {
  PixelChain pc;
  pc.x_cam = {(col - ka.cx) / ka.fx * depth, (row - ka.cy) / ka.fy * depth, depth};
  const Eigen::Vector3d x_w = pa.r * pc.x_cam + pa.t;
  pc.q = pb.r.transpose() * (x_w - pb.t);
  if (!(pc.q.z() > 0.0)) return pc;
  pc.du = kb.fx * pc.q.x() / pc.q.z() + kb.cx - col;
  pc.dv = kb.fy * pc.q.y() / pc.q.z() + kb.cy - row;
  pc.ok = true;
  return pc;
}

// Scatters dL/d(du), dL/d(dv) into the twists of both poses and the log-depth
// of the source pixel. Right-perturbation convention throughout.
void pixel_chain_backward(const PixelChain& pc, const FramePose& pa, const FramePose& pb,
                          const Intrinsicsd& kb, double gu, double gv, int frame_a, int frame_b,
                          int row, int col, double scale, GradAccum& acc) {
  const double qz = pc.q.z();
  const Eigen::Vector3d g_q(kb.fx / qz * gu, kb.fy / qz * gv,
                            -(kb.fx * pc.q.x() * gu + kb.fy * pc.q.y() * gv) / (qz * qz));
  const Eigen::Vector3d g_xw = pb.r * g_q;

  Vector6d gb;
  gb.head<3>() = g_q.cross(pc.q);
  gb.tail<3>() = -g_q;
  acc.add_pose(frame_b, scale * gb);

  const Eigen::Vector3d ra_gxw = pa.r.transpose() * g_xw;
  Vector6d ga;
  ga.head<3>() = pc.x_cam.cross(ra_gxw);
  ga.tail<3>() = ra_gxw;
  acc.add_pose(frame_a, scale * ga);

  acc.add_depth(frame_a, row, col, scale * pc.x_cam.dot(ra_gxw));
}

// Loss and pull-back of the unit-normalized residual between two patch
// images. Returns false (skip) when either norm vanishes.
bool normalized_residual(const Eigen::ArrayXXd& obs, const Eigen::ArrayXXd& pred, double* loss,
                         Eigen::ArrayXXd* d_pred) {
  const double norm_obs = std::sqrt((obs * obs).sum());
  const double norm_pred = std::sqrt((pred * pred).sum());
  if (norm_obs == 0.0 || norm_pred == 0.0) return false;
  const Eigen::ArrayXXd obs_hat = obs / norm_obs;
  const Eigen::ArrayXXd pred_hat = pred / norm_pred;
  const Eigen::ArrayXXd diff = obs_hat - pred_hat;
  *loss = (diff * diff).sum();
  if (d_pred) {
    const double cosine = (obs_hat * pred_hat).sum();
    *d_pred = (-2.0 / norm_pred) * (obs_hat - cosine * pred_hat);
  }
  return true;
}

double align_loss_impl(const std::vector<PairEdge>& edges, const GlobalState& state,
                       DepthCache& cache, GradAccum* grad, double grad_scale) {
  double loss = 0.0;
  for (size_t e = 0; e < edges.size(); ++e) {
    const PairEdge& edge = edges[e];
    const double sigma = std::exp(state.edge_log_scales[e]);
    const Posed& pw = state.edge_poses[e];
    const Eigen::Matrix3d r_w = pw.rotation_matrix();
    const Eigen::Vector3d t_w = pw.translation();

    const std::pair<const Pointmap*, int> halves[2] = {{&edge.pointmap_aa, edge.frame_a},
                                                       {&edge.pointmap_ba, edge.frame_b}};
    for (const auto& [pm, frame] : halves) {
      const FramePose fp = frame_pose(state, frame);
      const Intrinsicsd& k = state.intrinsics[static_cast<size_t>(frame)];
      const DepthMap& depth = cache.get(frame);
      const int h = pm->height(), w = pm->width();
      for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
          const double conf = pm->confidence(row, col);
          if (!(conf > 0.0) || !depth.valid(row, col)) continue;
          const double d = depth.values(row, col);
          const Eigen::Vector3d x_cam((col - k.cx) / k.fx * d, (row - k.cy) / k.fy * d, d);
          const Eigen::Vector3d x_w = fp.r * x_cam + fp.t;
          const Eigen::Vector3d y(pm->x(row, col), pm->y(row, col), pm->z(row, col));
          const Eigen::Vector3d y_w = r_w * y + t_w;
          const Eigen::Vector3d resid = x_w - sigma * y_w;
          const double norm = resid.norm();
          loss += conf * norm;
          if (!grad || norm == 0.0) continue;  // subgradient 0 at the kink
          const Eigen::Vector3d g_x = (conf / norm) * resid;

          const Eigen::Vector3d rf_gx = fp.r.transpose() * g_x;
          Vector6d gf;
          gf.head<3>() = x_cam.cross(rf_gx);
          gf.tail<3>() = rf_gx;
          grad->add_pose(frame, grad_scale * gf);
          grad->add_depth(frame, row, col, grad_scale * x_cam.dot(rf_gx));

          grad->add_edge_scale(static_cast<int>(e), -grad_scale * sigma * g_x.dot(y_w));
          const Eigen::Vector3d w_vec = r_w.transpose() * g_x;
          Vector6d ge;
          ge.head<3>() = -sigma * y.cross(w_vec);
          ge.tail<3>() = -sigma * w_vec;
          grad->add_edge_pose(static_cast<int>(e), grad_scale * ge);
        }
      }
    }
  }
  return loss;
}

double flow_loss_impl(const GlobalState& state, const std::vector<FlowObservation>& flows,
                      DepthCache& cache, GradAccum* grad, double grad_scale, int* skipped) {
  double loss = 0.0;
  int skip_count = 0;
  for (const FlowObservation& obs : flows) {
    if (obs.flow_u.size() == 0 || obs.static_mask.size() == 0) {
      ++skip_count;
      continue;
    }
    const FramePose pa = frame_pose(state, obs.frame_a);
    const FramePose pb = frame_pose(state, obs.frame_b);
    const Intrinsicsd& ka = state.intrinsics[static_cast<size_t>(obs.frame_a)];
    const Intrinsicsd& kb = state.intrinsics[static_cast<size_t>(obs.frame_b)];
    const DepthMap& depth = cache.get(obs.frame_a);
    const int h = static_cast<int>(obs.flow_u.rows());
    const int w = static_cast<int>(obs.flow_u.cols());
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        if (!obs.static_mask(row, col) || !depth.valid(row, col)) continue;
        const PixelChain pc =
            project_pixel(col, row, depth.values(row, col), ka, pa, kb, pb);
        if (!pc.ok) continue;
        const double eu = pc.du - obs.flow_u(row, col);
        const double ev = pc.dv - obs.flow_v(row, col);
        loss += std::abs(eu) + std::abs(ev);
        if (!grad) continue;
        const double gu = eu > 0.0 ? 1.0 : (eu < 0.0 ? -1.0 : 0.0);
        const double gv = ev > 0.0 ? 1.0 : (ev < 0.0 ? -1.0 : 0.0);
        if (gu == 0.0 && gv == 0.0) continue;
        pixel_chain_backward(pc, pa, pb, kb, gu, gv, obs.frame_a, obs.frame_b, row, col,
                             grad_scale, *grad);
      }
    }
  }
  if (skipped) *skipped = skip_count;
  return loss;
}

double event_loss_from_state_impl(const GlobalState& state, std::vector<Patch>& patches,
                                  DepthCache& cache, GradAccum* grad, double grad_scale,
                                  int* skipped) {
  double loss = 0.0;
  int skip_count = 0;
  std::vector<PixelChain> chains;
  for (Patch& patch : patches) {
    const FramePose pa = frame_pose(state, patch.frame_a);
    const FramePose pb = frame_pose(state, patch.frame_b);
    const Intrinsicsd& ka = state.intrinsics[static_cast<size_t>(patch.frame_a)];
    const Intrinsicsd& kb = state.intrinsics[static_cast<size_t>(patch.frame_b)];
    const DepthMap& depth = cache.get(patch.frame_a);

    const int side = patch.side();
    const int x0 = patch.center_x - patch.half_width;
    const int y0 = patch.center_y - patch.half_width;
    patch.predicted.setZero(side, side);
    chains.assign(static_cast<size_t>(side * side), PixelChain{});
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const int row = y0 + r, col = x0 + c;
        if (!depth.valid(row, col)) continue;  // invalid pixels predict zero
        PixelChain pc = project_pixel(col, row, depth.values(row, col), ka, pa, kb, pb);
        if (!pc.ok) continue;
        patch.predicted(r, c) = -(patch.grad_x(r, c) * pc.du + patch.grad_y(r, c) * pc.dv);
        chains[static_cast<size_t>(r * side + c)] = pc;
      }
    }

    double patch_loss = 0.0;
    Eigen::ArrayXXd d_pred;
    if (!normalized_residual(patch.observed, patch.predicted, &patch_loss,
                             grad ? &d_pred : nullptr)) {
      ++skip_count;
      continue;
    }
    loss += patch_loss;
    if (!grad) continue;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const PixelChain& pc = chains[static_cast<size_t>(r * side + c)];
        if (!pc.ok) continue;
        const double gp = d_pred(r, c);
        if (gp == 0.0) continue;
        const double gu = -patch.grad_x(r, c) * gp;
        const double gv = -patch.grad_y(r, c) * gp;
        pixel_chain_backward(pc, pa, pb, kb, gu, gv, patch.frame_a, patch.frame_b, y0 + r, x0 + c,
                             grad_scale, *grad);
      }
    }
  }
  if (skipped) *skipped = skip_count;
  return loss;
}

}  // namespace

Eigen::ArrayXXd predicted_increment(const GradientField& grad, const MotionField& motion,
                                    double delta_tau, double contrast) {
  if (grad.gx.rows() != motion.du.rows() || grad.gx.cols() != motion.du.cols()) {
    throw std::invalid_argument("predicted_increment: shape mismatch");
  }
  const Eigen::ArrayXXd raw =
      -(grad.gx * motion.du + grad.gy * motion.dv) * (delta_tau * contrast);
  return motion.valid.select(raw, 0.0);
}

double event_loss(const std::vector<Patch>& patches, int* skipped) {
  double loss = 0.0;
  int skip_count = 0;
  for (const Patch& patch : patches) {
    double patch_loss = 0.0;
    if (!normalized_residual(patch.observed, patch.predicted, &patch_loss, nullptr)) {
      ++skip_count;
      continue;
    }
    loss += patch_loss;
  }
  if (skipped) *skipped = skip_count;
  return loss;
}

double event_weight(const std::vector<double>& corner_snrs, double w_base) {
  if (w_base < 0.0) throw std::invalid_argument("event_weight: w_base must be >= 0");
  if (corner_snrs.empty()) return w_base * 0.5;
  double lo = corner_snrs[0], hi = corner_snrs[0];
  for (double s : corner_snrs) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (hi == lo) return w_base * 0.5;
  double acc = 0.0;
  for (double s : corner_snrs) acc += 1.0 - (s - lo) / (hi - lo);
  return w_base * acc / static_cast<double>(corner_snrs.size());
}

double align_loss(const std::vector<PairEdge>& edges, const GlobalState& state, GradAccum* grad,
                  double grad_scale) {
  DepthCache cache(state);
  return align_loss_impl(edges, state, cache, grad, grad_scale);
}

double smooth_loss(const GlobalState& state, GradAccum* grad, double grad_scale) {
  const int n = state.frame_count();
  if (n < 2) return 0.0;
  double loss = 0.0;
  for (int t = 0; t + 1 < n; ++t) {
    const Posed rel = state.poses[static_cast<size_t>(t)].inverse() *
                      state.poses[static_cast<size_t>(t) + 1];
    const Vector6d xi = se3_log(rel);
    loss += xi.squaredNorm();
    if (!grad) continue;
    grad->add_pose(t + 1, grad_scale * 2.0 * (se3_right_jacobian_inv(xi).transpose() * xi));
    grad->add_pose(t, grad_scale * -2.0 * (se3_left_jacobian_inv(xi).transpose() * xi));
  }
  return loss;
}

double flow_loss(const GlobalState& state, const std::vector<FlowObservation>& flows,
                 GradAccum* grad, double grad_scale, int* skipped) {
  DepthCache cache(state);
  return flow_loss_impl(state, flows, cache, grad, grad_scale, skipped);
}

double event_loss_from_state(const GlobalState& state, std::vector<Patch>& patches,
                             GradAccum* grad, double grad_scale, int* skipped) {
  DepthCache cache(state);
  return event_loss_from_state_impl(state, patches, cache, grad, grad_scale, skipped);
}

LossBreakdown total_objective(const GlobalState& state, ObjectiveInputs& inputs, GradAccum* grad) {
  LossBreakdown bd;
  bd.w_smooth = inputs.weights.w_smooth;
  bd.w_flow = inputs.weights.w_flow;
  std::vector<double> snrs;
  snrs.reserve(inputs.patches.size());
  for (const Patch& p : inputs.patches) snrs.push_back(p.corner_snr);
  bd.w_event = event_weight(snrs, inputs.weights.w_event_base);

  DepthCache cache(state);
  bd.align = align_loss_impl(inputs.edges, state, cache, grad, 1.0);
  bd.smooth = smooth_loss(state, grad, bd.w_smooth);
  bd.flow = flow_loss_impl(state, inputs.flows, cache, grad, bd.w_flow, &bd.skipped_flows);
  if (bd.w_event > 0.0) {
    bd.event = event_loss_from_state_impl(state, inputs.patches, cache, grad, bd.w_event,
                                          &bd.skipped_patches);
  }
  bd.total = bd.align + bd.w_smooth * bd.smooth + bd.w_flow * bd.flow + bd.w_event * bd.event;
  return bd;
}

}  // namespace evgo
