#pragma once

#include <Eigen/Dense>

#include <vector>

#include "evgo/geometry.hpp"
#include "evgo/imaging.hpp"
#include "evgo/state.hpp"

namespace evgo {

// Corner-centered window comparing observed event increments against the
// increment predicted from image gradients and state-induced motion. The
// gradient field is frozen at construction; `predicted` is refreshed from the
// current state on every objective evaluation.
struct Patch {
  int frame_a = 0;
  int frame_b = 0;  // events and motion span frame_a -> frame_b
  int center_x = 0;
  int center_y = 0;
  int half_width = 0;
  Eigen::ArrayXXd observed;
  Eigen::ArrayXXd predicted;
  Eigen::ArrayXXd grad_x, grad_y;
  double corner_snr = 0.0;

  int side() const { return 2 * half_width + 1; }
};

// Pairwise pointmap constraint. Both pointmaps live in frame-a coordinates;
// pairwise_pose and scale seed the corresponding state variables.
struct PairEdge {
  int frame_a = 0;
  int frame_b = 0;
  Pointmap pointmap_aa;
  Pointmap pointmap_ba;
  Posed pairwise_pose;
  double scale = 1.0;
};

struct FlowObservation {
  int frame_a = 0;
  int frame_b = 0;
  Eigen::ArrayXXd flow_u, flow_v;
  Mask static_mask;
};

struct Weights {
  double w_smooth = 0.01;
  double w_flow = 0.01;
  double w_event_base = 0.01;
};

struct LossBreakdown {
  double align = 0.0;
  double smooth = 0.0;
  double flow = 0.0;
  double event = 0.0;
  double w_smooth = 0.0;
  double w_flow = 0.0;
  double w_event = 0.0;  // w_event_base scaled by mean(1 - normalized corner snr)
  double total = 0.0;
  int skipped_patches = 0;
  int skipped_flows = 0;
};

struct ObjectiveInputs {
  std::vector<PairEdge> edges;
  std::vector<Patch> patches;
  std::vector<FlowObservation> flows;
  Weights weights;
};

// delta_hat(u) = -grad(u) . motion(u) * delta_tau * contrast, zero where the
// motion field is invalid.
Eigen::ArrayXXd predicted_increment(const GradientField& grad, const MotionField& motion,
                                    double delta_tau, double contrast);

// Sum over patches of || observed/|observed| - predicted/|predicted| ||^2
// (Frobenius normalization). Patches with a zero-norm side are skipped.
double event_loss(const std::vector<Patch>& patches, int* skipped = nullptr);

// w_base * mean(1 - minmax(corner_snrs)); constant or empty lists fall back
// to 0.5.
double event_weight(const std::vector<double>& corner_snrs, double w_base);

// Confidence-weighted point-to-point alignment of the global pointmaps
// against scaled, edge-posed pairwise pointmaps (Euclidean norm, not squared).
double align_loss(const std::vector<PairEdge>& edges, const GlobalState& state,
                  GradAccum* grad = nullptr, double grad_scale = 1.0);

// Sum of squared relative twists between consecutive poses.
double smooth_loss(const GlobalState& state, GradAccum* grad = nullptr, double grad_scale = 1.0);

// Masked L1 between the state-induced motion field and observed flow.
double flow_loss(const GlobalState& state, const std::vector<FlowObservation>& flows,
                 GradAccum* grad = nullptr, double grad_scale = 1.0, int* skipped = nullptr);

// Event term against the current state: refreshes each patch's predicted
// image from the state motion field, then applies the normalized residual.
double event_loss_from_state(const GlobalState& state, std::vector<Patch>& patches,
                             GradAccum* grad = nullptr, double grad_scale = 1.0,
                             int* skipped = nullptr);

LossBreakdown total_objective(const GlobalState& state, ObjectiveInputs& inputs,
                              GradAccum* grad = nullptr);

}  // namespace evgo
