#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evgo/events.hpp"
#include "evgo/geometry.hpp"
#include "evgo/imaging.hpp"
#include "evgo/state.hpp"

namespace evgo {

enum class EventModel {
  kLinearized,  // per-pixel quantized gradient-times-motion increments
  kThreshold,   // log-intensity crossings of +-C
};

struct TextureSpec {
  double checker_weight = 0.3;
  double checker_period = 0.4;  // world units on the scene plane
  double noise_weight = 0.6;
  int noise_components = 24;
  double noise_freq_min = 1.0;  // cycles per world unit
  double noise_freq_max = 5.0;
  double gradient_weight = 0.1;
};

struct TrajectorySample {
  int64_t t_us = 0;
  Posed pose;
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  Intrinsicsd intrinsics{60.0, 60.0, 31.5, 31.5};
  TextureSpec texture;
  std::string depth_model = "plane";  // "plane" or "relief"
  double plane_z = 2.0;
  double relief_amplitude = 0.0;
  double relief_period = 1.0;
  std::vector<TrajectorySample> trajectory;
  double contrast_c = 0.1;
  double event_quantum_div = 8.0;  // quantum = max |increment| / div per window
  EventModel events_mode = EventModel::kLinearized;
  int threshold_substeps = 32;
  uint64_t seed = 1;
  int intensity_bits = 16;  // rendered intensities snap to this grid; 0 = off
};

SceneSpec scene_from_json_file(const std::string& path);
std::string scene_to_json(const SceneSpec& spec);

struct RenderResult {
  Image image;  // single channel
  DepthMap depth;
  Posed pose;
};

// Ground-truth pose at t by lerp/slerp between trajectory samples.
Posed scene_pose(const SceneSpec& spec, int64_t t_us);

// Textured plane (optionally with a sinusoidal height relief) seen from the
// interpolated pose. Deterministic for a fixed seed.
RenderResult render_scene(const SceneSpec& spec, int64_t t_us);

EventStream simulate_events(const SceneSpec& spec, int64_t t_us, int64_t t_prime_us,
                            EventModel mode);

// Worst-case event-term value at the ground-truth state caused by quantizing
// increments to the given quantum: sum over patches of
// (2 * e_m / max(norm_m - e_m, eps))^2 with e_m = quantum/2 * sqrt(pixels).
double quantization_loss_bound(const std::vector<Eigen::ArrayXXd>& predicted_patches,
                               double quantum);

// Gaussian noise on pose twists and log-depths; deterministic per seed.
GlobalState perturb(const GlobalState& state, double sigma_rot, double sigma_trans,
                    double sigma_logdepth, uint64_t seed);

}  // namespace evgo
