#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evgo/events.hpp"
#include "evgo/imaging.hpp"
#include "evgo/objective.hpp"
#include "evgo/solver.hpp"
#include "evgo/state.hpp"

namespace evgo {

struct PatchParams {
  int half_width = 7;
  int max_corners = 64;
  double harris_k = 0.04;
  double harris_sigma = 1.0;
  int nms_radius = 5;
  double motion_spread_max = 1.5;  // px; gate for locally-constant flow
};

struct SnrParams {
  int kernel = 5;
  double epsilon = 1e-3;
};

struct SolverParams {
  int iters = 300;
  double lr = 0.01;
  int window = 10;
  int stride = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::string depth_mode = "per_pixel";  // or "per_frame_scale"
  int log_every = 0;
};

struct IllumParams {
  double sigma = 3.0;
  double target_mean = 0.5;
};

struct Config {
  Weights weights;
  SolverParams solver;
  PatchParams patches;
  SnrParams snr;
  IllumParams illumination;
  int voxel_bins = 5;
  std::string sync_warp = "as_printed";  // or "standard"
  int fill_radius = 4;
  int threads = 1;
};

// Full-defaults override: absent keys keep their default values.
Config load_config(const std::string& path);
std::string config_to_json(const Config& config);

struct FrameEntry {
  int64_t t_us = 0;
  std::string image;
  std::string depth;
  std::string illumination;  // optional per-frame f32 map
  bool has_intrinsics = false;
  Intrinsicsd intrinsics;
};

struct FlowEntry {
  int a = 0, b = 0;
  std::string flow;  // f32, 2 planes (u, v)
  std::string mask;  // f32, 1 plane, > 0.5 means static
};

struct PointmapEntry {
  int a = 0, b = 0;
  std::string aa;  // f32, 4 planes (x, y, z, confidence), frame-a coordinates
  std::string ba;
};

struct Manifest {
  int width = 0, height = 0;
  Intrinsicsd intrinsics;
  std::vector<FrameEntry> frames;
  std::string events;
  std::string trajectory_init;
  std::string trajectory_gt;
  std::vector<FlowEntry> flows;
  std::vector<PointmapEntry> pointmaps;
  std::string illumination_mode = "identity";  // identity | fallback | files
  std::string base_dir;
};

Manifest load_manifest(const std::string& path);

struct PipelineData {
  GlobalState init;
  ObjectiveInputs inputs;
  std::vector<int64_t> frame_times;
  std::vector<std::string> warnings;
  int corners_total = 0;
};

// Loads every modality, runs enhancement / SNR / Harris, accumulates observed
// patch increments, and assembles edges over the sliding-window pair graph.
// Pointmaps absent from the manifest are synthesized from the initial depths
// and poses.
PipelineData build_pipeline(const Manifest& manifest, const Config& config);

}  // namespace evgo
