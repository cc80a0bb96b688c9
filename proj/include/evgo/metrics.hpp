#pragma once

#include <string>
#include <utility>
#include <vector>

#include "evgo/geometry.hpp"

namespace evgo {

struct Trajectory {
  struct Sample {
    double t = 0.0;  // seconds
    Posed pose;
  };
  std::vector<Sample> samples;
};

// TUM format: `t tx ty tz qx qy qz qw` per line, camera-to-world.
Trajectory read_tum(const std::string& path);
void write_tum(const std::string& path, const Trajectory& traj);

// Lerp/slerp between bracketing samples; throws std::out_of_range outside the
// span.
Posed sample_pose(const Trajectory& traj, double t);

struct DepthMetrics {
  double abs_rel = 0.0;
  double delta_125 = 0.0;
  double rmse_log = 0.0;
};

// Evaluated where both maps are valid; optional per-frame median-ratio scale
// alignment of the prediction.
DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, bool scale_align);

struct Similarity {
  double s = 1.0;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return s * (r * p) + t; }
};

// Closed-form least-squares similarity mapping src onto dst. Throws on fewer
// than 3 points or collinear configurations.
Similarity umeyama_points(const std::vector<Eigen::Vector3d>& src,
                          const std::vector<Eigen::Vector3d>& dst, bool with_scale);

// Associates samples by nearest timestamp within tolerance, then solves for
// the similarity aligning pred positions to gt.
Similarity umeyama_align(const Trajectory& pred, const Trajectory& gt, bool with_scale,
                         double time_tolerance = 0.01);

// Sim(3)-aligned RMSE of position residuals.
double ate(const Trajectory& pred, const Trajectory& gt, double time_tolerance = 0.01,
           bool with_scale = true);

// Relative pose error over delta-frame steps: (translation RMSE in meters,
// rotation RMSE in degrees).
std::pair<double, double> rpe(const Trajectory& pred, const Trajectory& gt, int delta = 1,
                              double time_tolerance = 0.01);

}  // namespace evgo
