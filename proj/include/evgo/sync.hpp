#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evgo/events.hpp"
#include "evgo/geometry.hpp"
#include "evgo/imaging.hpp"
#include "evgo/metrics.hpp"

namespace evgo {

struct AlignedTuple {
  int64_t image_t_us = 0;
  Image image;
  DepthMap depth;       // warped/rasterized to the image grid
  EventStream events;   // slice covering the preceding inter-tuple interval
  Posed pose;           // at image_t
  int image_index = -1;
  int depth_index = -1;
};

// For each depth timestamp, the index of the nearest image timestamp; exact
// ties resolve to the earlier image.
std::vector<std::pair<int, int>> match_timestamps(const std::vector<int64_t>& depth_times,
                                                  const std::vector<int64_t>& image_times);

enum class WarpMode {
  kAsPrinted,  // X_i = R(t_i) R(t_d)^-1 (X_d - T(t_d)) + T(t_i) on world points
  kStandard,   // world points are scene-static; reproject with the image pose
};

struct SyncStreams {
  std::vector<Image> images;
  std::vector<int64_t> image_times;
  std::vector<DepthMap> depths;
  std::vector<int64_t> depth_times;
  Trajectory poses;  // seconds
  EventStream events;
  Intrinsicsd intrinsics;
  std::vector<Mask> image_valid;  // optional; triggers hole filling when set
};

struct SyncOptions {
  WarpMode warp_mode = WarpMode::kAsPrinted;
  int fill_radius = 4;
};

struct SyncReport {
  int tuples = 0;
  int skipped = 0;
  int unfillable_pixels = 0;
  std::vector<std::string> warnings;
};

// Day-rate alignment: one tuple per depth sample, matched to the nearest
// image, depth warped across the pose difference and rasterized with a
// nearest-pixel z-buffer.
std::vector<AlignedTuple> align_day(const SyncStreams& streams, const SyncOptions& options,
                                    SyncReport* report = nullptr);

// Night-rate alignment: one tuple per image frame, fed by the temporally
// closest depth sample within the frame's interval.
std::vector<AlignedTuple> align_night(const SyncStreams& streams, const SyncOptions& options,
                                      SyncReport* report = nullptr);

}  // namespace evgo
