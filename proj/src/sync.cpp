#include "evgo/sync.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace evgo {

std::vector<std::pair<int, int>> match_timestamps(const std::vector<int64_t>& depth_times,
                                                  const std::vector<int64_t>& image_times) {
  if (image_times.empty()) throw std::invalid_argument("match_timestamps: no image timestamps");
  std::vector<std::pair<int, int>> matches;
  matches.reserve(depth_times.size());
  for (size_t d = 0; d < depth_times.size(); ++d) {
    const int64_t t = depth_times[d];
    // image_times sorted: bracket with lower_bound, tie to the earlier one
    const auto it = std::lower_bound(image_times.begin(), image_times.end(), t);
    int best = static_cast<int>(std::min<size_t>(
        static_cast<size_t>(it - image_times.begin()), image_times.size() - 1));
    if (it != image_times.begin()) {
      const int prev = static_cast<int>(it - image_times.begin()) - 1;
      const int64_t d_prev = t - image_times[static_cast<size_t>(prev)];
      const int64_t d_best = std::llabs(image_times[static_cast<size_t>(best)] - t);
      if (d_prev <= d_best) best = prev;
    }
    matches.emplace_back(static_cast<int>(d), best);
  }
  return matches;
}

namespace {

// Nearest-pixel splat keeping the smallest camera depth per target pixel.
DepthMap rasterize_points(const std::vector<Eigen::Vector3d>& cam_points, const Intrinsicsd& k,
                          int height, int width) {
  DepthMap out;
  out.values.setZero(height, width);
  Eigen::ArrayXXd best = Eigen::ArrayXXd::Constant(height, width,
                                                   std::numeric_limits<double>::infinity());
  for (const Eigen::Vector3d& p : cam_points) {
    if (!(p.z() > 0.0)) continue;
    const double u = k.fx * p.x() / p.z() + k.cx;
    const double v = k.fy * p.y() / p.z() + k.cy;
    const int col = static_cast<int>(std::lround(u));
    const int row = static_cast<int>(std::lround(v));
    if (col < 0 || col >= width || row < 0 || row >= height) continue;
    if (p.z() < best(row, col)) {
      best(row, col) = p.z();
      out.values(row, col) = p.z();
    }
  }
  return out;
}

EventStream slice_events(const EventStream& events, int64_t t0, int64_t t1) {
  EventStream out;
  out.width = events.width;
  out.height = events.height;
  const auto begin = std::lower_bound(events.events.begin(), events.events.end(), t0,
                                      [](const Event& e, int64_t v) { return e.t < v; });
  const auto end = std::lower_bound(begin, events.events.end(), t1,
                                    [](const Event& e, int64_t v) { return e.t < v; });
  out.events.assign(begin, end);
  return out;
}

// World position of each valid depth pixel, mapped into the image camera per
// the selected warp mode.
std::vector<Eigen::Vector3d> warp_depth_map(const DepthMap& depth, const Intrinsicsd& k,
                                            const Posed& pose_d, const Posed& pose_i,
                                            WarpMode mode) {
  std::vector<Eigen::Vector3d> cam_points;
  cam_points.reserve(static_cast<size_t>(depth.height()) * static_cast<size_t>(depth.width()));
  const Posed pose_i_inv = pose_i.inverse();
  for (int row = 0; row < depth.height(); ++row) {
    for (int col = 0; col < depth.width(); ++col) {
      if (!depth.valid(row, col)) continue;
      const double d = depth.values(row, col);
      const Eigen::Vector3d local((col - k.cx) / k.fx * d, (row - k.cy) / k.fy * d, d);
      const Eigen::Vector3d world = pose_d * local;
      Eigen::Vector3d cam;
      if (mode == WarpMode::kAsPrinted) {
        cam = pose_i_inv * warp_depth(world, pose_d, pose_i);
      } else {
        cam = pose_i_inv * world;
      }
      cam_points.push_back(cam);
    }
  }
  return cam_points;
}

Image prepare_image(const SyncStreams& streams, size_t image_idx, const SyncOptions& options,
                    SyncReport* report) {
  Image img = streams.images[image_idx];
  if (image_idx < streams.image_valid.size() && streams.image_valid[image_idx].size() > 0) {
    const int unfilled = fill_holes(img, streams.image_valid[image_idx], options.fill_radius);
    if (report) report->unfillable_pixels += unfilled;
  }
  return img;
}

void warn(SyncReport* report, const std::string& msg) {
  if (report) {
    report->warnings.push_back(msg);
    ++report->skipped;
  }
}

}  // namespace

std::vector<AlignedTuple> align_day(const SyncStreams& streams, const SyncOptions& options,
                                    SyncReport* report) {
  if (streams.depths.size() != streams.depth_times.size() ||
      streams.images.size() != streams.image_times.size()) {
    throw std::invalid_argument("align_day: stream lengths disagree");
  }
  const auto matches = match_timestamps(streams.depth_times, streams.image_times);
  std::vector<AlignedTuple> tuples;
  int64_t prev_image_t = std::numeric_limits<int64_t>::min();
  for (const auto& [d_idx, i_idx] : matches) {
    const int64_t t_d = streams.depth_times[static_cast<size_t>(d_idx)];
    const int64_t t_i = streams.image_times[static_cast<size_t>(i_idx)];
    if (t_i <= prev_image_t) {
      warn(report, "tuple skipped: non-increasing image timestamp");
      continue;
    }
    Posed pose_d, pose_i;
    try {
      pose_d = sample_pose(streams.poses, t_d * 1e-6);
      pose_i = sample_pose(streams.poses, t_i * 1e-6);
    } catch (const std::out_of_range&) {
      warn(report, "tuple skipped: pose coverage gap");
      continue;
    }
    AlignedTuple tuple;
    tuple.image_t_us = t_i;
    tuple.image_index = i_idx;
    tuple.depth_index = d_idx;
    tuple.pose = pose_i;
    tuple.image = prepare_image(streams, static_cast<size_t>(i_idx), options, report);
    const auto cam_points = warp_depth_map(streams.depths[static_cast<size_t>(d_idx)],
                                           streams.intrinsics, pose_d, pose_i, options.warp_mode);
    tuple.depth = rasterize_points(cam_points, streams.intrinsics,
                                   streams.images[static_cast<size_t>(i_idx)].height(),
                                   streams.images[static_cast<size_t>(i_idx)].width());
    tuple.events = slice_events(streams.events,
                                prev_image_t == std::numeric_limits<int64_t>::min()
                                    ? std::numeric_limits<int64_t>::min() / 2
                                    : prev_image_t,
                                t_i);
    prev_image_t = t_i;
    tuples.push_back(std::move(tuple));
  }
  if (report) report->tuples = static_cast<int>(tuples.size());
  return tuples;
}

std::vector<AlignedTuple> align_night(const SyncStreams& streams, const SyncOptions& options,
                                      SyncReport* report) {
  if (streams.depths.size() != streams.depth_times.size() ||
      streams.images.size() != streams.image_times.size()) {
    throw std::invalid_argument("align_night: stream lengths disagree");
  }
  std::vector<AlignedTuple> tuples;
  int64_t prev_image_t = std::numeric_limits<int64_t>::min();
  const auto& it = streams.image_times;
  for (size_t i = 0; i < it.size(); ++i) {
    const int64_t t_i = it[i];
    // centered interval between neighboring frames
    const int64_t lo = i == 0 ? std::numeric_limits<int64_t>::min() : (it[i - 1] + t_i) / 2;
    const int64_t hi =
        i + 1 == it.size() ? std::numeric_limits<int64_t>::max() : (t_i + it[i + 1]) / 2;
    int best = -1;
    int64_t best_dt = std::numeric_limits<int64_t>::max();
    for (size_t d = 0; d < streams.depth_times.size(); ++d) {
      const int64_t t_d = streams.depth_times[d];
      if (t_d < lo || t_d >= hi) continue;
      const int64_t dt = std::llabs(t_d - t_i);
      if (dt < best_dt) {
        best_dt = dt;
        best = static_cast<int>(d);
      }
    }
    if (best < 0) {
      warn(report, "tuple skipped: no depth sample in frame interval");
      continue;
    }
    const int64_t t_d = streams.depth_times[static_cast<size_t>(best)];
    Posed pose_d, pose_i;
    try {
      pose_d = sample_pose(streams.poses, t_d * 1e-6);
      pose_i = sample_pose(streams.poses, t_i * 1e-6);
    } catch (const std::out_of_range&) {
      warn(report, "tuple skipped: pose coverage gap");
      continue;
    }
    AlignedTuple tuple;
    tuple.image_t_us = t_i;
    tuple.image_index = static_cast<int>(i);
    tuple.depth_index = best;
    tuple.pose = pose_i;
    tuple.image = prepare_image(streams, i, options, report);
    const auto cam_points = warp_depth_map(streams.depths[static_cast<size_t>(best)],
                                           streams.intrinsics, pose_d, pose_i, options.warp_mode);
    tuple.depth = rasterize_points(cam_points, streams.intrinsics, streams.images[i].height(),
                                   streams.images[i].width());
    tuple.events = slice_events(streams.events,
                                prev_image_t == std::numeric_limits<int64_t>::min()
                                    ? std::numeric_limits<int64_t>::min() / 2
                                    : prev_image_t,
                                t_i);
    prev_image_t = t_i;
    tuples.push_back(std::move(tuple));
  }
  if (report) report->tuples = static_cast<int>(tuples.size());
  return tuples;
}

}  // namespace evgo
