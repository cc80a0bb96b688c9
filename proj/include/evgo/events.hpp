#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "evgo/core.hpp"

namespace evgo {

struct Event {
  int64_t t;  // microseconds
  int x;
  int y;
  int p;  // +1 or -1
};

// Time-sorted event list with declared sensor bounds. Immutable after
// construction; safe to share across threads.
struct EventStream {
  std::vector<Event> events;
  int width = 0;
  int height = 0;
};

struct VoxelGrid {
  std::vector<Eigen::ArrayXXd> bins;  // B arrays of H x W
  int64_t t_start = 0;
  int64_t t_end = 0;

  int bin_count() const { return static_cast<int>(bins.size()); }
  double total() const {
    double s = 0.0;
    for (const auto& b : bins) s += b.sum();
    return s;
  }
};

enum class PolarityConvention {
  kAuto,      // accept -1, 0, 1; 0 maps to -1
  kSigned,    // accept -1, 1 only
  kZeroOne,   // accept 0, 1 only; 0 maps to -1
};

// One event per line, `t_us,x,y,p`, no header. Events are sorted by time;
// malformed or out-of-bounds lines raise ParseError naming the line.
EventStream parse_events(const std::string& path, int width, int height,
                         PolarityConvention convention = PolarityConvention::kAuto);

void serialize_events(const EventStream& stream, const std::string& path);

// Polarity of each event in [t0, t1) split linearly between the two
// temporally adjacent bins at its pixel; bin sums preserve the polarity sum.
VoxelGrid voxelize(const EventStream& stream, int64_t t0, int64_t t1, int bin_count);

// Per-pixel polarity sums over [t, t_prime) for the (2h+1)^2 window centered
// at patch_center; result indexed (local row, local col).
Eigen::ArrayXXd accumulate_patch(const EventStream& stream, int center_x, int center_y,
                                 int half_width, int64_t t, int64_t t_prime);

}  // namespace evgo
