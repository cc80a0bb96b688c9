#include "evgo/events.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace evgo {

namespace {

// Strict integer field parse; advances *s past the number.
bool parse_int64(const char** s, int64_t* out) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(*s, &end, 10);
  if (end == *s || errno == ERANGE) return false;
  *s = end;
  *out = static_cast<int64_t>(v);
  return true;
}

bool expect_comma(const char** s) {
  if (**s != ',') return false;
  ++*s;
  return true;
}

}  // namespace

EventStream parse_events(const std::string& path, int width, int height,
                         PolarityConvention convention) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open event file: " + path);

  EventStream stream;
  stream.width = width;
  stream.height = height;

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const char* s = line.c_str();
    int64_t t = 0, x = 0, y = 0, p = 0;
    const bool ok = parse_int64(&s, &t) && expect_comma(&s) && parse_int64(&s, &x) &&
                    expect_comma(&s) && parse_int64(&s, &y) && expect_comma(&s) &&
                    parse_int64(&s, &p);
    if (!ok || *s != '\0') {
      throw ParseError(path + ": malformed event at line " + std::to_string(line_no));
    }
    if (x < 0 || x >= width || y < 0 || y >= height) {
      throw ParseError(path + ": event out of sensor bounds at line " + std::to_string(line_no));
    }
    bool p_ok = false;
    switch (convention) {
      case PolarityConvention::kAuto: p_ok = (p == -1 || p == 0 || p == 1); break;
      case PolarityConvention::kSigned: p_ok = (p == -1 || p == 1); break;
      case PolarityConvention::kZeroOne: p_ok = (p == 0 || p == 1); break;
    }
    if (!p_ok) {
      throw ParseError(path + ": invalid polarity at line " + std::to_string(line_no));
    }
    stream.events.push_back(Event{t, static_cast<int>(x), static_cast<int>(y),
                                  p == 1 ? 1 : -1});
  }
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return stream;
}

void serialize_events(const EventStream& stream, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event file: " + path);
  for (const Event& e : stream.events) {
    out << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
  }
}

VoxelGrid voxelize(const EventStream& stream, int64_t t0, int64_t t1, int bin_count) {
  if (bin_count < 1) throw std::invalid_argument("voxelize: bin count must be >= 1");
  if (!(t0 < t1)) throw std::invalid_argument("voxelize: need t0 < t1");

  VoxelGrid grid;
  grid.t_start = t0;
  grid.t_end = t1;
  grid.bins.assign(static_cast<size_t>(bin_count),
                   Eigen::ArrayXXd::Zero(stream.height, stream.width));

  const double span = static_cast<double>(t1 - t0);
  for (const Event& e : stream.events) {
    if (e.t < t0 || e.t >= t1) continue;
    if (bin_count == 1) {
      grid.bins[0](e.y, e.x) += e.p;
      continue;
    }
    // continuous bin coordinate in [0, B-1]
    const double tau = static_cast<double>(e.t - t0) / span * (bin_count - 1);
    const int lo = std::min(static_cast<int>(tau), bin_count - 2);
    const double frac = tau - lo;
    grid.bins[static_cast<size_t>(lo)](e.y, e.x) += e.p * (1.0 - frac);
    grid.bins[static_cast<size_t>(lo) + 1](e.y, e.x) += e.p * frac;
  }
  return grid;
}

Eigen::ArrayXXd accumulate_patch(const EventStream& stream, int center_x, int center_y,
                                 int half_width, int64_t t, int64_t t_prime) {
  if (!(t < t_prime)) throw std::invalid_argument("accumulate_patch: need t < t_prime");
  const int side = 2 * half_width + 1;
  if (center_x - half_width < 0 || center_x + half_width >= stream.width ||
      center_y - half_width < 0 || center_y + half_width >= stream.height) {
    throw std::invalid_argument("accumulate_patch: patch exceeds sensor bounds");
  }

  Eigen::ArrayXXd delta = Eigen::ArrayXXd::Zero(side, side);
  const auto begin = std::lower_bound(stream.events.begin(), stream.events.end(), t,
                                      [](const Event& e, int64_t v) { return e.t < v; });
  const auto end = std::lower_bound(begin, stream.events.end(), t_prime,
                                    [](const Event& e, int64_t v) { return e.t < v; });
  for (auto it = begin; it != end; ++it) {
    const int lx = it->x - (center_x - half_width);
    const int ly = it->y - (center_y - half_width);
    if (lx < 0 || lx >= side || ly < 0 || ly >= side) continue;
    delta(ly, lx) += it->p;
  }
  return delta;
}

}  // namespace evgo
