#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace evgo {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

// Thrown by file readers on malformed content; message carries the line number.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an optimization quantity becomes non-finite.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline int default_thread_count() {
  if (const char* env = std::getenv("EVGO_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// Splits [0, n) into contiguous chunks, one worker thread per chunk. Workers
// must write disjoint outputs; results are then independent of thread count.
inline void parallel_for(int n, int threads, const std::function<void(int, int)>& body) {
  if (threads <= 1 || n <= 1) {
    body(0, n);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  const int chunk = (n + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace evgo
