#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "evgo/objective.hpp"
#include "evgo/state.hpp"

namespace evgo {

struct AdamState {
  Eigen::VectorXd m, v;
  int step = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(int n_params, double lr);
};

struct PairGraph {
  std::vector<std::pair<int, int>> edges;  // ordered (a, b), a < b
  int window = 0;
  int stride = 0;
};

// All ordered pairs (i, j) with j - i < window, source frames subsampled by
// stride.
PairGraph build_pair_graph(int n_frames, int window, int stride);

struct SolveConfig {
  int iters = 300;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int log_every = 0;  // > 0 prints a progress line every so many iterations
};

struct SolveResult {
  GlobalState state;
  std::vector<LossBreakdown> trace;  // one entry per completed iteration
  bool diverged = false;
};

// Gradient of the total objective with respect to the flat parameter vector
// (pose twists under right perturbation, log-depths, edge log-scales, edge
// pose twists). Throws NumericalError naming the term if a loss is not
// finite.
Eigen::VectorXd gradient(const GlobalState& state, ObjectiveInputs& inputs,
                         LossBreakdown* breakdown = nullptr);

// Textbook Adam with bias correction; poses are updated by exp retraction.
void adam_step(GlobalState& state, const ParamLayout& layout, AdamState& adam,
               const Eigen::VectorXd& grad);

SolveResult optimize(const GlobalState& init, ObjectiveInputs& inputs, const SolveConfig& config);

void write_loss_trace(const std::string& path, const std::vector<LossBreakdown>& trace);

// State snapshot: float32 tensors plus a JSON manifest of names and shapes.
void save_checkpoint(const std::string& dir, const GlobalState& state);
GlobalState load_checkpoint(const std::string& dir);

}  // namespace evgo
