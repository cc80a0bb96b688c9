#include "evgo/solver.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "evgo/image_io.hpp"

namespace evgo {

AdamState AdamState::init(int n_params, double lr_in) {
  AdamState adam;
  adam.m = Eigen::VectorXd::Zero(n_params);
  adam.v = Eigen::VectorXd::Zero(n_params);
  adam.lr = lr_in;
  return adam;
}

PairGraph build_pair_graph(int n_frames, int window, int stride) {
  if (window < 2) throw std::invalid_argument("build_pair_graph: window must be >= 2");
  if (stride < 1) throw std::invalid_argument("build_pair_graph: stride must be >= 1");
  PairGraph graph;
  graph.window = window;
  graph.stride = stride;
  for (int i = 0; i < n_frames; i += stride) {
    for (int j = i + 1; j < n_frames && j - i < window; ++j) {
      graph.edges.emplace_back(i, j);
    }
  }
  return graph;
}

Eigen::VectorXd gradient(const GlobalState& state, ObjectiveInputs& inputs,
                         LossBreakdown* breakdown) {
  const ParamLayout layout = ParamLayout::build(state);
  GradAccum acc(layout);
  const LossBreakdown bd = total_objective(state, inputs, &acc);
  if (!std::isfinite(bd.align)) throw NumericalError("align loss is not finite");
  if (!std::isfinite(bd.smooth)) throw NumericalError("smooth loss is not finite");
  if (!std::isfinite(bd.flow)) throw NumericalError("flow loss is not finite");
  if (!std::isfinite(bd.event)) throw NumericalError("event loss is not finite");
  if (breakdown) *breakdown = bd;
  return acc.g;
}

void adam_step(GlobalState& state, const ParamLayout& layout, AdamState& adam,
               const Eigen::VectorXd& grad) {
  if (grad.size() != adam.m.size()) throw std::invalid_argument("adam_step: size mismatch");
  adam.step += 1;
  adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad;
  adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
  const double bias1 = 1.0 - std::pow(adam.beta1, adam.step);
  const double bias2 = 1.0 - std::pow(adam.beta2, adam.step);
  const Eigen::ArrayXd m_hat = adam.m.array() / bias1;
  const Eigen::ArrayXd v_hat = adam.v.array() / bias2;
  const Eigen::VectorXd delta = (-adam.lr * m_hat / (v_hat.sqrt() + adam.eps)).matrix();
  apply_update(state, layout, delta);
}

SolveResult optimize(const GlobalState& init, ObjectiveInputs& inputs, const SolveConfig& config) {
  if (config.iters < 1) throw std::invalid_argument("optimize: iters must be >= 1");
  SolveResult result;
  result.state = init;
  const ParamLayout layout = ParamLayout::build(result.state);
  AdamState adam = AdamState::init(layout.total, config.lr);
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.eps = config.eps;

  GlobalState last_finite = result.state;
  for (int it = 0; it < config.iters; ++it) {
    LossBreakdown bd;
    Eigen::VectorXd g;
    try {
      g = gradient(result.state, inputs, &bd);
    } catch (const NumericalError&) {
      result.state = last_finite;
      result.diverged = true;
      return result;
    }
    result.trace.push_back(bd);
    last_finite = result.state;
    if (config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iters)) {
      std::printf("iter %4d  align %.6g  smooth %.6g  flow %.6g  event %.6g  total %.6g\n", it,
                  bd.align, bd.smooth, bd.flow, bd.event, bd.total);
    }
    adam_step(result.state, layout, adam, g);
  }
  return result;
}

void write_loss_trace(const std::string& path, const std::vector<LossBreakdown>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_loss_trace: cannot open " + path);
  out << "iter,align,smooth,flow,event,total\n";
  char line[256];
  for (size_t i = 0; i < trace.size(); ++i) {
    const LossBreakdown& bd = trace[i];
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, bd.align,
                  bd.smooth, bd.flow, bd.event, bd.total);
    out << line;
  }
}

namespace {

Eigen::ArrayXXd poses_to_array(const std::vector<Posed>& poses) {
  Eigen::ArrayXXd arr(static_cast<int>(poses.size()), 7);
  for (size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    arr(static_cast<int>(i), 0) = p.translation().x();
    arr(static_cast<int>(i), 1) = p.translation().y();
    arr(static_cast<int>(i), 2) = p.translation().z();
    arr(static_cast<int>(i), 3) = p.rotation().x();
    arr(static_cast<int>(i), 4) = p.rotation().y();
    arr(static_cast<int>(i), 5) = p.rotation().z();
    arr(static_cast<int>(i), 6) = p.rotation().w();
  }
  return arr;
}

std::vector<Posed> poses_from_array(const Eigen::ArrayXXd& arr) {
  std::vector<Posed> poses;
  for (int i = 0; i < arr.rows(); ++i) {
    const Eigen::Quaterniond q(arr(i, 6), arr(i, 3), arr(i, 4), arr(i, 5));
    poses.emplace_back(q, Eigen::Vector3d(arr(i, 0), arr(i, 1), arr(i, 2)));
  }
  return poses;
}

}  // namespace

void save_checkpoint(const std::string& dir, const GlobalState& state) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["depth_mode"] =
      state.depth_mode == DepthMode::kPerPixel ? "per_pixel" : "per_frame_scale";
  manifest["frames"] = state.frame_count();
  manifest["edges"] = state.edge_count();
  auto add_tensor = [&](const std::string& name, const std::vector<Eigen::ArrayXXd>& planes) {
    const std::string file = name + ".f32";
    write_f32(dir + "/" + file, planes);
    manifest["tensors"].push_back({{"name", name},
                                   {"file", file},
                                   {"shape", {planes[0].rows(), planes[0].cols(),
                                              static_cast<int>(planes.size())}}});
  };
  add_tensor("poses", {poses_to_array(state.poses)});
  Eigen::ArrayXXd kmat(state.frame_count(), 4);
  for (int f = 0; f < state.frame_count(); ++f) {
    const auto& k = state.intrinsics[static_cast<size_t>(f)];
    kmat.row(f) << k.fx, k.fy, k.cx, k.cy;
  }
  add_tensor("intrinsics", {kmat});
  for (int f = 0; f < state.frame_count(); ++f) {
    const auto fs_idx = static_cast<size_t>(f);
    add_tensor("log_depth_" + std::to_string(f), {state.log_depths[fs_idx]});
    add_tensor("depth_valid_" + std::to_string(f),
               {state.depth_valid[fs_idx].cast<double>().array()});
  }
  Eigen::ArrayXXd scales(std::max(1, state.frame_count()), 1);
  scales.setZero();
  for (int f = 0; f < state.frame_count(); ++f) {
    scales(f, 0) = state.depth_log_scales[static_cast<size_t>(f)];
  }
  add_tensor("depth_log_scales", {scales});
  if (state.edge_count() > 0) {
    add_tensor("edge_poses", {poses_to_array(state.edge_poses)});
    Eigen::ArrayXXd es(state.edge_count(), 1);
    for (int e = 0; e < state.edge_count(); ++e) es(e, 0) = state.edge_log_scales[static_cast<size_t>(e)];
    add_tensor("edge_log_scales", {es});
  }
  std::ofstream out(dir + "/manifest.json");
  out << manifest.dump(2) << '\n';
}

GlobalState load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("load_checkpoint: missing manifest in " + dir);
  nlohmann::json manifest;
  in >> manifest;
  GlobalState state;
  state.depth_mode = manifest.at("depth_mode") == "per_pixel" ? DepthMode::kPerPixel
                                                              : DepthMode::kPerFrameScale;
  const int frames = manifest.at("frames");
  const int edges = manifest.at("edges");
  auto tensor = [&](const std::string& name) {
    return read_f32(dir + "/" + name + ".f32");
  };
  state.poses = poses_from_array(tensor("poses")[0]);
  const Eigen::ArrayXXd kmat = tensor("intrinsics")[0];
  for (int f = 0; f < frames; ++f) {
    state.intrinsics.push_back({kmat(f, 0), kmat(f, 1), kmat(f, 2), kmat(f, 3)});
    state.log_depths.push_back(tensor("log_depth_" + std::to_string(f))[0]);
    state.depth_valid.push_back(tensor("depth_valid_" + std::to_string(f))[0] > 0.5);
  }
  const Eigen::ArrayXXd scales = tensor("depth_log_scales")[0];
  for (int f = 0; f < frames; ++f) state.depth_log_scales.push_back(scales(f, 0));
  if (edges > 0) {
    state.edge_poses = poses_from_array(tensor("edge_poses")[0]);
    const Eigen::ArrayXXd es = tensor("edge_log_scales")[0];
    for (int e = 0; e < edges; ++e) state.edge_log_scales.push_back(es(e, 0));
  }
  return state;
}

}  // namespace evgo
