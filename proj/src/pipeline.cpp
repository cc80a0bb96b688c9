#include "evgo/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

#include "evgo/image_io.hpp"
#include "evgo/metrics.hpp"

namespace evgo {

namespace {

std::string join_path(const std::string& base, const std::string& rel) {
  if (rel.empty() || rel.front() == '/') return rel;
  if (base.empty()) return rel;
  return (std::filesystem::path(base) / rel).string();
}

}  // namespace

Config load_config(const std::string& path) {
  Config cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config: invalid JSON in " + path + ": " + e.what());
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    cfg.weights.w_smooth = w.value("w_smooth", cfg.weights.w_smooth);
    cfg.weights.w_flow = w.value("w_flow", cfg.weights.w_flow);
    cfg.weights.w_event_base = w.value("w_event_base", cfg.weights.w_event_base);
    if (cfg.weights.w_smooth < 0 || cfg.weights.w_flow < 0 || cfg.weights.w_event_base < 0) {
      throw std::invalid_argument("config: weights must be >= 0");
    }
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    cfg.solver.iters = s.value("iters", cfg.solver.iters);
    cfg.solver.lr = s.value("lr", cfg.solver.lr);
    cfg.solver.window = s.value("window", cfg.solver.window);
    cfg.solver.stride = s.value("stride", cfg.solver.stride);
    cfg.solver.beta1 = s.value("beta1", cfg.solver.beta1);
    cfg.solver.beta2 = s.value("beta2", cfg.solver.beta2);
    cfg.solver.eps = s.value("eps", cfg.solver.eps);
    cfg.solver.depth_mode = s.value("depth_mode", cfg.solver.depth_mode);
    cfg.solver.log_every = s.value("log_every", cfg.solver.log_every);
    if (cfg.solver.depth_mode != "per_pixel" && cfg.solver.depth_mode != "per_frame_scale") {
      throw std::invalid_argument("config: solver.depth_mode invalid");
    }
  }
  if (j.contains("patches")) {
    const auto& p = j["patches"];
    cfg.patches.half_width = p.value("half_width", cfg.patches.half_width);
    cfg.patches.max_corners = p.value("max_corners", cfg.patches.max_corners);
    cfg.patches.harris_k = p.value("harris_k", cfg.patches.harris_k);
    cfg.patches.harris_sigma = p.value("harris_sigma", cfg.patches.harris_sigma);
    cfg.patches.nms_radius = p.value("nms_radius", cfg.patches.nms_radius);
    cfg.patches.motion_spread_max = p.value("motion_spread_max", cfg.patches.motion_spread_max);
  }
  if (j.contains("snr")) {
    const auto& s = j["snr"];
    cfg.snr.kernel = s.value("kernel", cfg.snr.kernel);
    cfg.snr.epsilon = s.value("epsilon", cfg.snr.epsilon);
  }
  if (j.contains("illumination")) {
    const auto& i = j["illumination"];
    cfg.illumination.sigma = i.value("sigma", cfg.illumination.sigma);
    cfg.illumination.target_mean = i.value("target_mean", cfg.illumination.target_mean);
  }
  cfg.voxel_bins = j.value("voxel_bins", cfg.voxel_bins);
  cfg.sync_warp = j.value("sync_warp", cfg.sync_warp);
  if (cfg.sync_warp != "as_printed" && cfg.sync_warp != "standard") {
    throw std::invalid_argument("config: sync_warp invalid");
  }
  cfg.fill_radius = j.value("fill_radius", cfg.fill_radius);
  cfg.threads = j.value("threads", cfg.threads);
  return cfg;
}

std::string config_to_json(const Config& cfg) {
  nlohmann::json j;
  j["weights"] = {{"w_smooth", cfg.weights.w_smooth},
                  {"w_flow", cfg.weights.w_flow},
                  {"w_event_base", cfg.weights.w_event_base}};
  j["solver"] = {{"iters", cfg.solver.iters},       {"lr", cfg.solver.lr},
                 {"window", cfg.solver.window},     {"stride", cfg.solver.stride},
                 {"beta1", cfg.solver.beta1},       {"beta2", cfg.solver.beta2},
                 {"eps", cfg.solver.eps},           {"depth_mode", cfg.solver.depth_mode},
                 {"log_every", cfg.solver.log_every}};
  j["patches"] = {{"half_width", cfg.patches.half_width},
                  {"max_corners", cfg.patches.max_corners},
                  {"harris_k", cfg.patches.harris_k},
                  {"harris_sigma", cfg.patches.harris_sigma},
                  {"nms_radius", cfg.patches.nms_radius},
                  {"motion_spread_max", cfg.patches.motion_spread_max}};
  j["snr"] = {{"kernel", cfg.snr.kernel}, {"epsilon", cfg.snr.epsilon}};
  j["illumination"] = {{"sigma", cfg.illumination.sigma},
                       {"target_mean", cfg.illumination.target_mean}};
  j["voxel_bins"] = cfg.voxel_bins;
  j["sync_warp"] = cfg.sync_warp;
  j["fill_radius"] = cfg.fill_radius;
  j["threads"] = cfg.threads;
  return j.dump(2);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("manifest: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest: invalid JSON in " + path + ": " + e.what());
  }
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  m.width = j.value("width", 0);
  m.height = j.value("height", 0);
  if (m.width <= 0 || m.height <= 0) {
    throw std::invalid_argument("manifest: width/height missing or invalid");
  }
  if (!j.contains("intrinsics")) throw std::invalid_argument("manifest: missing intrinsics");
  const auto& k = j["intrinsics"];
  m.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                  k.at("cy").get<double>()};
  if (!j.contains("frames") || j["frames"].empty()) {
    throw std::invalid_argument("manifest: missing frames");
  }
  for (const auto& f : j["frames"]) {
    FrameEntry e;
    e.t_us = f.at("t_us").get<int64_t>();
    e.image = f.at("image").get<std::string>();
    e.depth = f.at("depth").get<std::string>();
    e.illumination = f.value("illumination", "");
    if (f.contains("intrinsics")) {
      const auto& fk = f["intrinsics"];
      e.has_intrinsics = true;
      e.intrinsics = {fk.at("fx").get<double>(), fk.at("fy").get<double>(),
                      fk.at("cx").get<double>(), fk.at("cy").get<double>()};
    }
    m.frames.push_back(e);
  }
  m.events = j.value("events", "");
  m.trajectory_init = j.value("trajectory_init", "");
  m.trajectory_gt = j.value("trajectory_gt", "");
  m.illumination_mode = j.value("illumination_mode", "identity");
  if (m.illumination_mode != "identity" && m.illumination_mode != "fallback" &&
      m.illumination_mode != "files") {
    throw std::invalid_argument("manifest: illumination_mode invalid");
  }
  if (j.contains("flows")) {
    for (const auto& f : j["flows"]) {
      m.flows.push_back({f.at("a").get<int>(), f.at("b").get<int>(),
                         f.at("flow").get<std::string>(), f.value("mask", "")});
    }
  }
  if (j.contains("pointmaps")) {
    for (const auto& p : j["pointmaps"]) {
      m.pointmaps.push_back({p.at("a").get<int>(), p.at("b").get<int>(),
                             p.at("aa").get<std::string>(), p.at("ba").get<std::string>()});
    }
  }
  return m;
}

namespace {

Pointmap pointmap_from_file(const std::string& path, const std::string& frame) {
  const auto planes = read_f32(path);
  if (planes.size() != 4) throw ParseError("pointmap file needs 4 planes: " + path);
  Pointmap pm;
  pm.x = planes[0];
  pm.y = planes[1];
  pm.z = planes[2];
  pm.confidence = planes[3];
  pm.frame = frame;
  return pm;
}

// Points of `frame` pixels expressed in the reference frame: rel = P_ref^-1 P_frame.
Pointmap synthesize_pointmap(const DepthMap& depth, const Intrinsicsd& k, const Posed& rel,
                             const std::string& frame) {
  return pointmap_from_depth(depth, k, rel, frame);
}

}  // namespace

PipelineData build_pipeline(const Manifest& manifest, const Config& config) {
  PipelineData data;
  const int n = static_cast<int>(manifest.frames.size());

  if (manifest.events.empty()) {
    throw std::invalid_argument("manifest: missing required modality: events");
  }

  // per-frame loading and image preprocessing
  std::vector<DepthMap> depths(static_cast<size_t>(n));
  std::vector<Eigen::ArrayXXd> grays(static_cast<size_t>(n));
  std::vector<GradientField> gradients(static_cast<size_t>(n));
  std::vector<SnrMap> snrs(static_cast<size_t>(n));
  std::vector<CornerSet> corners(static_cast<size_t>(n));
  std::vector<Intrinsicsd> intrinsics(static_cast<size_t>(n), manifest.intrinsics);

  for (int f = 0; f < n; ++f) {
    const auto& entry = manifest.frames[static_cast<size_t>(f)];
    data.frame_times.push_back(entry.t_us);
    if (entry.has_intrinsics) intrinsics[static_cast<size_t>(f)] = entry.intrinsics;
  }
  std::string frame_error;
  std::mutex frame_error_mutex;
  parallel_for(n, config.threads, [&](int lo, int hi) {
    for (int f = lo; f < hi; ++f) {
      const auto& entry = manifest.frames[static_cast<size_t>(f)];
      const auto fs = static_cast<size_t>(f);
      try {
        const Image raw = read_png(join_path(manifest.base_dir, entry.image));
        if (raw.height() != manifest.height || raw.width() != manifest.width) {
          throw std::invalid_argument("manifest: frame " + std::to_string(f) +
                                      " image size mismatch");
        }
        depths[fs].values = read_f32(join_path(manifest.base_dir, entry.depth))[0];

        Eigen::ArrayXXd illum;
        if (manifest.illumination_mode == "files" && !entry.illumination.empty()) {
          illum = read_f32(join_path(manifest.base_dir, entry.illumination))[0];
        } else if (manifest.illumination_mode == "fallback") {
          illum =
              illumination_prior(raw, config.illumination.sigma, config.illumination.target_mean);
        } else {
          illum = Eigen::ArrayXXd::Ones(raw.height(), raw.width());
        }
        const Image enhanced = enhance(raw, illum);
        grays[fs] = to_grayscale(enhanced);
        gradients[fs] = image_gradient(grays[fs]);
        snrs[fs] = snr_map(enhanced, config.snr.kernel, config.snr.epsilon);
        corners[fs] = harris_corners(grays[fs], config.patches.harris_k, config.patches.nms_radius,
                                     config.patches.max_corners, config.patches.half_width,
                                     config.patches.harris_sigma, &snrs[fs]);
      } catch (const std::exception& e) {
        const std::lock_guard<std::mutex> lock(frame_error_mutex);
        if (frame_error.empty()) frame_error = e.what();
      }
    }
  });
  if (!frame_error.empty()) throw std::invalid_argument(frame_error);
  for (int f = 0; f < n; ++f) {
    data.corners_total += static_cast<int>(corners[static_cast<size_t>(f)].size());
  }

  // initial poses
  std::vector<Posed> poses(static_cast<size_t>(n));
  if (!manifest.trajectory_init.empty()) {
    const Trajectory traj = read_tum(join_path(manifest.base_dir, manifest.trajectory_init));
    for (int f = 0; f < n; ++f) {
      poses[static_cast<size_t>(f)] = sample_pose(traj, data.frame_times[static_cast<size_t>(f)] * 1e-6);
    }
  } else {
    data.warnings.push_back("no trajectory_init; poses initialized to identity");
  }

  const PairGraph graph =
      build_pair_graph(n, config.solver.window, config.solver.stride);
  const DepthMode mode = config.solver.depth_mode == "per_frame_scale"
                             ? DepthMode::kPerFrameScale
                             : DepthMode::kPerPixel;
  data.init = make_state(depths, poses, intrinsics, static_cast<int>(graph.edges.size()), mode);

  // edges: load pointmap files when present, otherwise synthesize from the
  // initial depths and poses
  std::map<std::pair<int, int>, const PointmapEntry*> pm_files;
  for (const auto& e : manifest.pointmaps) pm_files[{e.a, e.b}] = &e;
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [a, b] = graph.edges[e];
    PairEdge edge;
    edge.frame_a = a;
    edge.frame_b = b;
    const auto it = pm_files.find({a, b});
    if (it != pm_files.end()) {
      edge.pointmap_aa = pointmap_from_file(join_path(manifest.base_dir, it->second->aa), "a");
      edge.pointmap_ba = pointmap_from_file(join_path(manifest.base_dir, it->second->ba), "a");
    } else {
      // synthesize from the state's own depths so a ground-truth init is an
      // exact zero of the alignment term
      const Posed rel = poses[static_cast<size_t>(a)].inverse() * poses[static_cast<size_t>(b)];
      edge.pointmap_aa = synthesize_pointmap(data.init.depth(a), intrinsics[static_cast<size_t>(a)],
                                             Posed::identity(), "a");
      edge.pointmap_ba =
          synthesize_pointmap(data.init.depth(b), intrinsics[static_cast<size_t>(b)], rel, "a");
    }
    edge.pairwise_pose = poses[static_cast<size_t>(a)];
    edge.scale = 1.0;
    data.init.edge_poses[e] = edge.pairwise_pose;
    data.init.edge_log_scales[e] = 0.0;
    data.inputs.edges.push_back(std::move(edge));
  }

  // event patches over consecutive pairs
  const EventStream events = parse_events(join_path(manifest.base_dir, manifest.events),
                                          manifest.width, manifest.height);
  const int hw = config.patches.half_width;
  for (int f = 0; f + 1 < n; ++f) {
    const auto fs = static_cast<size_t>(f);
    const MotionField init_motion =
        motion_field(depths[fs], intrinsics[fs], poses[fs], intrinsics[fs + 1], poses[fs + 1]);
    for (const Corner& c : corners[fs]) {
      Patch patch;
      patch.frame_a = f;
      patch.frame_b = f + 1;
      patch.center_x = c.x;
      patch.center_y = c.y;
      patch.half_width = hw;
      patch.corner_snr = c.snr;
      patch.observed = accumulate_patch(events, c.x, c.y, hw, data.frame_times[fs],
                                        data.frame_times[fs + 1]);
      if ((patch.observed * patch.observed).sum() == 0.0) continue;

      // locally-constant-flow gate on the initial motion field
      bool usable = true;
      double mean_u = 0.0, mean_v = 0.0;
      int count = 0;
      for (int r = c.y - hw; r <= c.y + hw && usable; ++r) {
        for (int cc = c.x - hw; cc <= c.x + hw; ++cc) {
          if (!init_motion.valid(r, cc)) {
            usable = false;
            break;
          }
          mean_u += init_motion.du(r, cc);
          mean_v += init_motion.dv(r, cc);
          ++count;
        }
      }
      if (!usable || count == 0) continue;
      mean_u /= count;
      mean_v /= count;
      double spread = 0.0;
      for (int r = c.y - hw; r <= c.y + hw; ++r) {
        for (int cc = c.x - hw; cc <= c.x + hw; ++cc) {
          const double du = init_motion.du(r, cc) - mean_u;
          const double dv = init_motion.dv(r, cc) - mean_v;
          spread = std::max(spread, std::sqrt(du * du + dv * dv));
        }
      }
      if (spread > config.patches.motion_spread_max) continue;

      patch.grad_x = gradients[fs].gx.block(c.y - hw, c.x - hw, patch.side(), patch.side());
      patch.grad_y = gradients[fs].gy.block(c.y - hw, c.x - hw, patch.side(), patch.side());
      patch.predicted.setZero(patch.side(), patch.side());
      data.inputs.patches.push_back(std::move(patch));
    }
  }

  // flow observations
  for (const auto& fe : manifest.flows) {
    if (fe.a < 0 || fe.b < 0 || fe.a >= n || fe.b >= n) {
      data.warnings.push_back("flow pair out of range; skipped");
      continue;
    }
    FlowObservation obs;
    obs.frame_a = fe.a;
    obs.frame_b = fe.b;
    try {
      const auto planes = read_f32(join_path(manifest.base_dir, fe.flow));
      if (planes.size() != 2) throw ParseError("flow file needs 2 planes: " + fe.flow);
      obs.flow_u = planes[0];
      obs.flow_v = planes[1];
    } catch (const std::exception& e) {
      data.warnings.push_back(std::string("flow pair skipped: ") + e.what());
      continue;
    }
    if (!fe.mask.empty()) {
      obs.static_mask = read_f32(join_path(manifest.base_dir, fe.mask))[0] > 0.5;
    } else {
      obs.static_mask = Mask::Constant(manifest.height, manifest.width, true);
    }
    data.inputs.flows.push_back(std::move(obs));
  }

  data.inputs.weights = config.weights;
  return data;
}

}  // namespace evgo
