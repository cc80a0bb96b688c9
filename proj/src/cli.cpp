#include "evgo/cli.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "evgo/image_io.hpp"
#include "evgo/metrics.hpp"
#include "evgo/pipeline.hpp"
#include "evgo/sync.hpp"
#include "evgo/synth.hpp"

namespace evgo {

namespace fs = std::filesystem;

namespace {

std::string frame_name(const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.%s", prefix, index, ext);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace

int cmd_simulate(const std::string& scene_path, const std::string& out_dir, long long seed_override,
                 int threads) {
  SceneSpec spec = scene_from_json_file(scene_path);
  if (seed_override >= 0) spec.seed = static_cast<uint64_t>(seed_override);
  fs::create_directories(out_dir);

  const int n = static_cast<int>(spec.trajectory.size());
  std::vector<RenderResult> frames(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int lo, int hi) {
    for (int f = lo; f < hi; ++f) {
      frames[static_cast<size_t>(f)] = render_scene(spec, spec.trajectory[static_cast<size_t>(f)].t_us);
    }
  });

  nlohmann::json manifest;
  manifest["width"] = spec.width;
  manifest["height"] = spec.height;
  manifest["intrinsics"] = {{"fx", spec.intrinsics.fx},
                            {"fy", spec.intrinsics.fy},
                            {"cx", spec.intrinsics.cx},
                            {"cy", spec.intrinsics.cy}};
  manifest["illumination_mode"] = "identity";

  Trajectory gt;
  for (int f = 0; f < n; ++f) {
    const auto& frame = frames[static_cast<size_t>(f)];
    const std::string img_name = frame_name("frame", f, "png");
    const std::string depth_name = frame_name("depth", f, "f32");
    write_png(out_dir + "/" + img_name, frame.image, spec.intensity_bits == 8 ? 8 : 16);
    write_f32(out_dir + "/" + depth_name, {frame.depth.values});
    manifest["frames"].push_back(
        {{"t_us", spec.trajectory[static_cast<size_t>(f)].t_us}, {"image", img_name}, {"depth", depth_name}});
    gt.samples.push_back({spec.trajectory[static_cast<size_t>(f)].t_us * 1e-6, frame.pose});
  }
  write_tum(out_dir + "/trajectory_gt.tum", gt);
  manifest["trajectory_init"] = "trajectory_gt.tum";
  manifest["trajectory_gt"] = "trajectory_gt.tum";

  EventStream all;
  all.width = spec.width;
  all.height = spec.height;
  for (int f = 0; f + 1 < n; ++f) {
    const EventStream pair_events =
        simulate_events(spec, spec.trajectory[static_cast<size_t>(f)].t_us,
                        spec.trajectory[static_cast<size_t>(f) + 1].t_us, spec.events_mode);
    all.events.insert(all.events.end(), pair_events.events.begin(), pair_events.events.end());
  }
  serialize_events(all, out_dir + "/events.csv");
  manifest["events"] = "events.csv";

  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  write_text(out_dir + "/scene_resolved.json", scene_to_json(spec) + "\n");
  std::printf("simulate: %d frames, %zu events -> %s\n", n, all.events.size(), out_dir.c_str());
  return 0;
}

int cmd_optimize(const std::string& manifest_path, const std::string& config_path,
                 const std::string& out_dir, int threads) {
  Config config = load_config(config_path);
  config.threads = threads;
  const Manifest manifest = load_manifest(manifest_path);
  PipelineData data = build_pipeline(manifest, config);
  for (const auto& w : data.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  SolveConfig sc;
  sc.iters = config.solver.iters;
  sc.lr = config.solver.lr;
  sc.beta1 = config.solver.beta1;
  sc.beta2 = config.solver.beta2;
  sc.eps = config.solver.eps;
  sc.log_every = config.solver.log_every;
  const SolveResult result = optimize(data.init, data.inputs, sc);

  fs::create_directories(out_dir);
  write_loss_trace(out_dir + "/loss_trace.csv", result.trace);
  write_text(out_dir + "/resolved_config.json", config_to_json(config) + "\n");

  Trajectory traj;
  for (int f = 0; f < result.state.frame_count(); ++f) {
    traj.samples.push_back(
        {data.frame_times[static_cast<size_t>(f)] * 1e-6, result.state.poses[static_cast<size_t>(f)]});
  }
  write_tum(out_dir + "/trajectory.tum", traj);
  for (int f = 0; f < result.state.frame_count(); ++f) {
    write_f32(out_dir + "/" + frame_name("depth", f, "f32"), {result.state.depth(f).values});
  }
  save_checkpoint(out_dir + "/checkpoint", result.state);

  nlohmann::json summary;
  summary["iterations"] = result.trace.size();
  summary["diverged"] = result.diverged;
  summary["patches"] = data.inputs.patches.size();
  summary["edges"] = data.inputs.edges.size();
  summary["corners"] = data.corners_total;
  summary["warnings"] = data.warnings;
  if (!result.trace.empty()) {
    const auto& bd = result.trace.back();
    summary["final"] = {{"align", bd.align}, {"smooth", bd.smooth}, {"flow", bd.flow},
                        {"event", bd.event}, {"total", bd.total},   {"w_event", bd.w_event}};
  }
  write_text(out_dir + "/summary.json", summary.dump(2) + "\n");

  if (result.diverged) {
    std::fprintf(stderr, "optimize: diverged; last finite state written\n");
    return 2;
  }
  if (!result.trace.empty()) {
    std::printf("optimize: %zu iters, total %.6g -> %s\n", result.trace.size(),
                result.trace.back().total, out_dir.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_dir) {
  auto find_trajectory = [](const std::string& dir) {
    for (const char* name : {"trajectory.tum", "trajectory_gt.tum"}) {
      if (fs::exists(dir + "/" + name)) return dir + "/" + name;
    }
    throw std::invalid_argument("eval: no trajectory file in " + dir);
  };
  const Trajectory pred = read_tum(find_trajectory(pred_dir));
  const Trajectory gt = read_tum(find_trajectory(gt_dir));

  std::vector<std::string> depth_names;
  if (fs::exists(pred_dir)) {
    for (const auto& entry : fs::directory_iterator(pred_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("depth_", 0) == 0 && name.size() > 4 &&
          name.substr(name.size() - 4) == ".f32" && fs::exists(gt_dir + "/" + name)) {
        depth_names.push_back(name);
      }
    }
  }
  std::sort(depth_names.begin(), depth_names.end());
  if (depth_names.empty() && pred.samples.empty()) {
    throw std::invalid_argument("eval: prediction directory has no depth or trajectory data");
  }

  fs::create_directories(out_dir);
  std::ofstream per_frame(out_dir + "/per_frame.csv");
  per_frame << "frame,abs_rel,delta_125,rmse_log\n";
  double abs_rel = 0, delta = 0, rmse_log = 0;
  for (size_t i = 0; i < depth_names.size(); ++i) {
    DepthMap p, g;
    p.values = read_f32(pred_dir + "/" + depth_names[i])[0];
    g.values = read_f32(gt_dir + "/" + depth_names[i])[0];
    const DepthMetrics m = depth_metrics(p, g, true);
    abs_rel += m.abs_rel;
    delta += m.delta_125;
    rmse_log += m.rmse_log;
    char line[160];
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g\n", i, m.abs_rel, m.delta_125,
                  m.rmse_log);
    per_frame << line;
  }
  const double nd = std::max<size_t>(1, depth_names.size());
  nlohmann::json out;
  out["pred"] = pred_dir;
  out["gt"] = gt_dir;
  out["frames_evaluated"] = depth_names.size();
  out["abs_rel"] = abs_rel / nd;
  out["delta_125"] = delta / nd;
  out["rmse_log"] = rmse_log / nd;
  out["ate"] = ate(pred, gt);
  const auto [rpe_t, rpe_r] = rpe(pred, gt, 1);
  out["rpe_trans"] = rpe_t;
  out["rpe_rot"] = rpe_r;
  write_text(out_dir + "/metrics.json", out.dump(2) + "\n");
  std::printf("eval: abs_rel %.4f  delta<1.25 %.4f  rmse_log %.4f  ate %.6f  rpe %.6f/%.4f\n",
              out["abs_rel"].get<double>(), out["delta_125"].get<double>(),
              out["rmse_log"].get<double>(), out["ate"].get<double>(), rpe_t, rpe_r);
  return 0;
}

int cmd_sync(const std::string& manifest_path, const std::string& mode,
             const std::string& config_path, const std::string& out_dir) {
  if (mode != "day" && mode != "night") {
    throw std::invalid_argument("sync: mode must be 'day' or 'night'");
  }
  const Config config = load_config(config_path);

  std::ifstream in(manifest_path);
  if (!in) throw ParseError("sync manifest: cannot open " + manifest_path);
  nlohmann::json j;
  in >> j;
  const std::string base = fs::path(manifest_path).parent_path().string();
  auto join = [&](const std::string& rel) {
    return rel.empty() || rel.front() == '/' ? rel : (fs::path(base) / rel).string();
  };

  SyncStreams streams;
  streams.intrinsics = {j.at("intrinsics").at("fx").get<double>(),
                        j.at("intrinsics").at("fy").get<double>(),
                        j.at("intrinsics").at("cx").get<double>(),
                        j.at("intrinsics").at("cy").get<double>()};
  const int width = j.at("width").get<int>();
  const int height = j.at("height").get<int>();
  for (const auto& p : j.at("images")) streams.images.push_back(read_png(join(p)));
  for (const auto& t : j.at("image_times_us")) streams.image_times.push_back(t.get<int64_t>());
  for (const auto& p : j.at("depths")) {
    DepthMap d;
    d.values = read_f32(join(p))[0];
    streams.depths.push_back(std::move(d));
  }
  for (const auto& t : j.at("depth_times_us")) streams.depth_times.push_back(t.get<int64_t>());
  if (!j.contains("trajectory")) throw std::invalid_argument("sync manifest: missing trajectory");
  streams.poses = read_tum(join(j.at("trajectory").get<std::string>()));
  if (j.contains("events")) {
    streams.events = parse_events(join(j.at("events").get<std::string>()), width, height);
  } else {
    streams.events.width = width;
    streams.events.height = height;
  }
  if (j.contains("image_valid")) {
    for (const auto& p : j.at("image_valid")) {
      streams.image_valid.push_back(read_f32(join(p))[0] > 0.5);
    }
  }

  SyncOptions options;
  options.warp_mode = config.sync_warp == "standard" ? WarpMode::kStandard : WarpMode::kAsPrinted;
  options.fill_radius = config.fill_radius;

  SyncReport report;
  // rate sanity: night expects depth at least as fast as images
  if (streams.image_times.size() >= 2 && streams.depth_times.size() >= 2) {
    const double img_rate = static_cast<double>(streams.image_times.size() - 1) /
                            static_cast<double>(streams.image_times.back() - streams.image_times.front());
    const double depth_rate = static_cast<double>(streams.depth_times.size() - 1) /
                              static_cast<double>(streams.depth_times.back() - streams.depth_times.front());
    if (mode == "night" && img_rate > depth_rate) {
      report.warnings.push_back("night mode on day-rate data (image rate exceeds depth rate)");
    }
    if (mode == "day" && depth_rate > img_rate) {
      report.warnings.push_back("day mode on night-rate data (depth rate exceeds image rate)");
    }
  }

  const auto tuples = mode == "day" ? align_day(streams, options, &report)
                                    : align_night(streams, options, &report);

  fs::create_directories(out_dir);
  for (size_t i = 0; i < tuples.size(); ++i) {
    const auto& tup = tuples[i];
    const int idx = static_cast<int>(i);
    write_png(out_dir + "/" + frame_name("tuple_image", idx, "png"), tup.image);
    write_f32(out_dir + "/" + frame_name("tuple_depth", idx, "f32"), {tup.depth.values});
    serialize_events(tup.events, out_dir + "/" + frame_name("tuple_events", idx, "csv"));
    Trajectory single;
    single.samples.push_back({tup.image_t_us * 1e-6, tup.pose});
    write_tum(out_dir + "/" + frame_name("tuple_pose", idx, "tum"), single);
  }
  nlohmann::json summary;
  summary["tuples"] = report.tuples;
  summary["skipped"] = report.skipped;
  summary["unfillable_pixels"] = report.unfillable_pixels;
  summary["warnings"] = report.warnings;
  summary["mode"] = mode;
  write_text(out_dir + "/summary.json", summary.dump(2) + "\n");
  write_text(out_dir + "/resolved_config.json", config_to_json(config) + "\n");
  for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("sync: %d tuples (%d skipped) -> %s\n", report.tuples, report.skipped,
              out_dir.c_str());
  return 0;
}

}  // namespace evgo
