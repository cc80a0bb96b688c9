#include "evgo/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "evgo/objective.hpp"

namespace evgo {

namespace {

// Band-limited procedural texture on the scene plane: smoothed checkerboard
// plus random sinusoids plus a low-frequency sweep, squashed into (0, 1).
class Texture {
 public:
  Texture(const TextureSpec& spec, uint64_t seed) : spec_(spec) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < spec.noise_components; ++i) {
      Wave w;
      const double f = spec.noise_freq_min + (spec.noise_freq_max - spec.noise_freq_min) * uni(rng);
      const double ang = 2.0 * M_PI * uni(rng);
      w.kx = 2.0 * M_PI * f * std::cos(ang);
      w.ky = 2.0 * M_PI * f * std::sin(ang);
      w.phase = 2.0 * M_PI * uni(rng);
      w.amp = 1.0 / std::sqrt(static_cast<double>(std::max(1, spec.noise_components)));
      waves_.push_back(w);
    }
  }

  double operator()(double x, double y) const {
    double raw = 0.0;
    if (spec_.checker_weight != 0.0) {
      const double c = std::sin(2.0 * M_PI * x / spec_.checker_period) *
                       std::sin(2.0 * M_PI * y / spec_.checker_period);
      raw += spec_.checker_weight * std::tanh(4.0 * c) / std::tanh(4.0);
    }
    if (spec_.noise_weight != 0.0) {
      double n = 0.0;
      for (const Wave& w : waves_) n += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      raw += spec_.noise_weight * n;
    }
    if (spec_.gradient_weight != 0.0) {
      raw += spec_.gradient_weight * std::sin(2.0 * M_PI * (0.13 * x + 0.07 * y));
    }
    return 0.5 + 0.45 * std::tanh(1.2 * raw);
  }

 private:
  struct Wave {
    double kx, ky, phase, amp;
  };
  TextureSpec spec_;
  std::vector<Wave> waves_;
};

double quantize_intensity(double v, int bits) {
  if (bits <= 0) return v;
  const double levels = std::pow(2.0, bits) - 1.0;
  return std::round(std::clamp(v, 0.0, 1.0) * levels) / levels;
}

double surface_height(const SceneSpec& spec, double x, double y) {
  if (spec.depth_model == "relief" && spec.relief_amplitude != 0.0) {
    return spec.plane_z + spec.relief_amplitude * std::sin(2.0 * M_PI * x / spec.relief_period) *
                              std::cos(2.0 * M_PI * y / spec.relief_period);
  }
  return spec.plane_z;
}

}  // namespace

Posed scene_pose(const SceneSpec& spec, int64_t t_us) {
  const auto& traj = spec.trajectory;
  if (traj.empty()) throw std::out_of_range("scene_pose: empty trajectory");
  if (t_us < traj.front().t_us || t_us > traj.back().t_us) {
    throw std::out_of_range("scene_pose: time outside trajectory span");
  }
  for (size_t i = 0; i + 1 < traj.size(); ++i) {
    if (t_us <= traj[i + 1].t_us) {
      if (t_us == traj[i].t_us) return traj[i].pose;
      if (t_us == traj[i + 1].t_us) return traj[i + 1].pose;
      return interpolate_pose(traj[i].pose, static_cast<double>(traj[i].t_us), traj[i + 1].pose,
                              static_cast<double>(traj[i + 1].t_us), static_cast<double>(t_us));
    }
  }
  return traj.back().pose;
}

RenderResult render_scene(const SceneSpec& spec, int64_t t_us) {
  const Texture tex(spec.texture, spec.seed);
  RenderResult out;
  out.pose = scene_pose(spec, t_us);
  out.image = Image::constant(spec.height, spec.width, 1, 0.0);
  out.depth.values.setZero(spec.height, spec.width);
  const Eigen::Matrix3d r = out.pose.rotation_matrix();
  const Eigen::Vector3d origin = out.pose.translation();
  const bool relief = spec.depth_model == "relief" && spec.relief_amplitude != 0.0;

  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      const Eigen::Vector3d dir_local((col - spec.intrinsics.cx) / spec.intrinsics.fx,
                                      (row - spec.intrinsics.cy) / spec.intrinsics.fy, 1.0);
      const Eigen::Vector3d dir = r * dir_local;
      if (std::abs(dir.z()) < 1e-12) continue;
      double s = (spec.plane_z - origin.z()) / dir.z();
      if (relief) {
        for (int it = 0; it < 40; ++it) {
          const Eigen::Vector3d p = origin + s * dir;
          const double s_next = (surface_height(spec, p.x(), p.y()) - origin.z()) / dir.z();
          if (std::abs(s_next - s) < 1e-13) {
            s = s_next;
            break;
          }
          s = s_next;
        }
      }
      if (!(s > 0.0)) continue;
      const Eigen::Vector3d hit = origin + s * dir;
      out.depth.values(row, col) = s;  // dir_local.z == 1, so s is camera-frame depth
      out.image.channels[0](row, col) =
          quantize_intensity(tex(hit.x(), hit.y()), spec.intensity_bits);
    }
  }
  return out;
}

EventStream simulate_events(const SceneSpec& spec, int64_t t_us, int64_t t_prime_us,
                            EventModel mode) {
  if (!(t_us < t_prime_us)) throw std::invalid_argument("simulate_events: need t < t_prime");
  EventStream stream;
  stream.width = spec.width;
  stream.height = spec.height;
  const double span_us = static_cast<double>(t_prime_us - t_us);

  if (mode == EventModel::kLinearized) {
    const RenderResult frame = render_scene(spec, t_us);
    const Posed pose_next = scene_pose(spec, t_prime_us);
    const GradientField grad = image_gradient(frame.image.channels[0]);
    const MotionField motion =
        motion_field(frame.depth, spec.intrinsics, frame.pose, spec.intrinsics, pose_next);
    const Eigen::ArrayXXd increments =
        predicted_increment(grad, motion, span_us * 1e-6, spec.contrast_c);
    const double peak = increments.abs().maxCoeff();
    if (peak < 1e-12) return stream;  // numerically static
    const double quantum = peak / spec.event_quantum_div;
    for (int row = 0; row < spec.height; ++row) {
      for (int col = 0; col < spec.width; ++col) {
        const long long n = std::llround(increments(row, col) / quantum);
        const int count = static_cast<int>(std::llabs(n));
        const int polarity = n > 0 ? 1 : -1;
        for (int i = 0; i < count; ++i) {
          const double frac = (i + 0.5) / count;
          int64_t ts = t_us + static_cast<int64_t>(frac * span_us);
          ts = std::min(ts, t_prime_us - 1);
          stream.events.push_back(Event{ts, col, row, polarity});
        }
      }
    }
  } else {
    const int steps = std::max(1, spec.threshold_substeps);
    constexpr double kLogEps = 1e-3;
    Eigen::ArrayXXd prev_log(spec.height, spec.width);
    Eigen::ArrayXXd ref(spec.height, spec.width);
    std::vector<int64_t> times(static_cast<size_t>(steps) + 1);
    for (int j = 0; j <= steps; ++j) {
      times[static_cast<size_t>(j)] =
          t_us + static_cast<int64_t>(std::llround(span_us * j / steps));
      const RenderResult frame = render_scene(spec, times[static_cast<size_t>(j)]);
      const Eigen::ArrayXXd log_i = (frame.image.channels[0] + kLogEps).log();
      if (j == 0) {
        prev_log = log_i;
        ref = log_i;
        continue;
      }
      for (int row = 0; row < spec.height; ++row) {
        for (int col = 0; col < spec.width; ++col) {
          const double l0 = prev_log(row, col);
          const double l1 = log_i(row, col);
          double& r = ref(row, col);
          while (l1 - r >= spec.contrast_c || l1 - r <= -spec.contrast_c) {
            const int polarity = l1 > r ? 1 : -1;
            const double target = r + polarity * spec.contrast_c;
            double frac = l1 != l0 ? (target - l0) / (l1 - l0) : 1.0;
            frac = std::clamp(frac, 0.0, 1.0);
            const auto t0 = times[static_cast<size_t>(j - 1)];
            const auto t1 = times[static_cast<size_t>(j)];
            int64_t ts = t0 + static_cast<int64_t>(frac * static_cast<double>(t1 - t0));
            ts = std::min(std::max(ts, t_us), t_prime_us - 1);
            stream.events.push_back(Event{ts, col, row, polarity});
            r = target;
          }
        }
      }
      prev_log = log_i;
    }
  }
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return stream;
}

double quantization_loss_bound(const std::vector<Eigen::ArrayXXd>& predicted_patches,
                               double quantum) {
  double bound = 0.0;
  for (const auto& p : predicted_patches) {
    const double norm = std::sqrt((p * p).sum());
    const double err = 0.5 * quantum * std::sqrt(static_cast<double>(p.size()));
    if (norm <= err) {
      bound += 4.0;
      continue;
    }
    const double ratio = 2.0 * err / (norm - err);
    bound += ratio * ratio;
  }
  return bound;
}

GlobalState perturb(const GlobalState& state, double sigma_rot, double sigma_trans,
                    double sigma_logdepth, uint64_t seed) {
  if (sigma_rot < 0.0 || sigma_trans < 0.0 || sigma_logdepth < 0.0) {
    throw std::invalid_argument("perturb: sigmas must be >= 0");
  }
  GlobalState out = state;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& pose : out.poses) {
    Vector6d xi;
    for (int i = 0; i < 3; ++i) xi(i) = sigma_rot * gauss(rng);
    for (int i = 3; i < 6; ++i) xi(i) = sigma_trans * gauss(rng);
    pose = pose * se3_exp<double>(xi);
  }
  if (sigma_logdepth > 0.0) {
    for (size_t f = 0; f < out.log_depths.size(); ++f) {
      if (out.depth_mode == DepthMode::kPerFrameScale) {
        out.depth_log_scales[f] += sigma_logdepth * gauss(rng);
        continue;
      }
      auto& ld = out.log_depths[f];
      for (Eigen::Index row = 0; row < ld.rows(); ++row) {
        for (Eigen::Index col = 0; col < ld.cols(); ++col) {
          if (out.depth_valid[f](row, col)) ld(row, col) += sigma_logdepth * gauss(rng);
        }
      }
    }
  }
  return out;
}

SceneSpec scene_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("scene: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("scene: invalid JSON in " + path + ": " + e.what());
  }

  SceneSpec spec;
  spec.width = j.value("width", spec.width);
  spec.height = j.value("height", spec.height);
  if (j.contains("intrinsics")) {
    const auto& k = j["intrinsics"];
    spec.intrinsics = {k.value("fx", 60.0), k.value("fy", 60.0), k.value("cx", 31.5),
                       k.value("cy", 31.5)};
  } else {
    spec.intrinsics = {0.9 * spec.width, 0.9 * spec.width, (spec.width - 1) / 2.0,
                       (spec.height - 1) / 2.0};
  }
  if (j.contains("texture")) {
    const auto& t = j["texture"];
    spec.texture.checker_weight = t.value("checker_weight", spec.texture.checker_weight);
    spec.texture.checker_period = t.value("checker_period", spec.texture.checker_period);
    spec.texture.noise_weight = t.value("noise_weight", spec.texture.noise_weight);
    spec.texture.noise_components = t.value("noise_components", spec.texture.noise_components);
    spec.texture.noise_freq_min = t.value("noise_freq_min", spec.texture.noise_freq_min);
    spec.texture.noise_freq_max = t.value("noise_freq_max", spec.texture.noise_freq_max);
    spec.texture.gradient_weight = t.value("gradient_weight", spec.texture.gradient_weight);
  }
  spec.depth_model = j.value("depth_model", spec.depth_model);
  if (spec.depth_model != "plane" && spec.depth_model != "relief") {
    throw std::invalid_argument("scene: depth_model must be 'plane' or 'relief'");
  }
  spec.plane_z = j.value("plane_z", spec.plane_z);
  spec.relief_amplitude = j.value("relief_amplitude", spec.relief_amplitude);
  spec.relief_period = j.value("relief_period", spec.relief_period);
  spec.contrast_c = j.value("contrast_c", spec.contrast_c);
  if (!(spec.contrast_c > 0.0)) throw std::invalid_argument("scene: contrast_c must be > 0");
  spec.event_quantum_div = j.value("event_quantum_div", spec.event_quantum_div);
  if (!(spec.event_quantum_div > 0.0)) {
    throw std::invalid_argument("scene: event_quantum_div must be > 0");
  }
  const std::string mode = j.value("events_mode", "linearized");
  if (mode == "linearized") {
    spec.events_mode = EventModel::kLinearized;
  } else if (mode == "threshold") {
    spec.events_mode = EventModel::kThreshold;
  } else {
    throw std::invalid_argument("scene: events_mode must be 'linearized' or 'threshold'");
  }
  spec.threshold_substeps = j.value("threshold_substeps", spec.threshold_substeps);
  spec.seed = j.value("seed", spec.seed);
  spec.intensity_bits = j.value("intensity_bits", spec.intensity_bits);

  if (!j.contains("trajectory") || !j["trajectory"].is_array() || j["trajectory"].empty()) {
    throw std::invalid_argument("scene: trajectory must be a non-empty array");
  }
  int64_t last_t = 0;
  bool first = true;
  for (const auto& row : j["trajectory"]) {
    if (!row.is_array() || row.size() != 8) {
      throw std::invalid_argument("scene: trajectory rows must be [t_us,tx,ty,tz,qx,qy,qz,qw]");
    }
    TrajectorySample s;
    s.t_us = row[0].get<int64_t>();
    const Eigen::Vector3d t(row[1].get<double>(), row[2].get<double>(), row[3].get<double>());
    const Eigen::Quaterniond q(row[7].get<double>(), row[4].get<double>(), row[5].get<double>(),
                               row[6].get<double>());
    s.pose = Posed(q, t);
    if (!first && s.t_us <= last_t) {
      throw std::invalid_argument("scene: trajectory timestamps must be strictly increasing");
    }
    last_t = s.t_us;
    first = false;
    spec.trajectory.push_back(s);
  }
  return spec;
}

std::string scene_to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["intrinsics"] = {{"fx", spec.intrinsics.fx},
                     {"fy", spec.intrinsics.fy},
                     {"cx", spec.intrinsics.cx},
                     {"cy", spec.intrinsics.cy}};
  j["texture"] = {{"checker_weight", spec.texture.checker_weight},
                  {"checker_period", spec.texture.checker_period},
                  {"noise_weight", spec.texture.noise_weight},
                  {"noise_components", spec.texture.noise_components},
                  {"noise_freq_min", spec.texture.noise_freq_min},
                  {"noise_freq_max", spec.texture.noise_freq_max},
                  {"gradient_weight", spec.texture.gradient_weight}};
  j["depth_model"] = spec.depth_model;
  j["plane_z"] = spec.plane_z;
  j["relief_amplitude"] = spec.relief_amplitude;
  j["relief_period"] = spec.relief_period;
  j["contrast_c"] = spec.contrast_c;
  j["event_quantum_div"] = spec.event_quantum_div;
  j["events_mode"] = spec.events_mode == EventModel::kLinearized ? "linearized" : "threshold";
  j["threshold_substeps"] = spec.threshold_substeps;
  j["seed"] = spec.seed;
  j["intensity_bits"] = spec.intensity_bits;
  for (const auto& s : spec.trajectory) {
    j["trajectory"].push_back({s.t_us, s.pose.translation().x(), s.pose.translation().y(),
                               s.pose.translation().z(), s.pose.rotation().x(),
                               s.pose.rotation().y(), s.pose.rotation().z(),
                               s.pose.rotation().w()});
  }
  return j.dump(2);
}

}  // namespace evgo
