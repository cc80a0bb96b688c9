#include "evgo/metrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace evgo {

Trajectory read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_tum: cannot open " + path);
  Trajectory traj;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw ParseError(path + ": malformed trajectory line " + std::to_string(line_no));
    }
    traj.samples.push_back(
        {t, Posed(Eigen::Quaterniond(qw, qx, qy, qz), Eigen::Vector3d(tx, ty, tz))});
  }
  return traj;
}

void write_tum(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_tum: cannot open " + path);
  char line[256];
  for (const auto& s : traj.samples) {
    std::snprintf(line, sizeof(line), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", s.t,
                  s.pose.translation().x(), s.pose.translation().y(), s.pose.translation().z(),
                  s.pose.rotation().x(), s.pose.rotation().y(), s.pose.rotation().z(),
                  s.pose.rotation().w());
    out << line;
  }
}

Posed sample_pose(const Trajectory& traj, double t) {
  if (traj.samples.empty()) throw std::out_of_range("sample_pose: empty trajectory");
  if (t < traj.samples.front().t || t > traj.samples.back().t) {
    throw std::out_of_range("sample_pose: time outside trajectory span");
  }
  for (size_t i = 0; i + 1 < traj.samples.size(); ++i) {
    if (t <= traj.samples[i + 1].t) {
      if (t == traj.samples[i].t) return traj.samples[i].pose;
      if (t == traj.samples[i + 1].t) return traj.samples[i + 1].pose;
      return interpolate_pose(traj.samples[i].pose, traj.samples[i].t, traj.samples[i + 1].pose,
                              traj.samples[i + 1].t, t);
    }
  }
  return traj.samples.back().pose;
}

DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt, bool scale_align) {
  if (pred.values.rows() != gt.values.rows() || pred.values.cols() != gt.values.cols()) {
    throw std::invalid_argument("depth_metrics: shape mismatch");
  }
  std::vector<double> ratios;
  std::vector<std::pair<double, double>> pairs;  // (pred, gt)
  for (int row = 0; row < pred.height(); ++row) {
    for (int col = 0; col < pred.width(); ++col) {
      if (!pred.valid(row, col) || !gt.valid(row, col)) continue;
      pairs.emplace_back(pred.values(row, col), gt.values(row, col));
      ratios.push_back(gt.values(row, col) / pred.values(row, col));
    }
  }
  if (pairs.empty()) throw std::invalid_argument("depth_metrics: no jointly valid pixels");

  double scale = 1.0;
  if (scale_align) {
    const size_t mid = ratios.size() / 2;
    std::nth_element(ratios.begin(), ratios.begin() + static_cast<long>(mid), ratios.end());
    scale = ratios[mid];
  }

  DepthMetrics m;
  double hits = 0.0;
  for (const auto& [p_raw, g] : pairs) {
    const double p = scale * p_raw;
    m.abs_rel += std::abs(p - g) / g;
    if (std::max(p / g, g / p) < 1.25) hits += 1.0;
    const double dl = std::log(p) - std::log(g);
    m.rmse_log += dl * dl;
  }
  const double n = static_cast<double>(pairs.size());
  m.abs_rel /= n;
  m.delta_125 = hits / n;
  m.rmse_log = std::sqrt(m.rmse_log / n);
  return m;
}

Similarity umeyama_points(const std::vector<Eigen::Vector3d>& src,
                          const std::vector<Eigen::Vector3d>& dst, bool with_scale) {
  if (src.size() != dst.size()) throw std::invalid_argument("umeyama: size mismatch");
  const size_t n = src.size();
  if (n < 3) throw std::invalid_argument("umeyama: need at least 3 matched positions");

  Eigen::Vector3d mean_src = Eigen::Vector3d::Zero(), mean_dst = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    mean_src += src[i];
    mean_dst += dst[i];
  }
  mean_src /= static_cast<double>(n);
  mean_dst /= static_cast<double>(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double var_src = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d ds = src[i] - mean_src;
    cov += (dst[i] - mean_dst) * ds.transpose();
    var_src += ds.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_src /= static_cast<double>(n);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300)) {
    throw std::invalid_argument("umeyama: degenerate (collinear) point configuration");
  }
  Eigen::Vector3d d = Eigen::Vector3d::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2) = -1.0;

  Similarity sim;
  sim.r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  sim.s = with_scale ? (sv.dot(d)) / var_src : 1.0;
  sim.t = mean_dst - sim.s * (sim.r * mean_src);
  return sim;
}

namespace {

// Nearest-time association of pred samples to gt samples; ties to the earlier
// gt sample.
std::vector<std::pair<size_t, size_t>> associate(const Trajectory& pred, const Trajectory& gt,
                                                 double tol) {
  std::vector<std::pair<size_t, size_t>> matches;
  for (size_t i = 0; i < pred.samples.size(); ++i) {
    const double t = pred.samples[i].t;
    double best = tol;
    size_t best_j = gt.samples.size();
    for (size_t j = 0; j < gt.samples.size(); ++j) {
      const double dt = std::abs(gt.samples[j].t - t);
      if (dt < best || (dt == best && best_j == gt.samples.size())) {
        best = dt;
        best_j = j;
      }
    }
    if (best_j < gt.samples.size()) matches.emplace_back(i, best_j);
  }
  return matches;
}

}  // namespace

Similarity umeyama_align(const Trajectory& pred, const Trajectory& gt, bool with_scale,
                         double time_tolerance) {
  const auto matches = associate(pred, gt, time_tolerance);
  std::vector<Eigen::Vector3d> src, dst;
  for (const auto& [i, j] : matches) {
    src.push_back(pred.samples[i].pose.translation());
    dst.push_back(gt.samples[j].pose.translation());
  }
  return umeyama_points(src, dst, with_scale);
}

double ate(const Trajectory& pred, const Trajectory& gt, double time_tolerance, bool with_scale) {
  const auto matches = associate(pred, gt, time_tolerance);
  if (matches.size() < 3) throw std::invalid_argument("ate: fewer than 3 matched samples");
  std::vector<Eigen::Vector3d> src, dst;
  for (const auto& [i, j] : matches) {
    src.push_back(pred.samples[i].pose.translation());
    dst.push_back(gt.samples[j].pose.translation());
  }
  const Similarity sim = umeyama_points(src, dst, with_scale);
  double acc = 0.0;
  for (size_t k = 0; k < src.size(); ++k) {
    acc += (sim * src[k] - dst[k]).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(src.size()));
}

std::pair<double, double> rpe(const Trajectory& pred, const Trajectory& gt, int delta,
                              double time_tolerance) {
  if (delta < 1) throw std::invalid_argument("rpe: delta must be >= 1");
  const auto matches = associate(pred, gt, time_tolerance);
  if (static_cast<int>(matches.size()) < delta + 1) {
    throw std::invalid_argument("rpe: fewer than delta+1 matched samples");
  }
  double trans_acc = 0.0, rot_acc = 0.0;
  int count = 0;
  for (size_t i = 0; i + static_cast<size_t>(delta) < matches.size(); ++i) {
    const auto& [pi, gi] = matches[i];
    const auto& [pj, gj] = matches[i + static_cast<size_t>(delta)];
    const Posed rel_gt = gt.samples[gi].pose.inverse() * gt.samples[gj].pose;
    const Posed rel_pred = pred.samples[pi].pose.inverse() * pred.samples[pj].pose;
    const Posed err = rel_gt.inverse() * rel_pred;
    trans_acc += err.translation().squaredNorm();
    const double cos_half = std::min(1.0, std::abs(err.rotation().w()));
    const double angle = 2.0 * std::acos(cos_half);
    rot_acc += angle * angle;
    ++count;
  }
  const double n = static_cast<double>(count);
  return {std::sqrt(trans_acc / n), std::sqrt(rot_acc / n) * 180.0 / M_PI};
}

}  // namespace evgo
