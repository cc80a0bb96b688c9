#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <random>

#include "evgo/metrics.hpp"
#include "support/test_utils.hpp"

using namespace evgo;

namespace {

DepthMap constant_depth(int h, int w, double v) {
  DepthMap d;
  d.values = Eigen::ArrayXXd::Constant(h, w, v);
  return d;
}

Trajectory square_path() {
  Trajectory t;
  const double xs[] = {0, 1, 1, 0, 0};
  const double ys[] = {0, 0, 1, 1, 0};
  for (int i = 0; i < 5; ++i) {
    t.samples.push_back({static_cast<double>(i),
                         Posed(Eigen::Quaterniond::Identity(), {xs[i], ys[i], 0.0})});
  }
  return t;
}

Trajectory transform_traj(const Trajectory& in, double s, const Posed& g) {
  Trajectory out;
  for (const auto& sample : in.samples) {
    out.samples.push_back(
        {sample.t, Posed(g.rotation() * sample.pose.rotation(),
                         s * (g.rotation() * sample.pose.translation()) + g.translation())});
  }
  return out;
}

}  // namespace

TEST_CASE("depth_metrics") {
  const DepthMap gt = constant_depth(4, 4, 2.0);

  const DepthMetrics perfect = depth_metrics(gt, gt, false);
  CHECK(perfect.abs_rel == doctest::Approx(0.0));
  CHECK(perfect.delta_125 == doctest::Approx(1.0));
  CHECK(perfect.rmse_log == doctest::Approx(0.0));

  // pred = 1.25 gt without alignment: strict threshold excludes the boundary
  DepthMap pred = gt;
  pred.values *= 1.25;
  const DepthMetrics off = depth_metrics(pred, gt, false);
  CHECK(off.abs_rel == doctest::Approx(0.25));
  CHECK(off.delta_125 == doctest::Approx(0.0));
  CHECK(off.rmse_log == doctest::Approx(std::log(1.25)).epsilon(1e-12));

  // median-ratio alignment removes a global scale
  DepthMap doubled = gt;
  doubled.values *= 2.0;
  const DepthMetrics aligned = depth_metrics(doubled, gt, true);
  CHECK(aligned.abs_rel == doctest::Approx(0.0));
  CHECK(aligned.delta_125 == doctest::Approx(1.0));
  CHECK(aligned.rmse_log == doctest::Approx(0.0));

  // invalid pixels are excluded; none shared is an error
  DepthMap holes = gt;
  holes.values(0, 0) = 0.0;
  CHECK_NOTHROW(depth_metrics(holes, gt, false));
  DepthMap empty = gt;
  empty.values.setZero();
  CHECK_THROWS_AS(depth_metrics(empty, gt, false), std::invalid_argument);
  CHECK_THROWS_AS(depth_metrics(constant_depth(3, 3, 1.0), gt, false), std::invalid_argument);
}

TEST_CASE("umeyama_points recovers similarity transforms") {
  std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0.5}};

  const Similarity ident = umeyama_points(pts, pts, true);
  CHECK(ident.s == doctest::Approx(1.0));
  CHECK((ident.r - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(ident.t.norm() < 1e-12);

  // doubled source recovers s = 0.5
  std::vector<Eigen::Vector3d> doubled;
  for (const auto& p : pts) doubled.push_back(2.0 * p);
  CHECK(umeyama_points(doubled, pts, true).s == doctest::Approx(0.5));

  // random rigid transform on 10 points, zero residual
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  std::vector<Eigen::Vector3d> src, dst;
  const Posed g = testutil::random_pose(rng);
  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector3d p(uni(rng), uni(rng), uni(rng));
    src.push_back(p);
    dst.push_back(g * p);
  }
  const Similarity sim = umeyama_points(src, dst, true);
  CHECK(sim.s == doctest::Approx(1.0).epsilon(1e-9));
  for (size_t i = 0; i < src.size(); ++i) {
    CHECK((sim * src[i] - dst[i]).norm() < 1e-9);
  }

  // degenerate configurations are rejected
  std::vector<Eigen::Vector3d> line = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  CHECK_THROWS_AS(umeyama_points(line, line, true), std::invalid_argument);
  std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(umeyama_points(two, two, true), std::invalid_argument);
}

TEST_CASE("ate") {
  const Trajectory gt = square_path();
  CHECK(ate(gt, gt) == doctest::Approx(0.0));

  // one displaced vertex against an independently implemented oracle
  Trajectory pred = gt;
  pred.samples[2].pose =
      Posed(Eigen::Quaterniond::Identity(), pred.samples[2].pose.translation() +
                                                Eigen::Vector3d(0.2, -0.1, 0.05));
  {
    Eigen::Matrix3Xd src(3, 5), dst(3, 5);
    for (int i = 0; i < 5; ++i) {
      src.col(i) = pred.samples[static_cast<size_t>(i)].pose.translation();
      dst.col(i) = gt.samples[static_cast<size_t>(i)].pose.translation();
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) {
      const Eigen::Vector3d mapped = t.topLeftCorner<3, 3>() * src.col(i) + t.topRightCorner<3, 1>();
      acc += (mapped - dst.col(i)).squaredNorm();
    }
    const double oracle = std::sqrt(acc / 5.0);
    CHECK(ate(pred, gt) == doctest::Approx(oracle).epsilon(1e-9));
  }

  // gauge invariance: a similarity-transformed prediction scores zero
  std::mt19937_64 rng(9);
  const Trajectory moved = transform_traj(gt, 1.7, testutil::random_pose(rng));
  CHECK(ate(moved, gt) < 1e-9);

  Trajectory two;
  two.samples = {gt.samples[0], gt.samples[1]};
  CHECK_THROWS_AS(ate(two, gt), std::invalid_argument);
}

TEST_CASE("rpe") {
  const Trajectory gt = square_path();
  const auto [t0, r0] = rpe(gt, gt, 1);
  CHECK(t0 == doctest::Approx(0.0));
  CHECK(r0 == doctest::Approx(0.0));

  // constant left-composed pose leaves relative errors untouched
  std::mt19937_64 rng(3);
  const Posed g = testutil::random_pose(rng);
  const Trajectory moved = transform_traj(gt, 1.0, g);
  const auto [t1, r1] = rpe(moved, gt, 1);
  CHECK(t1 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r1 == doctest::Approx(0.0).epsilon(1e-9));

  // 3-pose toy, middle pose rotated by 5 degrees: both steps err by 5 degrees
  Trajectory gt3;
  for (int i = 0; i < 3; ++i) gt3.samples.push_back({static_cast<double>(i), Posed()});
  Trajectory pred3 = gt3;
  const double angle = 5.0 * M_PI / 180.0;
  pred3.samples[1].pose =
      Posed(Eigen::Quaterniond(Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ())),
            Eigen::Vector3d::Zero());
  const auto [t2, r2] = rpe(pred3, gt3, 1);
  CHECK(t2 == doctest::Approx(0.0));
  CHECK(r2 == doctest::Approx(5.0).epsilon(1e-9));

  CHECK_THROWS_AS(rpe(gt, gt, 5), std::invalid_argument);
  CHECK_THROWS_AS(rpe(gt, gt, 0), std::invalid_argument);
}

TEST_CASE("tum round trip and pose sampling") {
  Trajectory traj;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5; ++i) {
    traj.samples.push_back({0.1 * i, testutil::random_pose(rng)});
  }
  const std::string path = (std::filesystem::temp_directory_path() / "evgo_traj.tum").string();
  write_tum(path, traj);
  const Trajectory back = read_tum(path);
  REQUIRE(back.samples.size() == traj.samples.size());
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    CHECK(back.samples[i].t == doctest::Approx(traj.samples[i].t));
    CHECK((back.samples[i].pose.translation() - traj.samples[i].pose.translation()).norm() <
          1e-8);
    CHECK(back.samples[i].pose.rotation().angularDistance(traj.samples[i].pose.rotation()) <
          1e-8);
  }

  CHECK_NOTHROW(sample_pose(traj, 0.25));
  CHECK_THROWS_AS(sample_pose(traj, -0.1), std::out_of_range);
  CHECK_THROWS_AS(sample_pose(traj, 0.55), std::out_of_range);

  const std::string bad = (std::filesystem::temp_directory_path() / "evgo_traj_bad.tum").string();
  {
    std::ofstream out(bad);
    out << "0.0 0 0 0 0 0 0 1\nnot a pose line\n";
  }
  CHECK_THROWS_WITH_AS(read_tum(bad), doctest::Contains("line 2"), ParseError);
}
