#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "evgo/sync.hpp"
#include "evgo/synth.hpp"
#include "support/scenes.hpp"

using namespace evgo;

namespace {

// rig with a fronto-parallel plane and xy+rotation motion; depth stays
// constant per view, so warped and re-rendered depths can agree exactly
struct Rig {
  SceneSpec spec;
  SyncStreams streams;
};

Rig make_rig(int n_images, int64_t image_dt_us, const std::vector<int64_t>& depth_times,
             double step_trans = 4e-3, double step_rot = 2e-3) {
  Rig rig;
  rig.spec = testutil::make_scene(2, 32, 0.0, 0.0, 8);
  rig.spec.trajectory.clear();
  const int64_t span = std::max<int64_t>(n_images * image_dt_us + 100000,
                                         depth_times.empty() ? 0 : depth_times.back() + 100000);
  for (int64_t t = 0; t <= span; t += 10000) {
    TrajectorySample s;
    s.t_us = t;
    const double sec = t * 1e-5;
    const Eigen::Quaterniond q(Eigen::AngleAxisd(step_rot * sec, Eigen::Vector3d::UnitZ()));
    s.pose = Posed(q, Eigen::Vector3d(step_trans * sec, 0.5 * step_trans * std::sin(sec), 0.0));
    rig.spec.trajectory.push_back(s);
  }

  rig.streams.intrinsics = rig.spec.intrinsics;
  for (int i = 0; i < n_images; ++i) {
    const int64_t t = 20000 + i * image_dt_us;
    rig.streams.image_times.push_back(t);
    rig.streams.images.push_back(render_scene(rig.spec, t).image);
  }
  for (const int64_t t : depth_times) {
    rig.streams.depth_times.push_back(t);
    rig.streams.depths.push_back(render_scene(rig.spec, t).depth);
  }
  for (const auto& s : rig.spec.trajectory) {
    rig.streams.poses.samples.push_back({s.t_us * 1e-6, s.pose});
  }
  rig.streams.events.width = rig.spec.width;
  rig.streams.events.height = rig.spec.height;
  return rig;
}

}  // namespace

TEST_CASE("match_timestamps nearest with earlier ties") {
  CHECK(match_timestamps({10}, {8, 13}) ==
        std::vector<std::pair<int, int>>{{0, 0}});
  CHECK(match_timestamps({10}, {8, 12}) ==
        std::vector<std::pair<int, int>>{{0, 0}});  // exact tie: earlier wins
  CHECK_THROWS_AS(match_timestamps({10}, {}), std::invalid_argument);

  // brute-force oracle on random times
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int64_t> ut(0, 100000);
  std::vector<int64_t> imgs;
  for (int i = 0; i < 40; ++i) imgs.push_back(ut(rng));
  std::sort(imgs.begin(), imgs.end());
  std::vector<int64_t> depths;
  for (int i = 0; i < 100; ++i) depths.push_back(ut(rng));
  std::sort(depths.begin(), depths.end());
  const auto matches = match_timestamps(depths, imgs);
  REQUIRE(matches.size() == depths.size());
  for (const auto& [d, j] : matches) {
    int64_t best = std::numeric_limits<int64_t>::max();
    int best_j = -1;
    for (size_t k = 0; k < imgs.size(); ++k) {
      const int64_t dt = std::llabs(imgs[k] - depths[static_cast<size_t>(d)]);
      if (dt < best) {
        best = dt;
        best_j = static_cast<int>(k);
      }
    }
    CHECK(std::llabs(imgs[static_cast<size_t>(j)] - depths[static_cast<size_t>(d)]) == best);
    if (j != best_j) {
      // equal distance: the earlier image index must have been chosen
      CHECK(j < best_j);
    }
  }
}

TEST_CASE("align_day is the identity on a shared-timestamp static rig") {
  Rig rig = make_rig(3, 50000, {20000, 70000, 120000}, 0.0, 0.0);
  SyncOptions options;
  for (const WarpMode mode : {WarpMode::kAsPrinted, WarpMode::kStandard}) {
    options.warp_mode = mode;
    SyncReport report;
    const auto tuples = align_day(rig.streams, options, &report);
    REQUIRE(tuples.size() == 3);
    CHECK(report.skipped == 0);
    for (size_t i = 0; i < tuples.size(); ++i) {
      const DepthMap& src = rig.streams.depths[i];
      int compared = 0;
      for (int r = 0; r < src.height(); ++r) {
        for (int c = 0; c < src.width(); ++c) {
          if (!tuples[i].depth.valid(r, c) || !src.valid(r, c)) continue;
          CHECK(std::abs(tuples[i].depth.values(r, c) - src.values(r, c)) < 1e-9);
          ++compared;
        }
      }
      CHECK(compared > 500);
    }
  }
}

TEST_CASE("align_day standard warp matches re-rendered depth on a moving rig") {
  // depth sampled between image timestamps; motion is xy translation plus
  // z rotation over a fronto-parallel plane so true depth is constant
  Rig rig = make_rig(4, 50000, {35000, 85000, 135000, 185000});
  SyncOptions options;
  options.warp_mode = WarpMode::kStandard;
  SyncReport report;
  const auto tuples = align_day(rig.streams, options, &report);
  REQUIRE(tuples.size() == 4);
  for (const auto& tuple : tuples) {
    const DepthMap truth = render_scene(rig.spec, tuple.image_t_us).depth;
    int compared = 0;
    double worst = 0.0;
    for (int r = 0; r < truth.height(); ++r) {
      for (int c = 0; c < truth.width(); ++c) {
        if (!tuple.depth.valid(r, c) || !truth.valid(r, c)) continue;
        worst = std::max(worst, std::abs(tuple.depth.values(r, c) - truth.values(r, c)));
        ++compared;
      }
    }
    CHECK(compared > 400);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("align_day as-printed warp passes source depth values through") {
  Rig rig = make_rig(2, 50000, {35000, 85000});
  SyncOptions options;
  options.warp_mode = WarpMode::kAsPrinted;
  const auto tuples = align_day(rig.streams, options);
  REQUIRE(tuples.size() == 2);
  for (size_t i = 0; i < tuples.size(); ++i) {
    const DepthMap& src = rig.streams.depths[i];
    for (int r = 0; r < src.height(); ++r) {
      for (int c = 0; c < src.width(); ++c) {
        if (!tuples[i].depth.valid(r, c)) continue;
        CHECK(std::abs(tuples[i].depth.values(r, c) - src.values(r, c)) < 1e-9);
      }
    }
  }
}

TEST_CASE("align_day skips samples without pose coverage") {
  Rig rig = make_rig(2, 50000, {35000, 85000});
  rig.streams.depth_times.insert(rig.streams.depth_times.begin(), -500000);
  rig.streams.depths.insert(rig.streams.depths.begin(), rig.streams.depths[0]);
  // nearest image for the early depth sample is image 0, whose own pose is
  // covered; the depth pose is not
  SyncReport report;
  const auto tuples = align_day(rig.streams, SyncOptions{}, &report);
  CHECK(tuples.size() == 2);
  CHECK(report.skipped >= 1);
  CHECK(!report.warnings.empty());
}

TEST_CASE("tuple event slices are disjoint and ordered") {
  Rig rig = make_rig(3, 50000, {20000, 70000, 120000});
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int64_t> ut(0, 130000);
  std::uniform_int_distribution<int> up(0, 1);
  for (int i = 0; i < 500; ++i) {
    rig.streams.events.events.push_back(
        {ut(rng), i % rig.spec.width, (i / 3) % rig.spec.height, up(rng) == 0 ? -1 : 1});
  }
  std::stable_sort(rig.streams.events.events.begin(), rig.streams.events.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });

  const auto tuples = align_day(rig.streams, SyncOptions{});
  REQUIRE(tuples.size() == 3);
  int64_t prev_t = std::numeric_limits<int64_t>::min();
  size_t covered = 0;
  for (const auto& tuple : tuples) {
    CHECK(tuple.image_t_us > prev_t);
    for (const auto& e : tuple.events.events) {
      CHECK(e.t >= prev_t);
      CHECK(e.t < tuple.image_t_us);
    }
    covered += tuple.events.events.size();
    prev_t = tuple.image_t_us;
  }
  size_t expect = 0;
  for (const auto& e : rig.streams.events.events) {
    if (e.t < tuples.back().image_t_us) ++expect;
  }
  CHECK(covered == expect);
}

TEST_CASE("align_night selects the temporally closest depth sample") {
  // two depth samples per frame at 3 ms and 8 ms offsets
  Rig rig = make_rig(2, 50000, {17000, 28000, 67000, 78000});
  SyncOptions options;
  options.warp_mode = WarpMode::kStandard;
  SyncReport report;
  const auto tuples = align_night(rig.streams, options, &report);
  REQUIRE(tuples.size() == 2);
  CHECK(tuples[0].depth_index == 0);  // |20000-17000| = 3 ms beats 8 ms
  CHECK(tuples[1].depth_index == 2);

  // warped depth matches the re-rendered ground truth
  for (const auto& tuple : tuples) {
    const DepthMap truth = render_scene(rig.spec, tuple.image_t_us).depth;
    double worst = 0.0;
    int compared = 0;
    for (int r = 0; r < truth.height(); ++r) {
      for (int c = 0; c < truth.width(); ++c) {
        if (!tuple.depth.valid(r, c) || !truth.valid(r, c)) continue;
        worst = std::max(worst, std::abs(tuple.depth.values(r, c) - truth.values(r, c)));
        ++compared;
      }
    }
    CHECK(compared > 400);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("align_night with one depth per frame matches align_day") {
  Rig rig = make_rig(3, 50000, {20000, 70000, 120000});
  SyncOptions options;
  options.warp_mode = WarpMode::kStandard;
  const auto day = align_day(rig.streams, options);
  const auto night = align_night(rig.streams, options);
  REQUIRE(day.size() == night.size());
  for (size_t i = 0; i < day.size(); ++i) {
    CHECK(day[i].image_t_us == night[i].image_t_us);
    CHECK(day[i].depth_index == night[i].depth_index);
    CHECK((day[i].depth.values - night[i].depth.values).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("align_night skips frames without depth candidates") {
  Rig rig = make_rig(3, 50000, {20000});  // only the first frame has depth
  SyncReport report;
  const auto tuples = align_night(rig.streams, SyncOptions{}, &report);
  CHECK(tuples.size() == 1);
  CHECK(report.skipped == 2);
}

TEST_CASE("hole filling applies when image validity masks are present") {
  Rig rig = make_rig(1, 50000, {20000});
  Mask valid = Mask::Constant(rig.spec.height, rig.spec.width, true);
  valid(5, 5) = false;
  rig.streams.image_valid.push_back(valid);
  const double original = rig.streams.images[0].channels[0](5, 5);
  rig.streams.images[0].channels[0](5, 5) = 0.0;

  SyncOptions options;
  options.fill_radius = 3;
  SyncReport report;
  const auto tuples = align_day(rig.streams, options, &report);
  REQUIRE(tuples.size() == 1);
  CHECK(report.unfillable_pixels == 0);
  // the filled value is a convex combination of its valid neighbors
  const double filled = tuples[0].image.channels[0](5, 5);
  CHECK(filled != 0.0);
  double lo = 1e9, hi = -1e9;
  for (int dr = -3; dr <= 3; ++dr) {
    for (int dc = -3; dc <= 3; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const double v = rig.streams.images[0].channels[0](5 + dr, 5 + dc);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  CHECK(filled >= lo - 1e-12);
  CHECK(filled <= hi + 1e-12);
  CHECK(std::abs(filled - original) < 0.3);
}
