#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "evgo/events.hpp"
#include "support/test_utils.hpp"

using namespace evgo;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

EventStream random_stream(std::mt19937_64& rng, int width, int height, int count,
                          int64_t t_max) {
  std::uniform_int_distribution<int> ux(0, width - 1), uy(0, height - 1), up(0, 1);
  std::uniform_int_distribution<int64_t> ut(0, t_max);
  EventStream s;
  s.width = width;
  s.height = height;
  for (int i = 0; i < count; ++i) {
    s.events.push_back({ut(rng), ux(rng), uy(rng), up(rng) == 0 ? -1 : 1});
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return s;
}

}  // namespace

TEST_CASE("parse_events sorts and maps polarity") {
  const auto path = write_temp("evgo_events_basic.csv", "10,1,2,1\n5,0,0,-1\n");
  const EventStream s = parse_events(path, 100, 100);
  REQUIRE(s.events.size() == 2);
  CHECK(s.events[0].t == 5);
  CHECK(s.events[1].t == 10);

  // {0,1} convention: zeros map to -1
  const auto path01 = write_temp("evgo_events_01.csv", "1,0,0,0\n2,1,1,1\n3,2,2,0\n4,3,3,1\n");
  const EventStream s01 = parse_events(path01, 10, 10, PolarityConvention::kZeroOne);
  int sum = 0;
  for (const auto& e : s01.events) sum += e.p;
  CHECK(sum == 0);
  CHECK(s01.events[0].p == -1);
  CHECK(s01.events[1].p == 1);
}

TEST_CASE("parse_events rejects bad lines with line numbers") {
  const auto oob = write_temp("evgo_events_oob.csv", "10,999,2,1\n");
  CHECK_THROWS_WITH_AS(parse_events(oob, 100, 100), doctest::Contains("line 1"), ParseError);

  const auto bad = write_temp("evgo_events_bad.csv", "10,1,2,1\nnot-an-event\n");
  CHECK_THROWS_WITH_AS(parse_events(bad, 100, 100), doctest::Contains("line 2"), ParseError);

  const auto badp = write_temp("evgo_events_badp.csv", "10,1,2,7\n");
  CHECK_THROWS_AS(parse_events(badp, 100, 100), ParseError);

  // strict conventions
  const auto signedp = write_temp("evgo_events_signed.csv", "10,1,2,0\n");
  CHECK_THROWS_AS(parse_events(signedp, 100, 100, PolarityConvention::kSigned), ParseError);

  const auto empty = write_temp("evgo_events_empty.csv", "");
  CHECK(parse_events(empty, 100, 100).events.empty());
}

TEST_CASE("parse after serialize is the identity on valid streams") {
  std::mt19937_64 rng(5);
  const EventStream s = random_stream(rng, 32, 24, 500, 100000);
  const auto path = (std::filesystem::temp_directory_path() / "evgo_events_rt.csv").string();
  serialize_events(s, path);
  const EventStream back = parse_events(path, 32, 24);
  REQUIRE(back.events.size() == s.events.size());
  for (size_t i = 0; i < s.events.size(); ++i) {
    CHECK(back.events[i].t == s.events[i].t);
    CHECK(back.events[i].x == s.events[i].x);
    CHECK(back.events[i].y == s.events[i].y);
    CHECK(back.events[i].p == s.events[i].p);
  }
}

TEST_CASE("voxelize splits polarity between adjacent bins") {
  EventStream s;
  s.width = 4;
  s.height = 4;

  CHECK(voxelize(s, 0, 100, 3).total() == doctest::Approx(0.0));

  // single event at the exact center of a 2-bin interval
  s.events.push_back({50, 1, 2, 1});
  const VoxelGrid half = voxelize(s, 0, 100, 2);
  CHECK(half.bins[0](2, 1) == doctest::Approx(0.5));
  CHECK(half.bins[1](2, 1) == doctest::Approx(0.5));

  CHECK_THROWS_AS(voxelize(s, 0, 100, 0), std::invalid_argument);
  CHECK_THROWS_AS(voxelize(s, 100, 100, 2), std::invalid_argument);
}

TEST_CASE("voxel bin sum conserves the polarity sum") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const EventStream s = random_stream(rng, 16, 16, 200, 1000);
    for (int bins : {1, 2, 3, 5, 8}) {
      double expect = 0.0;
      for (const auto& e : s.events) {
        if (e.t >= 0 && e.t < 1000) expect += e.p;
      }
      CHECK(voxelize(s, 0, 1000, bins).total() == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  // events outside [t0, t1) are ignored
  EventStream s;
  s.width = 4;
  s.height = 4;
  s.events = {{-5, 0, 0, 1}, {0, 1, 1, 1}, {99, 2, 2, 1}, {100, 3, 3, 1}};
  CHECK(voxelize(s, 0, 100, 4).total() == doctest::Approx(2.0));
}

TEST_CASE("accumulate_patch matches the brute-force tally") {
  EventStream s;
  s.width = 32;
  s.height = 32;

  CHECK(accumulate_patch(s, 10, 10, 2, 0, 10).abs().maxCoeff() == doctest::Approx(0.0));

  // cancellation at one pixel
  s.events = {{1, 10, 10, 1}, {2, 10, 10, -1}};
  CHECK(accumulate_patch(s, 10, 10, 2, 0, 10).abs().maxCoeff() == doctest::Approx(0.0));

  // 7 scattered events against exhaustive enumeration
  s.events = {{1, 9, 9, 1},  {2, 9, 9, 1},   {3, 10, 11, -1}, {4, 12, 8, 1},
              {5, 8, 12, -1}, {6, 11, 11, 1}, {7, 10, 10, -1}};
  const auto patch = accumulate_patch(s, 10, 10, 2, 0, 10);
  const auto oracle = testutil::brute_force_accumulate(s.events, 10, 10, 2, 0, 10);
  CHECK((patch - oracle).abs().maxCoeff() == doctest::Approx(0.0));

  CHECK_THROWS_AS(accumulate_patch(s, 0, 0, 2, 0, 10), std::invalid_argument);
  CHECK_THROWS_AS(accumulate_patch(s, 10, 10, 2, 10, 10), std::invalid_argument);
}

TEST_CASE("accumulate_patch is additive over disjoint intervals") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const EventStream s = random_stream(rng, 24, 24, 300, 900);
    const auto full = accumulate_patch(s, 12, 12, 4, 0, 900);
    const auto first = accumulate_patch(s, 12, 12, 4, 0, 400);
    const auto second = accumulate_patch(s, 12, 12, 4, 400, 900);
    CHECK((full - first - second).abs().maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("accumulate_patch is translation equivariant") {
  std::mt19937_64 rng(31);
  const EventStream s = random_stream(rng, 20, 20, 150, 500);
  EventStream shifted;
  shifted.width = 26;
  shifted.height = 26;
  for (const auto& e : s.events) shifted.events.push_back({e.t, e.x + 3, e.y + 5, e.p});
  const auto a = accumulate_patch(s, 10, 10, 3, 0, 500);
  const auto b = accumulate_patch(shifted, 13, 15, 3, 0, 500);
  CHECK((a - b).abs().maxCoeff() == doctest::Approx(0.0));
}
