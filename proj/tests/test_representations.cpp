#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "evgraph/error.hpp"
#include "evgraph/representations.hpp"
#include "oracles.hpp"

using namespace evg;
using namespace evg::events;
using namespace evg::repr;

namespace {

EventStream stream_of(std::vector<Event> evts, int w, int h) {
  EventStream s;
  s.events = std::move(evts);
  s.sensor_width = static_cast<std::uint16_t>(w);
  s.sensor_height = static_cast<std::uint16_t>(h);
  std::sort(s.events.begin(), s.events.end(),
            [](const Event& a, const Event& b) { return a.t < b.t; });
  s.duration = s.max_t();
  return s;
}

}  // namespace

TEST_SUITE("representations") {

TEST_CASE("single event lands in the expected voxel cell") {
  const auto s = stream_of({{3, 4, 10000, 1}}, 32, 32);  // (x=3, y=4, t=10 ms)
  VoxelConfig cfg{5, 5, 25.0, 8, false};
  const auto g = voxelize(s, cfg);
  REQUIRE(g.num_vertices() == 1);
  CHECK(g.coords.at(0, 0) == 0.0);
  CHECK(g.coords.at(0, 1) == 0.0);
  CHECK(g.coords.at(0, 2) == 0.0);
  REQUIRE(g.semantics.cols == 25);
  for (int c = 0; c < 25; ++c) CHECK(g.semantics.at(0, c) == (c == 4 * 5 + 3 ? 1.0 : 0.0));
}

TEST_CASE("representation parameters for the reference configurations") {
  VoxelConfig ncal{10, 10, 25.0, 2048, true};
  CHECK(ncal.input_width() == 100);
  VoxelConfig dvs{5, 5, 40.0, 512, true};
  CHECK(dvs.input_width() == 25);
}

TEST_CASE("voxelize matches the exhaustive bucket oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 16 + static_cast<int>(rng.uniform_int(48));
    const int h = 16 + static_cast<int>(rng.uniform_int(48));
    const auto s = oracle::random_stream(rng, w, h, 200, 100000);
    VoxelConfig cfg{5, 5, 10.0, 16, false};
    const auto g = voxelize(s, cfg);
    const auto expected = oracle::voxelize_bruteforce(s, 5, 5, 10.0, 16);
    REQUIRE(g.num_vertices() == static_cast<int>(expected.size()));
    for (size_t i = 0; i < expected.size(); ++i) {
      CHECK(g.coords.at(i, 0) == expected[i].xb * 5.0);
      CHECK(g.coords.at(i, 1) == expected[i].yb * 5.0);
      CHECK(g.coords.at(i, 2) == expected[i].tb * 10.0);
      for (int c = 0; c < 25; ++c) CHECK(g.semantics.at(i, c) == expected[i].cells[c]);
    }
  }
}

TEST_CASE("voxelize keeps the fullest voxels") {
  Rng rng(55);
  const auto s = oracle::random_stream(rng, 40, 40, 400, 50000);
  VoxelConfig cfg{4, 4, 5.0, 10, false};
  const auto g = voxelize(s, cfg);
  const auto all = oracle::voxelize_bruteforce(s, 4, 4, 5.0, 1 << 30);
  CHECK(g.num_vertices() == std::min<int>(10, static_cast<int>(all.size())));
  // every kept voxel count >= every discarded voxel count
  const auto kept = oracle::voxelize_bruteforce(s, 4, 4, 5.0, 10);
  int min_kept = 1 << 30, max_discarded = 0;
  for (const auto& v : kept) min_kept = std::min(min_kept, v.count);
  for (const auto& v : all) {
    const bool in_kept = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
      return k.tb == v.tb && k.yb == v.yb && k.xb == v.xb;
    });
    if (!in_kept) max_discarded = std::max(max_discarded, v.count);
  }
  CHECK(min_kept >= max_discarded);
}

TEST_CASE("vertex semantics sum to the voxel's signed polarity sum") {
  Rng rng(66);
  const auto s = oracle::random_stream(rng, 30, 30, 300, 60000);
  VoxelConfig cfg{5, 5, 10.0, 1 << 30, false};
  const auto g = voxelize(s, cfg);
  const auto expected = oracle::voxelize_bruteforce(s, 5, 5, 10.0, 1 << 30);
  double graph_total = 0, stream_total = 0;
  for (int i = 0; i < g.num_vertices(); ++i) {
    const double row_sum = std::accumulate(g.semantics.row(i), g.semantics.row(i) + 25, 0.0);
    const double oracle_sum =
        std::accumulate(expected[i].cells.begin(), expected[i].cells.end(), 0.0);
    CHECK(row_sum == oracle_sum);
    graph_total += row_sum;
  }
  for (const auto& e : s.events) stream_total += e.p;
  CHECK(graph_total == stream_total);  // all voxels kept here
}

TEST_CASE("voxelize ignores permutations of equal-timestamp events") {
  std::vector<Event> evts;
  Rng rng(31);
  for (int i = 0; i < 60; ++i)
    evts.push_back({static_cast<std::uint16_t>(rng.uniform_int(20)),
                    static_cast<std::uint16_t>(rng.uniform_int(20)), 500,
                    rng.coin() ? std::int8_t(1) : std::int8_t(-1)});
  auto s1 = stream_of(evts, 20, 20);
  std::reverse(evts.begin(), evts.end());
  auto s2 = stream_of(evts, 20, 20);
  VoxelConfig cfg{4, 4, 2.0, 8, false};
  const auto g1 = voxelize(s1, cfg);
  const auto g2 = voxelize(s2, cfg);
  CHECK(g1.coords.v == g2.coords.v);
  CHECK(g1.semantics.v == g2.semantics.v);
}

TEST_CASE("voxelize rejects an empty stream") {
  EventStream s;
  s.sensor_width = s.sensor_height = 16;
  try {
    voxelize(s, VoxelConfig{});
    FAIL("expected an empty-input error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateInput);
  }
}

TEST_CASE("normalize_coordinates maps column spans onto [0,1]") {
  VoxelGraph g;
  g.coords = Mat<double>(3, 3);
  g.semantics = Mat<double>(3, 1);
  // column 0 spans [0, 180]; column 1 constant; column 2 spans [5, 10]
  g.coords.at(0, 0) = 0;   g.coords.at(1, 0) = 90;  g.coords.at(2, 0) = 180;
  g.coords.at(0, 1) = 7;   g.coords.at(1, 1) = 7;   g.coords.at(2, 1) = 7;
  g.coords.at(0, 2) = 10;  g.coords.at(1, 2) = 5;   g.coords.at(2, 2) = 7.5;
  g.semantics.at(0, 0) = 3;
  const auto n = normalize_coordinates(g);
  CHECK(n.coords.at(0, 0) == 0.0);
  CHECK(n.coords.at(1, 0) == 0.5);
  CHECK(n.coords.at(2, 0) == 1.0);
  CHECK(n.coords.at(0, 1) == 0.0);  // constant column maps to 0
  CHECK(n.coords.at(2, 1) == 0.0);
  CHECK(n.coords.at(0, 2) == 1.0);
  CHECK(n.coords.at(1, 2) == 0.0);
  CHECK(n.semantics.at(0, 0) == 3.0);  // semantics untouched
}

TEST_CASE("normalize_coordinates on a single vertex yields the origin") {
  VoxelGraph g;
  g.coords = Mat<double>(1, 3);
  g.coords.at(0, 0) = 25;
  g.coords.at(0, 1) = 5;
  g.coords.at(0, 2) = 75;
  g.semantics = Mat<double>(1, 1);
  const auto n = normalize_coordinates(g);
  for (int c = 0; c < 3; ++c) CHECK(n.coords.at(0, c) == 0.0);
}

TEST_CASE("normalize_coordinates preserves order and is idempotent") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(40));
    VoxelGraph g;
    g.coords = oracle::random_mat<double>(rng, n, 3, -50.0, 150.0);
    g.semantics = oracle::random_mat<double>(rng, n, 4);
    const auto m = normalize_coordinates(g);
    for (int c = 0; c < 3; ++c) {
      double lo = 1e300, hi = -1e300;
      for (int i = 0; i < n; ++i) {
        lo = std::min(lo, m.coords.at(i, c));
        hi = std::max(hi, m.coords.at(i, c));
      }
      CHECK(lo == 0.0);
      CHECK(hi == 1.0);
      // rank-order oracle
      std::vector<int> before(n), after(n);
      std::iota(before.begin(), before.end(), 0);
      after = before;
      std::stable_sort(before.begin(), before.end(),
                       [&](int a, int b) { return g.coords.at(a, c) < g.coords.at(b, c); });
      std::stable_sort(after.begin(), after.end(),
                       [&](int a, int b) { return m.coords.at(a, c) < m.coords.at(b, c); });
      CHECK(before == after);
    }
    const auto twice = normalize_coordinates(m);
    for (size_t i = 0; i < twice.coords.v.size(); ++i)
      CHECK(std::abs(twice.coords.v[i] - m.coords.v[i]) <= 1e-12);
  }
}

TEST_CASE("dense grid conserves signed mass") {
  const auto one = stream_of({{3, 3, 100, 1}}, 16, 16);
  const auto g1 = build_voxel_grid(one, 4, 16, 16);
  CHECK(g1.total() == 1.0);

  const auto cancel = stream_of({{5, 5, 100, 1}, {5, 5, 150, -1}}, 16, 16);
  const auto g2 = build_voxel_grid(cancel, 1, 16, 16);
  CHECK(g2.total() == 0.0);
  CHECK(g2.at(0, 5, 5) == 0.0);
}

TEST_CASE("dense grid matches the naive accumulation oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 16 + static_cast<int>(rng.uniform_int(30));
    const int h = 16 + static_cast<int>(rng.uniform_int(30));
    const auto s = oracle::random_stream(rng, w, h, 500, 80000);
    const int bins = 1 + static_cast<int>(rng.uniform_int(8));
    const int gh = 8 + static_cast<int>(rng.uniform_int(h - 7));
    const int gw = 8 + static_cast<int>(rng.uniform_int(w - 7));
    const auto g = build_voxel_grid(s, bins, gh, gw);

    std::vector<double> ref(static_cast<size_t>(bins) * gh * gw, 0.0);
    const std::uint64_t t0 = s.events.front().t, t1 = s.events.back().t;
    double total = 0;
    for (const auto& e : s.events) {
      const auto b = static_cast<size_t>((e.t - t0) * static_cast<std::uint64_t>(bins) /
                                         (t1 - t0 + 1));
      const size_t y = static_cast<size_t>(e.y) * gh / h;
      const size_t x = static_cast<size_t>(e.x) * gw / w;
      ref[(b * gh + y) * gw + x] += e.p;
      total += e.p;
    }
    CHECK(g.values == ref);
    CHECK(g.total() == total);
  }
}

TEST_CASE("dense grid rejects an empty stream and bad bin counts") {
  EventStream s;
  s.sensor_width = s.sensor_height = 8;
  CHECK_THROWS_AS(build_voxel_grid(s, 4, 8, 8), Error);
  const auto one = stream_of({{1, 1, 5, 1}}, 8, 8);
  CHECK_THROWS_AS(build_voxel_grid(one, 0, 8, 8), Error);
}

}  // TEST_SUITE
