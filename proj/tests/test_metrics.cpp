#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "trajdiff/data/synth_city.hpp"
#include "trajdiff/metrics/metrics.hpp"

using namespace trajdiff;
using namespace trajdiff::metrics;

namespace {

constexpr double kLn2 = std::numbers::ln2;
// Natural-log JSD of (1/2, 1/2) vs (1, 0) and of (2/3, 1/3) vs (1/3, 2/3),
// evaluated at 30 digits with mpmath.
constexpr double kHalfVsPoint = 0.215761554338835695579414254495;
constexpr double kThirds = 0.0566330122651324909668082988411;

using Path = std::vector<std::array<double, 2>>;

/// Toy dataset on the box [0, w] x [0, 1] with 0.5-degree metric cells.
data::Dataset toy(const std::vector<Path>& paths, double w = 1.0, std::vector<int> buckets = {}) {
  data::Dataset ds;
  ds.meta.box = {0.0, w, 0.0, 1.0};
  ds.meta.points = static_cast<std::uint32_t>(paths.empty() ? 2 : paths.front().size());
  ds.meta.metric_cell = 0.5;
  ds.meta.cond_grid = grid_with_cells(0.0, w, 0.0, 1.0, 2);
  ds.trajectories = TrajBatch<double>(paths.size(), ds.meta.points);
  for (std::size_t b = 0; b < paths.size(); ++b) {
    for (std::size_t i = 0; i < ds.meta.points; ++i) {
      const auto uv = data::normalize(paths[b][i][0], paths[b][i][1], ds.meta.box);
      ds.trajectories.at(b, i, 0) = uv[0];
      ds.trajectories.at(b, i, 1) = uv[1];
    }
    model::ConditionVector c;
    c.time_bucket = buckets.empty() ? 0 : buckets[b];
    ds.conditions.push_back(c);
    ds.depart_times.push_back(0.0);
    ds.durations.push_back(0.0);
  }
  return ds;
}

std::vector<double> random_dist(std::mt19937_64& rng, std::size_t n, double zero_prob = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) s += (v = u(rng) < zero_prob ? 0.0 : u(rng));
  if (s == 0.0) p[0] = s = 1.0;
  for (auto& v : p) v /= s;
  return p;
}

data::Dataset city(std::uint64_t seed, std::size_t trips = 150) {
  data::SynthCityConfig sc;
  sc.trips = trips;
  sc.seed = seed;
  return data::preprocess(data::synth_city(sc).trips, data::PreprocessConfig{});
}

}  // namespace

TEST(CellOf, Examples) {
  const GridSpec g{104.0, 30.0, kDefaultCellDeg, 10, 10};
  EXPECT_EQ(cell_of(104.0, 30.0, g), 0);
  EXPECT_EQ(cell_of(104.0 + 0.00045, 30.0, g), 1);
  EXPECT_EQ(cell_of(104.0 + 0.0001, 30.0 + 0.0005, g), 10);
  ClampCounter c;
  EXPECT_EQ(cell_of(104.0 + 10 * kDefaultCellDeg, 30.0 + 10 * kDefaultCellDeg, g, &c), 99);
  EXPECT_EQ(c.clamped, 0u);
  EXPECT_EQ(cell_of(103.0, 31.0, g, &c), 90);
  EXPECT_EQ(cell_of(std::nan(""), 30.0, g, &c), 0);
  EXPECT_EQ(c.clamped, 2u);
}

TEST(CellOf, GridConstructors) {
  const auto g = grid_covering(0.0, 1.0, 0.0, 0.3, 0.25);
  EXPECT_EQ(g.nx, 4);
  EXPECT_EQ(g.ny, 2);
  const auto c = grid_with_cells(0.0, 2.0, 0.0, 1.0, 8);
  EXPECT_DOUBLE_EQ(c.cell, 0.25);
  EXPECT_EQ(c.nx, 8);
  EXPECT_EQ(c.ny, 4);
  EXPECT_THROW(grid_with_cells(0, 0, 0, 0, 8), ConfigError);
  EXPECT_THROW((GridSpec{0, 0, 0.0, 1, 1}.validate()), ConfigError);
}

TEST(Jsd, HandValues) {
  const std::vector<double> half{0.5, 0.5}, point{1.0, 0.0}, other{0.0, 1.0};
  EXPECT_EQ(jsd(half, half), 0.0);
  EXPECT_NEAR(jsd(point, other), kLn2, 1e-15);
  EXPECT_NEAR(jsd(half, point), kHalfVsPoint, 1e-9);
  EXPECT_NEAR(jsd(std::vector<double>{2.0 / 3, 1.0 / 3}, std::vector<double>{1.0 / 3, 2.0 / 3}), kThirds, 1e-9);
}

TEST(Jsd, Axioms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + trial % 40;
    const auto p = random_dist(rng, n);
    const auto q = random_dist(rng, n);
    const double a = jsd(p, q);
    EXPECT_NEAR(a, jsd(q, p), 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, kLn2);
    EXPECT_LE(jsd(p, p), 1e-15);
  }
}

TEST(Jsd, Errors) {
  EXPECT_THROW(jsd(std::vector<double>{0.5, 0.4}, std::vector<double>{0.5, 0.5}), MetricError);
  EXPECT_THROW(jsd(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), MetricError);
  EXPECT_THROW(jsd(std::vector<double>{1.5, -0.5}, std::vector<double>{0.5, 0.5}), MetricError);
  EXPECT_THROW(CellHistogram(3).normalized(), MetricError);
}

TEST(Histogram, ShardedMergeMatchesWhole) {
  const auto ds = city(1, 60);
  const auto grid = ds.meta.metric_grid();
  const auto whole = cell_histogram(ds, grid);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < ds.size(); ++i) (i % 3 == 0 ? a : b).push_back(i);
  auto h = cell_histogram(data::subset(ds, a), grid);
  h.merge(cell_histogram(data::subset(ds, b), grid));
  EXPECT_EQ(h.counts, whole.counts);
  EXPECT_EQ(h.total, whole.total);
  EXPECT_EQ(whole.total, static_cast<double>(ds.size() * ds.meta.points));
}

TEST(Density, ToyValues) {
  const auto real = toy({{{0.25, 0.25}, {0.75, 0.25}}});
  const auto gen = toy({{{0.25, 0.25}, {0.25, 0.25}}});
  const auto grid = real.meta.metric_grid();
  ASSERT_EQ(grid.cells(), 4u);
  EXPECT_EQ(density_error(real, real, grid), 0.0);
  EXPECT_NEAR(density_error(real, gen, grid), kHalfVsPoint, 1e-9);
  const auto elsewhere = toy({{{0.75, 0.75}, {0.75, 0.75}}});
  EXPECT_NEAR(density_error(real, elsewhere, grid), kLn2, 1e-15);
  EXPECT_THROW(density_error(real, toy({}), grid), MetricError);
}

TEST(Density, InvariantUnderReordering) {
  const auto ds = city(2, 80);
  const auto other = city(3, 80);
  const auto grid = ds.meta.metric_grid();
  const double base = density_error(ds, other, grid);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto shuffled = data::subset(ds, idx);
  for (std::size_t b = 0; b < shuffled.size(); ++b) {
    auto row = shuffled.trajectories.row(b);
    std::vector<std::array<double, 2>> pts(ds.meta.points);
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {row[2 * i], row[2 * i + 1]};
    std::shuffle(pts.begin(), pts.end(), rng);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      row[2 * i] = pts[i][0];
      row[2 * i + 1] = pts[i][1];
    }
  }
  EXPECT_NEAR(density_error(shuffled, other, grid), base, 1e-12);
}

TEST(Trip, ToyValuesAndMarginalDefinition) {
  const auto real = toy({{{0.25, 0.25}, {0.75, 0.25}}, {{0.75, 0.75}, {0.25, 0.75}}});
  const auto grid = real.meta.metric_grid();
  EXPECT_EQ(trip_error(real, real, grid), 0.0);
  const auto disjoint_ends = toy({{{0.25, 0.25}, {0.25, 0.25}}, {{0.75, 0.75}, {0.75, 0.75}}});
  EXPECT_NEAR(trip_error(real, disjoint_ends, grid), kLn2 / 2, 1e-15);
  // Same start and end marginals, pairing swapped.
  const auto swapped = toy({{{0.25, 0.25}, {0.25, 0.75}}, {{0.75, 0.75}, {0.75, 0.25}}});
  EXPECT_EQ(trip_error(real, swapped, grid), 0.0);
  EXPECT_NEAR(trip_error(real, swapped, grid, true), kLn2, 1e-15);
  EXPECT_EQ(trip_error(real, real, grid, true), 0.0);
}

TEST(Length, ToyValues) {
  const std::vector<double> a{1, 1, 3}, b{1, 3, 3};
  EXPECT_NEAR(binned_jsd(a, b, 2), kThirds, 1e-9);
  const std::vector<double> still{0, 0}, moving{5, 5};
  EXPECT_NEAR(binned_jsd(still, moving, 2), kLn2, 1e-15);
  EXPECT_EQ(binned_jsd(still, still, 50), 0.0);
  EXPECT_THROW(binned_jsd(a, b, 0), MetricError);

  auto seg = [](double len) { return Path{{0.25, 0.25}, {0.25 + len, 0.25}}; };
  const auto real = toy({seg(1), seg(1), seg(3)}, 4.0);
  const auto gen = toy({seg(1), seg(3), seg(3)}, 4.0);
  EXPECT_NEAR(length_error(real, gen, 2), kThirds, 1e-9);
  EXPECT_EQ(length_error(real, real, 50), 0.0);
}

TEST(Pattern, F1Arithmetic) {
  CellHistogram real(8), gen(8);
  for (std::size_t k = 0; k < 4; ++k) real.add(k, 10.0 - k);
  for (std::size_t k = 2; k < 6; ++k) gen.add(k, 10.0 - k);
  EXPECT_DOUBLE_EQ(pattern_score(real, real, 4).score, 1.0);
  EXPECT_DOUBLE_EQ(pattern_score(real, gen, 4).score, 0.5);
  CellHistogram far(8);
  for (std::size_t k = 4; k < 8; ++k) far.add(k);
  EXPECT_EQ(pattern_score(real, far, 4).score, 0.0);
  EXPECT_FALSE(pattern_score(real, gen, 4).truncated);
  const auto wide = pattern_score(real, gen, 6);
  EXPECT_TRUE(wide.truncated);
  EXPECT_DOUBLE_EQ(wide.score, 0.5);
  EXPECT_THROW(pattern_score(real, gen, 0), MetricError);
}

TEST(Pattern, TiesAndMonotonicity) {
  CellHistogram h(6);
  for (std::size_t k : {5u, 1u, 3u, 0u}) h.add(k, 2.0);
  EXPECT_EQ(top_cells(h, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(top_cells(h, 10), (std::vector<std::size_t>{0, 1, 3, 5}));

  CellHistogram real(40);
  for (std::size_t k = 0; k < 10; ++k) real.add(k, 100.0 - k);
  double last = 1.0;
  for (std::size_t shift = 0; shift <= 10; ++shift) {
    CellHistogram gen(40);
    for (std::size_t k = shift; k < shift + 10; ++k) gen.add(k, 100.0 - k);
    const double s = pattern_score(real, gen, 10).score;
    EXPECT_LE(s, last);
    EXPECT_GE(s, 0.0);
    last = s;
  }
  EXPECT_EQ(last, 0.0);
}

TEST(TimePeriod, BucketsAndAbsence) {
  const Path a{{0.25, 0.25}, {0.25, 0.25}}, b{{0.75, 0.75}, {0.75, 0.75}};
  const auto real = toy({a, a, a, a}, 1.0, {0, 1, 2, 3});
  const auto grid = real.meta.metric_grid();
  for (const auto& v : timeperiod_density(real, real, grid)) {
    ASSERT_TRUE(v);
    EXPECT_EQ(*v, 0.0);
  }
  const auto gen = toy({a, a, a, b}, 1.0, {0, 1, 2, 3});
  const auto d = timeperiod_density(real, gen, grid);
  EXPECT_EQ(*d[0], 0.0);
  EXPECT_EQ(*d[2], 0.0);
  EXPECT_NEAR(*d[3], kLn2, 1e-15);
  const auto partial = toy({a, a}, 1.0, {0, 2});
  const auto p = timeperiod_density(real, partial, grid);
  EXPECT_TRUE(p[0]);
  EXPECT_FALSE(p[1]);
  EXPECT_TRUE(p[2]);
  EXPECT_FALSE(p[3]);
}

TEST(TimePeriod, SyntheticDayFillsAllBuckets) {
  const auto ds = city(4, 200);
  const auto d = timeperiod_density(ds, ds, ds.meta.metric_grid());
  for (const auto& v : d) EXPECT_TRUE(v);
}

TEST(Evaluate, SelfComparisonAndSerialization) {
  const auto ds = city(5, 120);
  const auto r = evaluate(ds, ds, ds.meta.metric_grid());
  EXPECT_EQ(r.density, 0.0);
  EXPECT_EQ(r.trip, 0.0);
  EXPECT_EQ(r.length, 0.0);
  EXPECT_EQ(r.pattern, 1.0);
  for (const auto& v : r.period) EXPECT_EQ(v.value_or(-1.0), 0.0);
  EXPECT_EQ(r.real_count, ds.size());
  EXPECT_EQ(report_from_text(to_text(r)), r);

  const auto other = city(6, 120);
  auto r2 = evaluate(ds, other, ds.meta.metric_grid());
  EXPECT_GT(r2.density, 0.0);
  r2.period[1].reset();
  const auto text = to_text(r2);
  EXPECT_NE(text.find("period1_density=absent"), std::string::npos);
  EXPECT_EQ(report_from_text(text), r2);
  EXPECT_THROW(report_from_text("density_error=0.1\n"), FormatError);
  EXPECT_THROW(report_from_text("garbage"), FormatError);
}
