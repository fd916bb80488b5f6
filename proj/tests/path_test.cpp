#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "logsig/path.hpp"
#include "logsig/rng.hpp"

using logsig::Path;

namespace {

Path path_1d(std::vector<double> xs) { return Path::from_values(std::move(xs), 1); }

Path random_path(logsig::Rng& rng, std::size_t n, int d) {
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.uniform(-1, 1);
  return Path::from_values(std::move(v), d);
}

// Exhaustive p-variation over all subsets of interior vertices.
double p_variation_brute_force(const Path& x, double p) {
  const std::size_t n = x.length();
  const std::size_t interior = n - 2;
  double best = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << interior); ++mask) {
    std::vector<std::size_t> pts{0};
    for (std::size_t i = 0; i < interior; ++i) {
      if (mask & (std::size_t{1} << i)) pts.push_back(i + 1);
    }
    pts.push_back(n - 1);
    double s = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) {
      double sq = 0.0;
      for (int c = 0; c < x.width(); ++c) sq += std::pow(x.at(pts[k], c) - x.at(pts[k - 1], c), 2);
      s += std::pow(std::sqrt(sq), p);
    }
    best = std::max(best, s);
  }
  return std::pow(best, 1.0 / p);
}

}  // namespace

TEST(Path, ValidatesConstruction) {
  EXPECT_THROW(Path({0.0, 0.0}, {1.0, 2.0}, 1), logsig::DomainError);
  EXPECT_THROW(Path({0.0, 1.0}, {1.0}, 1), logsig::ShapeError);
  EXPECT_THROW(Path({0.0}, {NAN}, 1), logsig::DomainError);
  EXPECT_THROW(Path({}, {}, 1), logsig::ShapeError);
}

TEST(PVariation, MonotoneTelescopes) {
  EXPECT_NEAR(logsig::p_variation(path_1d({0.0, 0.5, 2.0, 3.5}), 1.0), 3.5, 1e-15);
}

TEST(PVariation, Zigzag) { EXPECT_NEAR(logsig::p_variation(path_1d({0, 1, 0, 1}), 1.0), 3.0, 1e-15); }

TEST(PVariation, MatchesExhaustiveEnumeration) {
  const auto x = path_1d({0, 1, 0.5, 1.5});
  EXPECT_NEAR(logsig::p_variation(x, 2.0), p_variation_brute_force(x, 2.0), 1e-14);
  logsig::Rng rng(31);
  for (std::size_t n = 3; n <= 12; ++n) {
    const auto y = random_path(rng, n, 2);
    for (double p : {1.0, 1.5, 2.0, 3.0}) {
      EXPECT_NEAR(logsig::p_variation(y, p), p_variation_brute_force(y, p), 1e-12) << n << " " << p;
    }
  }
}

TEST(PVariation, NonIncreasingInP) {
  logsig::Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_path(rng, 30, 2);
    double prev = logsig::p_variation(x, 1.0);
    for (double p = 1.25; p <= 4.0; p += 0.25) {
      const double cur = logsig::p_variation(x, p);
      EXPECT_LE(cur, prev + 1e-12);
      prev = cur;
    }
  }
}

TEST(PVariation, OneVariationOfMonotoneSegments) {
  // 1-D path made of monotone runs: total variation is the sum of run lengths.
  const auto x = path_1d({0, 1, 2, 1.5, 0.5, 3, 4});
  EXPECT_NEAR(logsig::p_variation(x, 1.0), 2.0 + 1.5 + 3.5, 1e-14);
}

TEST(PVariation, Errors) {
  EXPECT_THROW(logsig::p_variation(path_1d({0, 1}), 0.5), logsig::DomainError);
  EXPECT_THROW(logsig::p_variation(path_1d({0}), 1.0), logsig::DomainError);
}

TEST(Transforms, TimeIncorporate) {
  const Path x({0.0, 1.0, 2.0}, {5, 5, 5}, 1);
  const auto y = logsig::time_incorporate(x);
  ASSERT_EQ(y.width(), 2);
  EXPECT_EQ(y.at(0, 0), 0.0);
  EXPECT_EQ(y.at(1, 0), 0.5);
  EXPECT_EQ(y.at(2, 0), 1.0);
  EXPECT_EQ(y.at(1, 1), 5.0);
  const auto single = logsig::time_incorporate(Path({3.0}, {1, 2}, 2));
  EXPECT_EQ(single.width(), 3);
  EXPECT_EQ(single.at(0, 0), 0.0);
}

TEST(Transforms, Accumulate) {
  const auto y = logsig::accumulate(path_1d({1, 1, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(logsig::accumulate(path_1d({0, 0, 0})).values(), (std::vector<double>{0, 0, 0}));
  logsig::Rng rng(33);
  const auto x = random_path(rng, 15, 3);
  const auto back = logsig::first_differences(logsig::accumulate(x));
  for (std::size_t i = 0; i < x.values().size(); ++i) EXPECT_NEAR(back.values()[i], x.values()[i], 1e-14);
}

TEST(Transforms, DropPoints) {
  logsig::Rng rng(34);
  const auto x = random_path(rng, 1000, 2);
  EXPECT_EQ(logsig::drop_points(x, 0.0, 1).values(), x.values());
  const auto y = logsig::drop_points(x, 0.05, 7);
  EXPECT_EQ(y.length(), 950u);
  EXPECT_EQ(y.time(0), x.time(0));
  EXPECT_EQ(y.times().back(), x.times().back());
  EXPECT_EQ(y.row(949)[1], x.row(999)[1]);
  EXPECT_EQ(logsig::drop_points(x, 0.05, 7).values(), y.values());
  EXPECT_NE(logsig::drop_points(x, 0.05, 8).times(), y.times());
  EXPECT_THROW(logsig::drop_points(x, 1.0, 1), logsig::DomainError);
  EXPECT_THROW(logsig::drop_points(x, -0.1, 1), logsig::DomainError);
  // Only interior rows can go.
  EXPECT_EQ(logsig::drop_points(random_path(rng, 3, 1), 0.9, 1).length(), 2u);
}

TEST(Transforms, DropPointsZeroFill) {
  logsig::Rng rng(35);
  const auto x = random_path(rng, 100, 2);
  const auto y = logsig::drop_points(x, 0.1, 3, logsig::MissingMode::zero_fill);
  EXPECT_EQ(y.length(), 100u);
  int zeros = 0;
  for (std::size_t i = 0; i < 100; ++i) zeros += (y.at(i, 0) == 0.0 && y.at(i, 1) == 0.0);
  EXPECT_EQ(zeros, 10);
}

TEST(Transforms, ReparameterizeIdentity) {
  logsig::Rng rng(36);
  const auto x = random_path(rng, 10, 2);
  const auto y = logsig::reparameterize(x, {}, [](double t) { return t; });
  EXPECT_EQ(y.values(), x.values());
  EXPECT_EQ(y.times(), x.times());
}

TEST(Transforms, ReparameterizeRejectsNonMonotoneWarp) {
  logsig::Rng rng(37);
  const auto x = random_path(rng, 10, 2);
  EXPECT_THROW(logsig::reparameterize(x, {}, [](double t) { return -t; }), logsig::DomainError);
  const std::vector<double> outside{100.0};
  EXPECT_THROW(logsig::reparameterize(x, outside, [](double t) { return t; }), logsig::DomainError);
}

TEST(Transforms, ReparameterizeKeepsTrajectory) {
  const Path x({0.0, 1.0, 2.0}, {0, 0, 2, 0, 2, 4}, 2);
  const std::vector<double> extra{0.5, 1.5};
  const auto y = logsig::reparameterize(x, extra, [](double t) { return t * t + t; });
  ASSERT_EQ(y.length(), 5u);
  EXPECT_EQ(y.at(1, 0), 1.0);
  EXPECT_EQ(y.at(3, 1), 2.0);
  EXPECT_EQ(y.time(4), 6.0);
}

TEST(Partition, Examples) {
  const auto x = Path::from_values(std::vector<double>(9, 0.0), 1);
  EXPECT_EQ(logsig::make_partition(x, 4).boundaries, (std::vector<std::size_t>{0, 2, 4, 6, 8}));
  EXPECT_EQ(logsig::make_partition(x, 1).boundaries, (std::vector<std::size_t>{0, 8}));
  EXPECT_EQ(logsig::make_partition(x, 8).boundaries, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_THROW(logsig::make_partition(x, 9), logsig::DomainError);
  EXPECT_THROW(logsig::make_partition(x, 0), logsig::DomainError);
}

TEST(Partition, NonUniformTimesKeepExactlyNSegments) {
  // Samples crowd at the start; naive snapping would collide.
  const Path x({0.0, 0.01, 0.02, 0.03, 0.04, 10.0}, std::vector<double>(6, 0.0), 1);
  const auto p = logsig::make_partition(x, 3);
  EXPECT_EQ(p.segments(), 3u);
  EXPECT_NO_THROW(p.validate(x));
  const auto all = logsig::make_partition(x, 5);
  EXPECT_EQ(all.boundaries, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(logsig::make_partition(x, 3).boundaries, p.boundaries);
}

TEST(Partition, DownsampleKeepsBoundaries) {
  logsig::Rng rng(38);
  const auto x = random_path(rng, 101, 2);
  const auto y = logsig::downsample(x, 10);
  ASSERT_EQ(y.length(), 11u);
  EXPECT_EQ(y.row(1)[0], x.row(10)[0]);
  EXPECT_EQ(y.times().back(), x.times().back());
}

TEST(PathCsv, RoundTripAndErrors) {
  logsig::Rng rng(39);
  const auto x = random_path(rng, 7, 3);
  std::stringstream ss;
  logsig::write_path_csv(ss, x);
  EXPECT_EQ(ss.str().substr(0, 14), "time,x1,x2,x3\n");
  const auto y = logsig::read_path_csv(ss);
  EXPECT_EQ(y.values(), x.values());
  EXPECT_EQ(y.times(), x.times());

  std::stringstream bad1("time,x1\n0,1\n1,abc\n");
  EXPECT_THROW(logsig::read_path_csv(bad1), logsig::DataError);
  std::stringstream bad2("time,x1\n0,1\n1,2,3\n");
  EXPECT_THROW(logsig::read_path_csv(bad2), logsig::DataError);
  std::stringstream bad3("time,x1\n1,1\n0,2\n");
  EXPECT_THROW(logsig::read_path_csv(bad3), logsig::DataError);
  std::stringstream empty("");
  EXPECT_THROW(logsig::read_path_csv(empty), logsig::DataError);
}
