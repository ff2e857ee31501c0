#include "paralab/space.hpp"

#include <gtest/gtest.h>

using namespace paralab;

namespace {

// brute-force ball enumeration straight from the metric
std::vector<std::size_t> brute_ball(const MetricMeasureSpace& s, std::size_t c, double r) {
  std::vector<std::size_t> out;
  for (std::size_t y = 0; y < s.size(); ++y) {
    if (s.distance(c, y) < r) out.push_back(y);
  }
  return out;
}

}  // namespace

TEST(Space, PeriodicLineBasics) {
  auto s = build_grid_space({8}, 1.0, Topology::periodic);
  EXPECT_EQ(s->size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(s->weight(i), 1.0);
  EXPECT_DOUBLE_EQ(s->distance(0, 7), 1.0);
  EXPECT_DOUBLE_EQ(s->distance(1, 5), 4.0);
}

TEST(Space, BoundedSquareBasics) {
  auto s = build_grid_space({4, 4}, 0.5, Topology::bounded);
  EXPECT_EQ(s->size(), 16u);
  EXPECT_DOUBLE_EQ(s->weight(3), 0.25);
  EXPECT_DOUBLE_EQ(s->distance(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(s->distance(0, 4), 0.5);
  EXPECT_DOUBLE_EQ(s->distance(0, 15), 3.0);
}

TEST(Space, Errors) {
  EXPECT_THROW(build_grid_space({}, 1.0, Topology::periodic), InvalidArgument);
  EXPECT_THROW(build_grid_space({4}, 0.0, Topology::periodic), InvalidArgument);
  EXPECT_THROW(build_grid_space({1024, 1024}, 1.0, Topology::periodic, 4096), BudgetExceeded);
}

TEST(Space, MetricAxiomsOnSampledTriples) {
  auto s = build_grid_space({6, 5}, 0.3, Topology::periodic);
  Rng rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, s->size() - 1);
  for (int i = 0; i < 500; ++i) {
    const auto a = pick(rng), b = pick(rng), c = pick(rng);
    EXPECT_EQ(s->distance(a, a), 0.0);
    EXPECT_EQ(s->distance(a, b), s->distance(b, a));
    EXPECT_LE(s->distance(a, c), s->distance(a, b) + s->distance(b, c) + 1e-12);
  }
}

TEST(Space, BallVolumeExamples) {
  auto s = build_grid_space({8}, 1.0, Topology::periodic);
  EXPECT_DOUBLE_EQ(ball_volume(*s, {3, 2.5}), 5.0);
  EXPECT_DOUBLE_EQ(ball_volume(*s, {3, 0.5}), 1.0);
  // radius equal to a lattice distance excludes that shell (open ball)
  EXPECT_DOUBLE_EQ(ball_volume(*s, {3, 2.0}), 3.0);
}

TEST(Space, BallsMatchBruteForce) {
  for (auto topo : {Topology::periodic, Topology::bounded}) {
    auto s = build_grid_space({7, 6}, 0.1, topo);
    for (std::size_t c : {std::size_t{0}, std::size_t{17}, std::size_t{41}}) {
      for (double r : {0.05, 0.1, 0.1000001, 0.25, 0.3, 0.7, 5.0}) {
        EXPECT_EQ(ball_points(*s, {c, r}), brute_ball(*s, c, r)) << "c=" << c << " r=" << r;
      }
    }
  }
}

TEST(Space, VolumeMonotoneInRadius) {
  auto s = build_grid_space({9, 9}, 1.0, Topology::bounded);
  for (std::size_t c = 0; c < s->size(); c += 7) {
    double prev = 0.0;
    for (double r = 0.25; r < 20; r += 0.25) {
      const double v = ball_volume(*s, {c, r});
      EXPECT_GE(v, prev);
      EXPECT_GT(v, 0.0);
      prev = v;
    }
  }
}

TEST(Space, StrongHomogeneity2D) {
  // exhaustive over centers and grid radii: V(x, lr) <= A2 l^2 V(x, r) for l >= 1
  auto s = build_grid_space({12, 12}, 1.0, Topology::periodic);
  Rng rng(5);
  const auto rep = doubling_report(*s, 300, rng);
  for (std::size_t x = 0; x < s->size(); ++x) {
    for (double r = 1.0; r <= 6.0; r += 1.0) {
      for (double l : {1.0, 1.5, 2.0, 3.0}) {
        const double ratio = ball_volume(*s, {x, l * r}) / ball_volume(*s, {x, r});
        EXPECT_LE(ratio, 6.0 * l * l);  // the measured A2 is of order one
      }
    }
  }
  EXPECT_GE(rep.A1, 1.0);
}

TEST(Space, AnnulusDefinition) {
  auto s = build_grid_space({64}, 1.0, Topology::periodic);
  const Ball b{10, 2.0};
  EXPECT_EQ(annulus(*s, b, 0), ball_points(*s, b));
  std::vector<std::size_t> expect;
  for (std::size_t y = 0; y < 64; ++y) {
    const double d = s->distance(10, y);
    if (d >= 4.0 && d < 8.0) expect.push_back(y);
  }
  EXPECT_EQ(annulus(*s, b, 2), expect);
  // telescoping union
  for (int J = 0; J <= 5; ++J) {
    std::vector<std::size_t> u;
    for (int j = 0; j <= J; ++j) {
      const auto a = annulus(*s, b, j);
      u.insert(u.end(), a.begin(), a.end());
    }
    std::sort(u.begin(), u.end());
    EXPECT_EQ(u, ball_points(*s, b.scaled(std::ldexp(1.0, J))));
  }
}

TEST(Space, AveragingExamples) {
  auto s = build_grid_space({8}, 1.0, Topology::periodic);
  CVector c = CVector::Constant(8, Complex(2.0, -1.0));
  for (double t : {0.3, 1.0, 2.5, 100.0}) {
    EXPECT_LT(max_abs(average(*s, t, c) - c), 1e-14);
  }
  CVector spike = CVector::Zero(8);
  spike[4] = 1.0;
  EXPECT_NEAR(average(*s, 2.5, spike)[4].real(), 0.2, 1e-15);
  // t below the spacing is the identity
  EXPECT_LT(max_abs(average(*s, 0.5, spike) - spike), 1e-15);
}

TEST(Space, AveragingCauchySchwarzAndContraction) {
  auto s = build_grid_space({10, 7}, 0.2, Topology::bounded);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const CVector f = random_gaussian(static_cast<Eigen::Index>(s->size()), rng);
    for (double t : {0.1, 0.35, 0.9}) {
      const CVector a = average(*s, t, f);
      EXPECT_LE(max_abs(a), max_abs(f) + 1e-12);
      for (std::size_t x = 0; x < s->size(); ++x) {
        double sq = 0.0, v = 0.0;
        for (auto y : ball_points(*s, {x, t})) {
          sq += s->weight(y) * std::norm(f[static_cast<Eigen::Index>(y)]);
          v += s->weight(y);
        }
        EXPECT_LE(std::norm(a[static_cast<Eigen::Index>(x)]), sq / v + 1e-12);
      }
    }
  }
}

TEST(Space, AveragingTendsToMean) {
  auto s = build_grid_space({9, 4}, 0.5, Topology::periodic);
  Rng rng(1);
  const CVector f = random_gaussian(static_cast<Eigen::Index>(s->size()), rng);
  const CVector a = average(*s, s->diameter() + 1.0, f);
  const Complex mean = s->mean(f);
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_LT(std::abs(a[i] - mean), 1e-12);
}

TEST(Space, AveragingAdjoint) {
  auto s = build_grid_space({11, 5}, 0.3, Topology::bounded);
  Rng rng(4);
  const auto n = static_cast<Eigen::Index>(s->size());
  for (double t : {0.2, 0.65, 1.4}) {
    const CVector f = random_gaussian(n, rng), g = random_gaussian(n, rng);
    const Complex lhs = s->inner(average(*s, t, f), g);
    const Complex rhs = s->inner(f, average_adjoint(*s, t, g));
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * f.norm() * g.norm());
  }
}

TEST(Space, DoublingReports) {
  Rng rng(11);
  const auto line = doubling_report(*build_grid_space({128}, 1.0, Topology::periodic), 400, rng);
  EXPECT_GE(line.n, 0.8);
  EXPECT_LE(line.n, 1.2);
  const auto line64 = doubling_report(*build_grid_space({64}, 1.0, Topology::periodic), 400, rng);
  EXPECT_NEAR(line64.n, 1.0, 0.2);
  const auto sq = doubling_report(*build_grid_space({32, 32}, 1.0, Topology::periodic), 400, rng);
  EXPECT_GE(sq.n, 1.7);
  EXPECT_LE(sq.n, 2.3);
  const auto point = doubling_report(*build_grid_space({1}, 1.0, Topology::periodic), 20, rng);
  EXPECT_DOUBLE_EQ(point.A1, 1.0);
  EXPECT_TRUE(point.zero_variance);
}
