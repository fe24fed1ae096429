#include "funque/integral.h"

#include <gtest/gtest.h>

#include <cmath>

#include "funque/error.h"
#include "test_util.h"

namespace funque {
namespace {

using testing::Rng;

double naive_sum(const Plane& p, int top, int left, int h, int w) {
  long double s = 0;
  for (int y = top; y < top + h; ++y)
    for (int x = left; x < left + w; ++x) s += p(y, x);
  return static_cast<double>(s);
}

TEST(Integral, SingleSample) {
  const IntegralImage ii = build_integral(Plane(1, 1, 4.5));
  EXPECT_EQ(ii.at(0, 0), 0.0L);
  EXPECT_EQ(ii.at(0, 1), 0.0L);
  EXPECT_EQ(ii.at(1, 0), 0.0L);
  EXPECT_EQ(ii.at(1, 1), 4.5L);
}

TEST(Integral, OnesFullExtent) {
  EXPECT_EQ(box_sum(build_integral(Plane(3, 3, 1.0)), 0, 0, 3, 3), 9.0L);
}

TEST(Integral, ZeroPlane) {
  const IntegralImage ii = build_integral(Plane(7, 5));
  EXPECT_EQ(box_sum(ii, 1, 2, 3, 4), 0.0L);
}

TEST(Integral, UnitWindowIsSample) {
  Rng rng(1);
  const Plane p = testing::random_plane(rng, 9, 6);
  const IntegralImage ii = build_integral(p);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 9; ++x) EXPECT_NEAR(static_cast<double>(box_sum(ii, y, x, 1, 1)), p(y, x), 1e-12);
}

TEST(Integral, EveryThreeByThreeMatchesNaive) {
  Rng rng(2);
  Plane p(16, 16);
  // Integers keep the comparison exact.
  for (double& v : p.samples()) v = rng.below(256);
  const IntegralImage ii = build_integral(p);
  for (int y = 0; y + 3 <= 16; ++y)
    for (int x = 0; x + 3 <= 16; ++x)
      EXPECT_EQ(static_cast<double>(box_sum(ii, y, x, 3, 3)), naive_sum(p, y, x, 3, 3));
}

TEST(Integral, StridedNineByNineMatchesNaive) {
  Rng rng(3);
  const Plane p = testing::random_plane(rng, 64, 64);
  const IntegralImage ii = build_integral(p);
  for (int y = 0; y + 9 <= 64; y += 4)
    for (int x = 0; x + 9 <= 64; x += 4)
      EXPECT_LT(testing::rel_diff(static_cast<double>(box_sum(ii, y, x, 9, 9)), naive_sum(p, y, x, 9, 9)), 1e-12);
}

TEST(Integral, MonotoneForNonNegativeSource) {
  Rng rng(4);
  const IntegralImage ii = build_integral(testing::random_plane(rng, 12, 10));
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 12; ++j) {
      if (i > 0) EXPECT_GE(ii.at(i, j), ii.at(i - 1, j));
      if (j > 0) EXPECT_GE(ii.at(i, j), ii.at(i, j - 1));
    }
}

TEST(Integral, OutOfBoundsWindowThrows) {
  const IntegralImage ii = build_integral(Plane(4, 4));
  EXPECT_THROW(box_sum(ii, 2, 2, 3, 1), Error);
  EXPECT_THROW(box_sum(ii, -1, 0, 1, 1), Error);
  EXPECT_THROW(box_sum(ii, 0, 0, -1, 1), Error);
  EXPECT_EQ(box_sum(ii, 1, 1, 0, 3), 0.0L);
}

TEST(Integral, ProductVariant) {
  Rng rng(5);
  const Plane x = testing::random_plane(rng, 8, 8), y = testing::random_plane(rng, 8, 8);
  Plane xy(8, 8), xx(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      xy(r, c) = x(r, c) * y(r, c);
      xx(r, c) = x(r, c) * x(r, c);
    }
  EXPECT_NEAR(static_cast<double>(box_sum(build_integral_product(x, y), 1, 2, 5, 4)),
              naive_sum(xy, 1, 2, 5, 4), 1e-8);
  EXPECT_NEAR(static_cast<double>(box_sum(build_integral_squared(x), 0, 0, 8, 8)),
              naive_sum(xx, 0, 0, 8, 8), 1e-8);
  EXPECT_THROW(build_integral_product(x, Plane(8, 7)), Error);
}

TEST(Integral, LinearityProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Plane x = testing::random_plane(rng, 20, 17, -10, 10);
    const Plane y = testing::random_plane(rng, 20, 17, -10, 10);
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    Plane z(20, 17);
    for (int r = 0; r < 17; ++r)
      for (int c = 0; c < 20; ++c) z(r, c) = a * x(r, c) + b * y(r, c);
    const int top = rng.below(10), left = rng.below(10);
    const double lhs = static_cast<double>(box_sum(build_integral(z), top, left, 7, 9));
    const double rhs = a * static_cast<double>(box_sum(build_integral(x), top, left, 7, 9)) +
                       b * static_cast<double>(box_sum(build_integral(y), top, left, 7, 9));
    EXPECT_LT(std::abs(lhs - rhs), 1e-9 * std::max(1.0, std::abs(rhs))) << "seed " << seed;
  }
}

struct NaiveMoments {
  double mx, my, vx, vy, cxy;
};

NaiveMoments naive_moments(const Plane& x, const Plane& y, int top, int left, int win) {
  double sx = 0, sy = 0;
  for (int r = top; r < top + win; ++r)
    for (int c = left; c < left + win; ++c) {
      sx += x(r, c);
      sy += y(r, c);
    }
  const double n = win * win;
  NaiveMoments m{sx / n, sy / n, 0, 0, 0};
  for (int r = top; r < top + win; ++r)
    for (int c = left; c < left + win; ++c) {
      const double dx = x(r, c) - m.mx, dy = y(r, c) - m.my;
      m.vx += dx * dx;
      m.vy += dy * dy;
      m.cxy += dx * dy;
    }
  m.vx /= n;
  m.vy /= n;
  m.cxy /= n;
  return m;
}

TEST(WindowedMoments, MatchNaiveWithinRelativeTolerance) {
  Rng rng(6);
  const Plane x = testing::random_plane(rng, 40, 33), y = testing::random_plane(rng, 40, 33);
  const MomentMaps m = windowed_moments(x, y, 9, 1);
  ASSERT_EQ(m.mu_x.width(), 32);
  ASSERT_EQ(m.mu_x.height(), 25);
  for (int r = 0; r < 25; ++r)
    for (int c = 0; c < 32; ++c) {
      const NaiveMoments n = naive_moments(x, y, r, c, 9);
      EXPECT_LT(testing::rel_diff(m.mu_x(r, c), n.mx), 1e-6);
      EXPECT_LT(testing::rel_diff(m.mu_y(r, c), n.my), 1e-6);
      EXPECT_LT(testing::rel_diff(m.var_x(r, c), n.vx), 1e-6);
      EXPECT_LT(testing::rel_diff(m.var_y(r, c), n.vy), 1e-6);
      EXPECT_LT(std::abs(m.cov_xy(r, c) - n.cxy), 1e-6 * std::sqrt(n.vx * n.vy));
    }
}

TEST(WindowedMoments, StrideSelectsTopLeftCorners) {
  Rng rng(7);
  const Plane x = testing::random_plane(rng, 23, 23), y = testing::random_plane(rng, 23, 23);
  const MomentMaps m = windowed_moments(x, y, 5, 3);
  ASSERT_EQ(m.mu_x.width(), 7);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c)
      EXPECT_LT(testing::rel_diff(m.var_y(r, c), naive_moments(x, y, 3 * r, 3 * c, 5).vy), 1e-6);
}

TEST(WindowedMoments, SelfPairAndConstants) {
  Rng rng(8);
  const Plane x = testing::random_plane(rng, 16, 16);
  const MomentMaps m = windowed_moments(x, x, 4, 1);
  EXPECT_EQ(m.var_x, m.var_y);
  EXPECT_EQ(m.var_x, m.cov_xy);
  const MomentMaps c = windowed_moments(Plane(10, 10, 42.0), Plane(10, 10, 7.0), 3, 1);
  for (double v : c.var_x.samples()) EXPECT_EQ(v, 0.0);
  for (double v : c.cov_xy.samples()) EXPECT_NEAR(v, 0.0, 1e-9);
  for (double v : c.mu_x.samples()) EXPECT_NEAR(v, 42.0, 1e-12);
  for (double v : c.mu_y.samples()) EXPECT_NEAR(v, 7.0, 1e-12);
}

TEST(WindowedMoments, NonNegativeAndCauchySchwarz) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    // Large offset with tiny spread provokes cancellation.
    const Plane x = testing::random_plane(rng, 30, 30, 1e6, 1e6 + 1e-3);
    const Plane y = testing::random_plane(rng, 30, 30, 0, 255);
    const MomentMaps m = windowed_moments(x, y, 9, 1);
    for (std::size_t i = 0; i < m.var_x.size(); ++i) {
      const double vx = m.var_x.samples()[i], vy = m.var_y.samples()[i];
      ASSERT_GE(vx, 0.0);
      ASSERT_GE(vy, 0.0);
      ASSERT_LE(std::abs(m.cov_xy.samples()[i]), std::sqrt(vx * vy) + 1e-9);
    }
  }
}

TEST(WindowedMoments, Errors) {
  EXPECT_THROW(windowed_moments(Plane(8, 8), Plane(8, 9), 3, 1), Error);
  EXPECT_THROW(windowed_moments(Plane(8, 8), Plane(8, 8), 9, 1), Error);
  EXPECT_THROW(windowed_moments(Plane(8, 8), Plane(8, 8), 3, 0), Error);
}

}  // namespace
}  // namespace funque
