#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "xlid/kernels.hpp"

namespace xlid::kernels {
namespace {

template <typename Real>
std::vector<Real> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return v;
}

template <typename Real>
void expect_close(const std::vector<Real>& a, const std::vector<Real>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_NEAR(static_cast<double>(a[i]), static_cast<double>(b[i]), tol * (1.0 + std::abs(static_cast<double>(b[i]))))
        << i;
  }
}

template <typename Real>
class KernelsTest : public ::testing::Test {};

using RealTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelsTest, RealTypes);

template <typename Real>
double tol() {
  return std::is_same_v<Real, float> ? 1e-4 : 1e-12;
}

TYPED_TEST(KernelsTest, GemmMatchesSerial) {
  using Real = TypeParam;
  const Index m = 13, n = 7, k = 29;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      for (bool acc : {false, true}) {
        const auto a = random_vec<Real>(m * k, 1);
        const auto b = random_vec<Real>(k * n, 2);
        auto c1 = random_vec<Real>(m * n, 3);
        auto c2 = c1;
        gemm<Real>(ta, tb, m, n, k, a.data(), b.data(), c1.data(), acc);
        serial::gemm<Real>(ta, tb, m, n, k, a.data(), b.data(), c2.data(), acc);
        expect_close(c1, c2, tol<Real>());
      }
    }
  }
}

TYPED_TEST(KernelsTest, SpliceMatchesSerialExactly) {
  using Real = TypeParam;
  const Index batch = 3, t = 17, dim = 5;
  const std::vector<int> offsets{-4, 0, 2, 6};
  const Index t_out = t - 10;
  const auto x = random_vec<Real>(batch * t * dim, 4);
  std::vector<Real> a(batch * t_out * dim * 4), b(a.size());
  splice<Real>(x.data(), batch, t, dim, offsets, a.data());
  serial::splice<Real>(x.data(), batch, t, dim, offsets, b.data());
  EXPECT_EQ(a, b);

  const auto g = random_vec<Real>(a.size(), 5);
  std::vector<Real> gx1(x.size(), Real(1)), gx2(x.size(), Real(1));
  splice_backward<Real>(g.data(), batch, t, dim, offsets, gx1.data());
  serial::splice_backward<Real>(g.data(), batch, t, dim, offsets, gx2.data());
  expect_close(gx1, gx2, tol<Real>());
}

TYPED_TEST(KernelsTest, SpliceIsAdjoint) {
  using Real = TypeParam;
  const Index batch = 2, t = 11, dim = 3;
  const std::vector<int> offsets{-2, 1, 3};
  const Index t_out = t - 5;
  const auto x = random_vec<Real>(batch * t * dim, 6);
  const auto g = random_vec<Real>(batch * t_out * dim * 3, 7);
  std::vector<Real> sx(g.size()), gx(x.size(), Real(0));
  splice<Real>(x.data(), batch, t, dim, offsets, sx.data());
  splice_backward<Real>(g.data(), batch, t, dim, offsets, gx.data());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += static_cast<double>(sx[i]) * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * gx[i];
  EXPECT_NEAR(lhs, rhs, tol<Real>() * 100);
}

// The parallel version sums in sorted order and the reference in time order,
// so they agree to rounding only.
TYPED_TEST(KernelsTest, StatsPoolMatchesSerial) {
  using Real = TypeParam;
  const Index batch = 4, t = 23, dim = 9;
  const auto x = random_vec<Real>(batch * t * dim, 8);
  std::vector<Real> a(batch * 2 * dim), b(a.size());
  stats_pool<Real>(x.data(), batch, t, dim, Real(1e-10), a.data());
  serial::stats_pool<Real>(x.data(), batch, t, dim, Real(1e-10), b.data());
  expect_close(a, b, tol<Real>());

  const auto g = random_vec<Real>(a.size(), 9);
  std::vector<Real> gx1(x.size(), Real(0)), gx2(x.size(), Real(0));
  stats_pool_backward<Real>(x.data(), a.data(), g.data(), batch, t, dim, gx1.data());
  serial::stats_pool_backward<Real>(x.data(), b.data(), g.data(), batch, t, dim, gx2.data());
  expect_close(gx1, gx2, tol<Real>());
}

TYPED_TEST(KernelsTest, StatsPoolPermutationInvariant) {
  using Real = TypeParam;
  const Index t = 31, dim = 6;
  auto x = random_vec<Real>(t * dim, 10);
  std::vector<Real> ref(2 * dim), out(2 * dim);
  stats_pool<Real>(x.data(), 1, t, dim, Real(1e-10), ref.data());
  std::mt19937_64 rng(11);
  std::vector<Index> perm(t);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Real> y(x.size());
    for (Index r = 0; r < t; ++r) std::copy_n(x.begin() + perm[r] * dim, dim, y.begin() + r * dim);
    stats_pool<Real>(y.data(), 1, t, dim, Real(1e-10), out.data());
    ASSERT_EQ(out, ref);
  }
}

TYPED_TEST(KernelsTest, ElementwiseKernels) {
  using Real = TypeParam;
  const std::vector<Real> x{Real(-1), Real(0), Real(2), Real(-3), Real(4)};
  std::vector<Real> y(5);
  relu<Real>(x.data(), y.data(), 5);
  EXPECT_EQ(y, (std::vector<Real>{0, 0, 2, 0, 4}));
  std::vector<Real> gx(5, Real(0));
  const std::vector<Real> gy(5, Real(1));
  relu_backward<Real>(x.data(), gy.data(), gx.data(), 5);
  EXPECT_EQ(gx, (std::vector<Real>{0, 0, 1, 0, 1}));

  std::vector<Real> m{1, 2, 3, 4, 5, 6};
  const std::vector<Real> bias{10, 20, 30};
  add_bias<Real>(m.data(), bias.data(), 2, 3);
  EXPECT_EQ(m, (std::vector<Real>{11, 22, 33, 14, 25, 36}));
  std::vector<Real> gb(3, Real(1));
  bias_backward<Real>(m.data(), 2, 3, gb.data());
  EXPECT_EQ(gb, (std::vector<Real>{26, 48, 70}));
}

TEST(Kernels, ThreadsPositive) { EXPECT_GE(max_threads(), 1); }

}  // namespace
}  // namespace xlid::kernels
