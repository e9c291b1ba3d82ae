#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pprs/numerics.hpp"

using namespace pprs;

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(std_normal_cdf(1.0), 0.8413447, 1e-6);
  EXPECT_NEAR(std_normal_cdf(-1.0), 0.1586553, 1e-6);
}

TEST(NormalCdf, MatchesSeriesOracle) {
  for (double z = -5.0; z <= 5.0; z += 0.125) {
    EXPECT_NEAR(std_normal_cdf(z), oracle::normal_cdf(z), 1e-12) << z;
    EXPECT_NEAR(std_normal_cdf(-z), 1.0 - std_normal_cdf(z), 1e-15) << z;
  }
}

TEST(NormalCdf, Monotone) {
  double prev = 0.0;
  for (double z = -8.0; z <= 8.0; z += 0.01) {
    const double v = std_normal_cdf(z);
    ASSERT_GE(v, prev);
    prev = v;
  }
}

TEST(NormalQuantile, KnownValues) {
  EXPECT_DOUBLE_EQ(std_normal_inv_cdf(0.5), 0.0);
  EXPECT_NEAR(std_normal_inv_cdf(0.975), 1.959964, 1e-5);
  EXPECT_NEAR(std_normal_inv_cdf(0.8413447), 1.0, 1e-4);
  EXPECT_NEAR(std_normal_inv_cdf(0.975), oracle::normal_quantile(0.975), 1e-9);
}

TEST(NormalQuantile, DomainErrors) {
  EXPECT_THROW(std_normal_inv_cdf(0.0), DomainError);
  EXPECT_THROW(std_normal_inv_cdf(1.0), DomainError);
  EXPECT_THROW(std_normal_inv_cdf(-0.1), DomainError);
  EXPECT_THROW(std_normal_inv_cdf(std::nan("")), DomainError);
}

TEST(NormalQuantile, MutualInverse) {
  for (double lp = -9.0; lp <= -0.31; lp += 0.05) {
    for (double p : {std::pow(10.0, lp), 1.0 - std::pow(10.0, lp)}) {
      EXPECT_NEAR(std_normal_cdf(std_normal_inv_cdf(p)), p, 1e-10) << p;
    }
  }
  for (double p = 0.01; p < 1.0; p += 0.01) EXPECT_NEAR(std_normal_cdf(std_normal_inv_cdf(p)), p, 1e-10) << p;
}

TEST(BinomialTail, MatchesDirectSum) {
  for (std::uint64_t n : {1u, 7u, 50u, 300u, 2000u}) {
    for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
      for (std::uint64_t k : {std::uint64_t{0}, n / 3, n / 2, n - n / 10, n}) {
        const double want = oracle::binomial_tail_ge(k, n, p);
        EXPECT_NEAR(binomial_upper_tail(k, n, p), want, 1e-12 + 1e-9 * want) << n << " " << p << " " << k;
      }
    }
  }
}

TEST(ClopperPearson, Examples) {
  EXPECT_EQ(clopper_pearson_lower(0, 100, 0.001), 0.0);
  EXPECT_NEAR(clopper_pearson_lower(100, 100, 0.001), 0.93325, 1e-4);
  EXPECT_NEAR(clopper_pearson_lower(100, 100, 0.001), std::pow(0.001, 0.01), 1e-10);
  const double v = clopper_pearson_lower(99, 100, 0.001);
  EXPECT_NEAR(oracle::binomial_tail_ge(99, 100, v), 0.001, 1e-6);
}

TEST(ClopperPearson, SelfConsistentOnLargeN) {
  for (std::uint64_t k : {500u, 9000u, 99000u, 100000u}) {
    const double v = clopper_pearson_lower(k, 100000, 0.001);
    EXPECT_NEAR(binomial_upper_tail(k, 100000, v), 0.001, 1e-6) << k;
  }
}

TEST(ClopperPearson, Monotone) {
  double prev = 0.0;
  for (std::uint64_t k = 0; k <= 200; ++k) {
    const double v = clopper_pearson_lower(k, 200, 0.01);
    ASSERT_GE(v, prev);
    prev = v;
  }
  double prev_alpha = 1.0;
  for (double alpha : {1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.5}) {
    const double v = clopper_pearson_lower(150, 200, alpha);
    ASSERT_GE(v, prev_alpha == 1.0 ? 0.0 : prev_alpha);
    prev_alpha = v;
  }
}

TEST(ClopperPearson, DomainErrors) {
  EXPECT_THROW(clopper_pearson_lower(5, 4, 0.01), DomainError);
  EXPECT_THROW(clopper_pearson_lower(1, 4, 0.0), DomainError);
  EXPECT_THROW(clopper_pearson_lower(1, 4, 1.0), DomainError);
}

TEST(ClopperPearson, CalibrationAtNominalLevel) {
  Rng rng(99);
  int exceed = 0;
  for (int t = 0; t < 2000; ++t) {
    std::uint64_t k = 0;
    for (int i = 0; i < 1000; ++i) k += rng.uniform() < 0.9;
    exceed += clopper_pearson_lower(k, 1000, 0.001) > 0.9;
  }
  EXPECT_LE(exceed, 10);
}

TEST(TwoSidedTest, Examples) {
  EXPECT_DOUBLE_EQ(binom_two_sided_p(5, 10), 1.0);
  EXPECT_NEAR(binom_two_sided_p(10, 10), 2.0 / 1024.0, 1e-15);
  EXPECT_DOUBLE_EQ(binom_two_sided_p(0, 10), binom_two_sided_p(10, 10));
  for (std::uint64_t n = 10; n < 20; ++n) EXPECT_NEAR(binom_two_sided_p(n, n), std::pow(2.0, 1.0 - n), 1e-15);
  EXPECT_DOUBLE_EQ(binom_two_sided_p(0, 0), 1.0);
}

TEST(TwoSidedTest, Symmetric) {
  for (std::uint64_t k = 0; k <= 31; ++k) EXPECT_NEAR(binom_two_sided_p(k, 31), binom_two_sided_p(31 - k, 31), 1e-15);
}

TEST(GaussianField, ZeroSigma) {
  Rng rng(1);
  const Image z = sample_gaussian_image(3, 4, 1, 0.0, rng);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(sample_gaussian_image(3, 4, 1, -1.0, rng), DomainError);
}

TEST(GaussianField, Moments) {
  Rng rng(2024);
  const Image z = sample_gaussian_image(1000, 1000, 1, 1.0, rng);
  const auto [m, s] = oracle::mean_std(std::vector<double>(z.data().begin(), z.data().end()));
  EXPECT_NEAR(m, 0.0, 0.005);
  EXPECT_NEAR(s, 1.0, 0.005);
}

TEST(GaussianField, Deterministic) {
  Rng a(5), b(5);
  EXPECT_EQ(sample_gaussian_image(4, 4, 3, 0.7, a), sample_gaussian_image(4, 4, 3, 0.7, b));
}

TEST(Rng, SplitIsStableAndDistinct) {
  EXPECT_EQ(split_seed(1, 2), split_seed(1, 2));
  EXPECT_NE(split_seed(1, 2), split_seed(1, 3));
  EXPECT_NE(split_seed(1, 2), split_seed(2, 2));
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}
