#include "mft/quantizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mft/census.hpp"
#include "mft/errors.hpp"

namespace mft {
namespace {

// Literal float-domain ALS quantizer used as the oracle: divide by alpha
// rounded to a power of two, then round in the log domain with libm.
std::vector<double> oracle_als(const std::vector<double>& f, int bits) {
  const int emax = (1 << (bits - 2)) - 1;
  double mx = 0;
  for (double v : f) mx = std::max(mx, std::fabs(v));
  if (mx == 0) return std::vector<double>(f.size(), 0.0);
  const double alpha = mx / std::pow(2.0, emax);
  const int beta = static_cast<int>(std::floor(std::log2(alpha) + 0.5));
  std::vector<double> out;
  for (double v : f) {
    const double scaled = v / std::pow(2.0, beta);
    if (scaled == 0) {
      out.push_back(0);
      continue;
    }
    int e = static_cast<int>(std::floor(std::log2(std::fabs(scaled)) + 0.5));
    if (e < -emax) {
      out.push_back(0);
      continue;
    }
    e = std::min(e, emax);
    out.push_back(std::copysign(std::pow(2.0, e + beta), v));
  }
  return out;
}

TEST(Alpha, Examples) {
  const BitWidth b(5);
  const std::vector<double> f{1.0, -12.8, 3.0};
  EXPECT_DOUBLE_EQ(compute_alpha(f, b), 12.8 / 128.0);
  EXPECT_EQ(compute_alpha(std::vector<double>{128.0, -3.0}, b), 1.0);
  EXPECT_EQ(compute_alpha(std::vector<double>{0.0, 0.0}, b), 0.0);
  EXPECT_THROW(compute_alpha(std::vector<double>{}, b), InputError);
}

TEST(Beta, Examples) {
  EXPECT_EQ(compute_beta(0.1), static_cast<int>(std::floor(std::log2(0.1) + 0.5)));
  EXPECT_EQ(compute_beta(0.1), -3);
  EXPECT_EQ(compute_beta(0.25), -2);
  EXPECT_FALSE(compute_beta(0.0).has_value());
  EXPECT_EQ(compute_beta(std::ldexp(1.0, -1070)), -1070);
}

TEST(AlsPotq, HandExample) {
  const std::vector<double> f{1, -2, 0.5, 4};
  const auto q = als_potq(f, {4}, BitWidth(5));
  EXPECT_EQ(q.beta, -5);
  EXPECT_EQ(q.exps, (std::vector<std::int8_t>{5, 6, 4, 7}));
  EXPECT_EQ(q.signs, (std::vector<std::uint8_t>{0, 1, 0, 0}));
  EXPECT_EQ(dequantize_block(q), f);
  EXPECT_EQ(dequantize_block(q), oracle_als(f, 5));
}

TEST(AlsPotq, AllZeroBlock) {
  const std::vector<double> f(6, 0.0);
  const auto q = als_potq(f, {2, 3}, BitWidth(5));
  EXPECT_TRUE(q.null_scale());
  EXPECT_EQ(q.zero_count(), 6u);
  EXPECT_EQ(dequantize_block(q), f);
}

TEST(AlsPotq, RejectsBadInput) {
  const BitWidth b(5);
  EXPECT_THROW(als_potq(std::vector<double>{}, {0}, b), InputError);
  EXPECT_THROW(als_potq(std::vector<double>{1.0, NAN}, {2}, b), InputError);
  EXPECT_THROW(als_potq(std::vector<double>{1.0, 2.0}, {3}, b), InputError);
}

TEST(AlsPotq, MatchesFloatOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> scale(-30, 10);
  for (int bits = 3; bits <= 6; ++bits) {
    for (int t = 0; t < 200; ++t) {
      const double s = std::exp2(scale(rng));
      std::vector<double> f(64);
      for (auto& v : f) v = nd(rng) * s;
      const auto q = als_potq(f, {64}, BitWidth(bits));
      q.validate();
      ASSERT_EQ(dequantize_block(q), oracle_als(f, bits));
    }
  }
}

TEST(AlsPotq, PowerOfTwoScaleEquivariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> f(33);
    for (auto& v : f) v = nd(rng);
    const int k = static_cast<int>(rng() % 61) - 30;
    std::vector<double> g(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) g[i] = std::ldexp(f[i], k);
    const auto qf = als_potq(f, {33}, BitWidth(5));
    const auto qg = als_potq(g, {33}, BitWidth(5));
    ASSERT_EQ(qf.exps, qg.exps);
    ASSERT_EQ(qf.signs, qg.signs);
    ASSERT_EQ(qg.beta - qf.beta, k);
  }
}

TEST(AlsPotq, TopElementLandsOnTopCode) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> f(20);
    for (auto& v : f) v = nd(rng);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < f.size(); ++i) {
      if (std::fabs(f[i]) > std::fabs(f[arg])) arg = i;
    }
    QuantStats stats;
    const auto q = als_potq(f, {20}, BitWidth(5), {}, &stats);
    EXPECT_EQ(q.exps[arg], 7);
    EXPECT_EQ(std::fabs(dequantize_element(q, arg)), std::ldexp(1.0, 7 + q.beta));
    EXPECT_EQ(stats.clamped, 0u);
    // Clamp guarantee.
    for (double v : dequantize_block(q)) {
      EXPECT_LE(std::fabs(v), std::ldexp(std::sqrt(2.0), 7 + q.beta));
    }
  }
}

TEST(AlsPotq, RelativeErrorBound) {
  std::mt19937_64 rng(13);
  std::lognormal_distribution<double> ln(0.0, 2.0);
  const double bound = std::sqrt(2.0) - 1.0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> f(100);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = ln(rng) * (i % 2 ? -1 : 1);
    const auto q = als_potq(f, {100}, BitWidth(5));
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (q.is_zero(i)) continue;
      ASSERT_LE(std::fabs(dequantize_element(q, i) - f[i]) / std::fabs(f[i]), bound);
    }
  }
}

TEST(AlsPotq, WithoutScalingClampsAndZeroes) {
  const std::vector<double> f{1000.0, 1.0, 1e-4, -0.5};
  QuantStats stats;
  const auto q = als_potq(f, {4}, BitWidth(5), {.layer_scaling = false}, &stats);
  EXPECT_EQ(q.beta, 0);
  EXPECT_EQ(dequantize_block(q), (std::vector<double>{128.0, 1.0, 0.0, -0.5}));
  EXPECT_EQ(stats.clamped, 1u);
  EXPECT_EQ(stats.zeroed, 1u);
}

TEST(AlsPotq, CountsScalingsAndRoundings) {
  reset_op_census();
  const std::vector<double> f{1.0, 0.0, 2.0, -3.0};
  als_potq(f, {4}, BitWidth(5));
  const auto c = op_census();
  EXPECT_EQ(c.scalings, 3u);
  EXPECT_EQ(c.roundings, 3u);
  EXPECT_EQ(c.multiplies, 0u);
}

TEST(WeightBiasCorrection, Examples) {
  EXPECT_EQ(weight_bias_correction(std::vector<double>{1, 2, 3}),
            (std::vector<double>{-1, 0, 1}));
  const auto once = weight_bias_correction(std::vector<double>{1, 2, 3});
  EXPECT_EQ(weight_bias_correction(once), once);
  EXPECT_EQ(weight_bias_correction(std::vector<double>{2.0}), std::vector<double>{0.0});
  EXPECT_THROW(weight_bias_correction(std::vector<double>{}), InputError);
}

TEST(WeightBiasCorrection, MeanIsZeroAndNearlyIdempotent) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.3, 1.0);
  const double eps = std::numeric_limits<double>::epsilon();
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<double> w(n);
    double mx = 0;
    for (auto& v : w) {
      v = nd(rng);
      mx = std::max(mx, std::fabs(v));
    }
    const auto out = weight_bias_correction(w);
    long double sum = 0;
    for (double v : out) sum += v;
    const double mean = static_cast<double>(sum / n);
    ASSERT_LT(std::fabs(mean), 10 * eps * mx * n);
    const auto twice = weight_bias_correction(out);
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(twice[i], out[i], 10 * eps * mx * n);
  }
}

TEST(RatioClip, Examples) {
  const std::vector<double> a{-4, -1, 0, 2, 8};
  const auto r = ratio_clip(a, ClipParam(0.5));
  EXPECT_EQ(r.values, (std::vector<double>{-4, -1, 0, 2, 4}));
  EXPECT_EQ(r.mask, (std::vector<bool>{false, false, false, false, true}));
  EXPECT_EQ(r.threshold, 4.0);
  EXPECT_EQ(r.clipped, 1u);

  const auto id = ratio_clip(a, ClipParam(1.0));
  EXPECT_EQ(id.values, a);
  EXPECT_EQ(id.clipped, 0u);
  EXPECT_THROW(ClipParam(0.0), ConfigError);
  EXPECT_THROW(ClipParam(1.5), ConfigError);
}

TEST(RatioClip, BoundHoldsElementwise) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> g(0.05, 1.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(50);
    double mx = 0;
    for (auto& v : a) {
      v = nd(rng);
      mx = std::max(mx, std::fabs(v));
    }
    const double gamma = g(rng);
    const auto r = ratio_clip(a, ClipParam(gamma));
    double out_max = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_LE(std::fabs(r.values[i]), mx * gamma);
      ASSERT_EQ(r.mask[i], std::fabs(a[i]) > mx * gamma);
      out_max = std::max(out_max, std::fabs(r.values[i]));
    }
    if (r.clipped) ASSERT_EQ(out_max, mx * gamma);
  }
}

TEST(BlockSerialization, RoundTripsRandomBlocks) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t rows = 1 + rng() % 9, cols = 1 + rng() % 13;
    std::vector<double> f(rows * cols);
    for (auto& v : f) v = (rng() % 4 == 0) ? 0.0 : nd(rng);
    const auto q = als_potq(f, {rows, cols}, BitWidth(3 + static_cast<int>(rng() % 4)));
    std::stringstream ss;
    write_block(ss, q);
    EXPECT_EQ(ss.str().size(), 1 + 2 + 4 + 16 + rows * cols + (rows * cols + 7) / 8);
    EXPECT_EQ(read_block(ss), q);
  }
}

TEST(BlockSerialization, LittleEndianLayout) {
  const auto q = als_potq(std::vector<double>{-1.0, 0.0, 0.25}, {3}, BitWidth(5));
  std::stringstream ss;
  write_block(ss, q);
  const std::string s = ss.str();
  ASSERT_EQ(s.size(), 1u + 2 + 4 + 8 + 3 + 1);
  EXPECT_EQ(static_cast<unsigned char>(s[0]), 5);
  // beta = -7 as i16 LE.
  EXPECT_EQ(static_cast<unsigned char>(s[1]), 0xF9);
  EXPECT_EQ(static_cast<unsigned char>(s[2]), 0xFF);
  EXPECT_EQ(static_cast<unsigned char>(s[3]), 1);
  EXPECT_EQ(static_cast<unsigned char>(s[7]), 3);
  EXPECT_EQ(static_cast<signed char>(s[15]), 7);
  EXPECT_EQ(static_cast<signed char>(s[16]), INT8_MIN);
  EXPECT_EQ(static_cast<signed char>(s[17]), 5);
  EXPECT_EQ(static_cast<unsigned char>(s[18]), 0x01);
}

TEST(BlockSerialization, RejectsTruncatedStream) {
  const auto q = als_potq(std::vector<double>{1.0, 2.0}, {2}, BitWidth(5));
  std::stringstream ss;
  write_block(ss, q);
  std::string s = ss.str();
  s.pop_back();
  std::stringstream cut(s);
  EXPECT_THROW(read_block(cut), InputError);
}

}  // namespace
}  // namespace mft
