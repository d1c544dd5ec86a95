#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ydlc/entropy.hpp"
#include "ydlc/error.hpp"

using namespace ydlc;

namespace {

struct Model {
  std::vector<CdfTable> tables;
  std::vector<std::uint32_t> table_of;
  std::vector<std::int32_t> values;
  double ideal_bits = 0.0;
};

// Symbols drawn from N(mean, scale) and rounded, so a few land in the tails.
Model draw(std::size_t count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mean(-40.0, 40.0), log_scale(std::log(0.11), std::log(60.0));
  std::normal_distribution<double> unit;
  Model m;
  for (std::size_t i = 0; i < count; ++i) {
    const double mu = mean(rng), sigma = std::exp(log_scale(rng));
    m.tables.push_back(gaussian_cdf_table(mu, sigma));
    const double draw = std::round(mu + sigma * unit(rng));
    m.values.push_back(static_cast<std::int32_t>(draw));
    m.ideal_bits += m.tables.back().cost_bits(m.values.back());
  }
  m.table_of = identity_table_map(count);
  return m;
}

}  // namespace

TEST(Quantize, RoundsHalfAwayFromZero) {
  const Tensor y({1, 1, 1, 6}, {0.4f, -0.6f, 2.5f, -2.5f, 7.0f, 1e6f});
  const QuantizedLatents q = quantize(y);
  EXPECT_EQ(q.values, (std::vector<std::int32_t>{0, -1, 3, -3, 7, kSymbolMax}));
  EXPECT_EQ(q.clamped, 1u);
}

TEST(Quantize, ErrorIsAtMostHalf) {
  std::mt19937_64 rng(1);
  const Tensor y = gradcheck::random_tensor({1, 3, 8, 8}, rng, -50, 50);
  const Tensor back = dequantize(quantize(y));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(back[i] - y[i]), 0.5f);
}

TEST(Likelihood, ReferenceValue) {
  EXPECT_NEAR(likelihood(0, 0, 1), 0.38292, 1e-5);
  EXPECT_NEAR(rate_bits(0, 0, 1), 1.385, 1e-3);
  EXPECT_NEAR(likelihood(2, 0.3, 1.7), static_cast<double>(oracle::bin_probability(2, 0.3, 1.7)),
              1e-12);
}

TEST(Likelihood, MassSumsToOneAndIsSymmetric) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> mean(-5, 5), scale(0.11, 30);
  for (int trial = 0; trial < 50; ++trial) {
    const double mu = mean(rng), s = scale(rng);
    double total = 0.0;
    for (int k = -400; k <= 400; ++k) total += bin_mass(k, mu, s);
    EXPECT_NEAR(total, 1.0, 1e-6) << mu << " " << s;
    for (int k = 0; k < 20; ++k) EXPECT_DOUBLE_EQ(likelihood(k, 0, s), likelihood(-k, 0, s));
  }
}

TEST(Likelihood, FloorAndScaleBound) {
  EXPECT_DOUBLE_EQ(likelihood(1000, 0, 0.11), 1.0 / 65536.0);
  EXPECT_THROW(likelihood(0, 0, 0.05), InvariantError);
}

TEST(CdfTable, ValidForAnyParameters) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mean(-1000, 1000), log_scale(std::log(0.11), std::log(5000.0));
  for (int trial = 0; trial < 500; ++trial) {
    const CdfTable t = gaussian_cdf_table(mean(rng), std::exp(log_scale(rng)));
    ASSERT_TRUE(t.valid());
    EXPECT_LE(t.hi - t.lo, 2 * kMaxTableHalfWidth + 2);
  }
  const CdfTable edge = gaussian_cdf_table(kSymbolMax, 4.0);
  EXPECT_TRUE(edge.valid());
  EXPECT_EQ(edge.hi, kSymbolMax);
}

TEST(CdfTable, FindInvertsStart) {
  const CdfTable t = gaussian_cdf_table(0.3, 2.0);
  for (int slot = 0; slot < t.slots(); ++slot) {
    EXPECT_EQ(t.find(t.start(slot)), slot);
    EXPECT_EQ(t.find(t.start(slot) + t.freq(slot) - 1), slot);
  }
}

TEST(Rans, EmptySequence) {
  const std::vector<std::uint8_t> bytes = rans_encode({}, {}, {});
  EXPECT_EQ(bytes.size(), 4u);
  EXPECT_TRUE(rans_decode(bytes, {}, {}, 0).empty());
}

TEST(Rans, TenThousandSymbolsRoundTrip) {
  std::mt19937_64 rng(4);
  const Model m = draw(10000, rng);
  const auto bytes = rans_encode(m.values, m.tables, m.table_of);
  EXPECT_EQ(rans_decode(bytes, m.tables, m.table_of, m.values.size()), m.values);
  EXPECT_LE(static_cast<double>(bytes.size()), 1.01 * m.ideal_bits / 8.0 + 16.0);
  EXPECT_GE(static_cast<double>(bytes.size()) * 8.0, m.ideal_bits);
}

TEST(Rans, SharedTablesAndEscapes) {
  const std::vector<CdfTable> tables = {gaussian_cdf_table(0, 0.5), gaussian_cdf_table(100, 3)};
  const std::vector<std::int32_t> values = {0, 1, -1, 100, kSymbolMin, kSymbolMax, 0, 300, -7};
  const std::vector<std::uint32_t> table_of = {0, 0, 0, 1, 0, 1, 1, 1, 0};
  const auto bytes = rans_encode(values, tables, table_of);
  EXPECT_EQ(rans_decode(bytes, tables, table_of, values.size()), values);
}

TEST(Rans, OutOfRangeSymbolIsRejected) {
  const std::vector<CdfTable> tables = {gaussian_cdf_table(0, 1)};
  const std::vector<std::int32_t> values = {kSymbolMax + 1};
  EXPECT_THROW(rans_encode(values, tables, identity_table_map(1)), UsageError);
}

TEST(Rans, TruncatedOrPaddedPayloadIsADataError) {
  std::mt19937_64 rng(5);
  const Model m = draw(200, rng);
  auto bytes = rans_encode(m.values, m.tables, m.table_of);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(rans_decode(longer, m.tables, m.table_of, m.values.size()), DataError);
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(rans_decode(bytes, m.tables, m.table_of, m.values.size()), DataError);
}

TEST(Rans, ThousandRandomConfigurations) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> length(0, 64);
  for (int trial = 0; trial < 1000; ++trial) {
    const Model m = draw(length(rng), rng);
    const auto bytes = rans_encode(m.values, m.tables, m.table_of);
    ASSERT_EQ(rans_decode(bytes, m.tables, m.table_of, m.values.size()), m.values) << trial;
  }
}
