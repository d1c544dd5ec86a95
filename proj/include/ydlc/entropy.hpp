#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ydlc/tensor.hpp"

namespace ydlc {

inline constexpr int kSymbolMin = -32768;
inline constexpr int kSymbolMax = 32767;

struct QuantizedLatents {
  Shape shape;
  std::vector<std::int32_t> values;
  // Entries that fell outside the 16-bit symbol range and were clamped.
  std::size_t clamped = 0;
};

// Round half away from zero, clamped to [-2^15, 2^15 - 1].
QuantizedLatents quantize(const Tensor& y);
Tensor dequantize(const QuantizedLatents& q);

// Discretized Gaussian mass of the integer bin around `value`, floored at
// 2^-16. Requires scale >= 0.11.
double likelihood(double value, double mean, double scale);
// Unfloored bin mass; sums to one over all integers.
double bin_mass(double value, double mean, double scale);
double rate_bits(double value, double mean, double scale);

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;
// Half-width of the explicitly modelled symbol range is 16 sigma, clamped to
// [kMinTableHalfWidth, kMaxTableHalfWidth]. The lower clamp keeps outliers of
// narrow distributions in-table at the floored cost instead of escaping.
inline constexpr int kMinTableHalfWidth = 16;
inline constexpr int kMaxTableHalfWidth = 4096;

// Fixed-point CDF over [lo, hi] plus one trailing escape slot. Values outside
// the range are coded as the escape followed by their 16-bit pattern as two
// uniform bytes.
struct CdfTable {
  std::int32_t lo = 0;
  std::int32_t hi = -1;
  // cdf.size() == (hi - lo + 1) + 2; cdf.front() == 0, cdf.back() == 2^16.
  std::vector<std::uint32_t> cdf;

  int slots() const { return static_cast<int>(cdf.size()) - 1; }
  int escape_slot() const { return slots() - 1; }
  std::uint32_t start(int slot) const { return cdf[slot]; }
  std::uint32_t freq(int slot) const { return cdf[slot + 1] - cdf[slot]; }
  // Slot whose interval contains cumulative frequency `f`.
  int find(std::uint32_t f) const;
  // Checks first/last entries, monotonicity and per-slot frequency >= 1.
  bool valid() const;
  // Ideal code length of `value` under this table, in bits.
  double cost_bits(std::int32_t value) const;
};

// Builds a table for N(mean, scale) over [mean - 16 scale, mean + 16 scale].
CdfTable gaussian_cdf_table(double mean, double scale);
// Quantizes a pmf over [lo, hi] (with `escape_mass` for the rest) to 16 bits.
CdfTable quantize_pmf(std::int32_t lo, std::span<const double> pmf, double escape_mass);

// 32-bit state, byte-wise renormalization, 16-bit probabilities.
class RansEncoder {
 public:
  static constexpr std::uint32_t kLower = 1u << 23;

  // Slots must be pushed in reverse decode order.
  void put(std::uint32_t start, std::uint32_t freq);
  std::vector<std::uint8_t> finish();

 private:
  std::uint32_t state_ = kLower;
  std::vector<std::uint8_t> reversed_;
};

class RansDecoder {
 public:
  explicit RansDecoder(std::span<const std::uint8_t> bytes);
  std::uint32_t peek() const { return state_ & (kCdfTotal - 1); }
  void advance(std::uint32_t start, std::uint32_t freq);
  std::size_t consumed() const { return pos_; }

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t state_ = 0;
};

// values[i] is coded with tables[table_of[i]]. Throws UsageError when a value
// lies outside the 16-bit symbol range.
std::vector<std::uint8_t> rans_encode(std::span<const std::int32_t> values,
                                      std::span<const CdfTable> tables,
                                      std::span<const std::uint32_t> table_of);
std::vector<std::int32_t> rans_decode(std::span<const std::uint8_t> bytes,
                                      std::span<const CdfTable> tables,
                                      std::span<const std::uint32_t> table_of, std::size_t count);

// Identity table mapping (one table per value).
std::vector<std::uint32_t> identity_table_map(std::size_t count);

}  // namespace ydlc
