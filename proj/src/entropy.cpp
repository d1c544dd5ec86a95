#include "ydlc/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "ydlc/autograd.hpp"
#include "ydlc/error.hpp"
#include "ydlc/gaussian.hpp"

namespace ydlc {

QuantizedLatents quantize(const Tensor& y) {
  QuantizedLatents q{y.shape(), std::vector<std::int32_t>(y.size()), 0};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = std::round(static_cast<double>(y[i]));
    if (r < kSymbolMin || r > kSymbolMax) ++q.clamped;
    q.values[i] = static_cast<std::int32_t>(std::clamp(r, double{kSymbolMin}, double{kSymbolMax}));
  }
  return q;
}

Tensor dequantize(const QuantizedLatents& q) {
  Tensor t(q.shape);
  for (std::size_t i = 0; i < q.values.size(); ++i) t[i] = static_cast<float>(q.values[i]);
  return t;
}

double bin_mass(double value, double mean, double scale) {
  return interval_probability(value, mean, scale);
}

double likelihood(double value, double mean, double scale) {
  if (!(scale >= kScaleFloor)) throw InvariantError("likelihood: scale below 0.11");
  return std::max(interval_probability(value, mean, scale), kLikelihoodFloor);
}

double rate_bits(double value, double mean, double scale) {
  return -std::log2(likelihood(value, mean, scale));
}

int CdfTable::find(std::uint32_t f) const {
  // First slot whose upper edge exceeds f.
  auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), f);
  return static_cast<int>(it - cdf.begin()) - 1;
}

bool CdfTable::valid() const {
  if (cdf.size() < 2 || cdf.front() != 0 || cdf.back() != kCdfTotal) return false;
  if (static_cast<long>(cdf.size()) != static_cast<long>(hi) - lo + 3) return false;
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    if (cdf[i] <= cdf[i - 1]) return false;
  }
  return true;
}

double CdfTable::cost_bits(std::int32_t value) const {
  const auto bits = [](std::uint32_t f) {
    return -std::log2(static_cast<double>(f) / static_cast<double>(kCdfTotal));
  };
  if (value >= lo && value <= hi) return bits(freq(value - lo));
  return bits(freq(escape_slot())) + 16.0;
}

CdfTable quantize_pmf(std::int32_t lo, std::span<const double> pmf, double escape_mass) {
  const std::size_t slots = pmf.size() + 1;
  if (slots > kCdfTotal) throw InvariantError("quantize_pmf: too many symbols for 16-bit tables");
  std::vector<std::int64_t> freq(slots);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < slots; ++i) {
    const double p = i + 1 < slots ? pmf[i] : escape_mass;
    freq[i] = std::max<std::int64_t>(1, std::llround(std::max(p, 0.0) * kCdfTotal));
    total += freq[i];
  }
  std::int64_t diff = static_cast<std::int64_t>(kCdfTotal) - total;
  while (diff != 0) {
    const auto top = static_cast<std::size_t>(
        std::max_element(freq.begin(), freq.end()) - freq.begin());
    if (diff > 0) {
      freq[top] += diff;
      diff = 0;
    } else {
      const std::int64_t take = std::min(-diff, freq[top] - 1);
      if (take <= 0) throw InvariantError("quantize_pmf: cannot normalize table");
      freq[top] -= take;
      diff += take;
    }
  }
  CdfTable t;
  t.lo = lo;
  t.hi = lo + static_cast<std::int32_t>(pmf.size()) - 1;
  t.cdf.resize(slots + 1);
  t.cdf[0] = 0;
  for (std::size_t i = 0; i < slots; ++i) t.cdf[i + 1] = t.cdf[i] + static_cast<std::uint32_t>(freq[i]);
  return t;
}

CdfTable gaussian_cdf_table(double mean, double scale) {
  if (!(scale >= kScaleFloor) || !std::isfinite(mean) || !std::isfinite(scale)) {
    throw InvariantError("gaussian_cdf_table: invalid parameters");
  }
  const double half = std::clamp(16.0 * scale, double{kMinTableHalfWidth}, double{kMaxTableHalfWidth});
  const auto lo = static_cast<std::int32_t>(
      std::clamp(std::floor(mean - half), double{kSymbolMin}, double{kSymbolMax}));
  const auto hi = static_cast<std::int32_t>(
      std::clamp(std::ceil(mean + half), double{kSymbolMin}, double{kSymbolMax}));
  std::vector<double> pmf(static_cast<std::size_t>(hi - lo + 1));
  double mass = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    pmf[i] = interval_probability(lo + static_cast<double>(i), mean, scale);
    mass += pmf[i];
  }
  return quantize_pmf(lo, pmf, std::max(0.0, 1.0 - mass));
}

void RansEncoder::put(std::uint32_t start, std::uint32_t freq) {
  const std::uint32_t x_max = ((kLower >> kCdfPrecision) << 8) * freq;
  while (state_ >= x_max) {
    reversed_.push_back(static_cast<std::uint8_t>(state_ & 0xff));
    state_ >>= 8;
  }
  state_ = ((state_ / freq) << kCdfPrecision) + (state_ % freq) + start;
}

std::vector<std::uint8_t> RansEncoder::finish() {
  for (int shift = 24; shift >= 0; shift -= 8) {
    reversed_.push_back(static_cast<std::uint8_t>(state_ >> shift));
  }
  std::vector<std::uint8_t> out(reversed_.rbegin(), reversed_.rend());
  reversed_.clear();
  state_ = kLower;
  return out;
}

RansDecoder::RansDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
  for (int shift = 0; shift < 32; shift += 8) state_ |= static_cast<std::uint32_t>(next_byte()) << shift;
}

std::uint8_t RansDecoder::next_byte() {
  if (pos_ >= in_.size()) throw DataError("rANS payload truncated");
  return in_[pos_++];
}

void RansDecoder::advance(std::uint32_t start, std::uint32_t freq) {
  state_ = freq * (state_ >> kCdfPrecision) + (state_ & (kCdfTotal - 1)) - start;
  while (state_ < RansEncoder::kLower) state_ = (state_ << 8) | next_byte();
}

std::vector<std::uint32_t> identity_table_map(std::size_t count) {
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<std::uint32_t>(i);
  return out;
}

namespace {

constexpr std::uint32_t kByteFreq = 256;

const CdfTable& table_for(std::span<const CdfTable> tables, std::span<const std::uint32_t> table_of,
                          std::size_t i) {
  if (i >= table_of.size() || table_of[i] >= tables.size()) {
    throw InvariantError("rANS: symbol " + std::to_string(i) + " has no table");
  }
  return tables[table_of[i]];
}

}  // namespace

std::vector<std::uint8_t> rans_encode(std::span<const std::int32_t> values,
                                      std::span<const CdfTable> tables,
                                      std::span<const std::uint32_t> table_of) {
  RansEncoder enc;
  for (std::size_t i = values.size(); i-- > 0;) {
    const std::int32_t v = values[i];
    if (v < kSymbolMin || v > kSymbolMax) {
      throw UsageError("rANS: symbol " + std::to_string(v) + " at index " + std::to_string(i) +
                       " is outside the 16-bit range");
    }
    const CdfTable& t = table_for(tables, table_of, i);
    if (v >= t.lo && v <= t.hi) {
      const int slot = v - t.lo;
      enc.put(t.start(slot), t.freq(slot));
    } else {
      const auto raw = static_cast<std::uint32_t>(v - kSymbolMin);
      enc.put((raw & 0xff) * kByteFreq, kByteFreq);
      enc.put((raw >> 8) * kByteFreq, kByteFreq);
      enc.put(t.start(t.escape_slot()), t.freq(t.escape_slot()));
    }
  }
  return enc.finish();
}

std::vector<std::int32_t> rans_decode(std::span<const std::uint8_t> bytes,
                                      std::span<const CdfTable> tables,
                                      std::span<const std::uint32_t> table_of, std::size_t count) {
  RansDecoder dec(bytes);
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const CdfTable& t = table_for(tables, table_of, i);
    const int slot = t.find(dec.peek());
    dec.advance(t.start(slot), t.freq(slot));
    if (slot != t.escape_slot()) {
      out[i] = t.lo + slot;
      continue;
    }
    const std::uint32_t high = dec.peek() / kByteFreq;
    dec.advance(high * kByteFreq, kByteFreq);
    const std::uint32_t low = dec.peek() / kByteFreq;
    dec.advance(low * kByteFreq, kByteFreq);
    out[i] = static_cast<std::int32_t>((high << 8) | low) + kSymbolMin;
  }
  if (dec.consumed() != bytes.size()) throw DataError("rANS payload has trailing bytes");
  return out;
}

}  // namespace ydlc
