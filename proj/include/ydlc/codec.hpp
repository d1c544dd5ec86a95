#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ydlc/color.hpp"
#include "ydlc/model.hpp"

namespace ydlc {

inline constexpr char kBitstreamMagic[4] = {'Y', 'D', 'L', 'B'};
inline constexpr std::uint16_t kBitstreamVersion = 1;

// The training ladder. A bitstream records the index of its model's beta, or
// kUnknownBeta.
inline constexpr double kBetaLadder[] = {0.005, 0.01, 0.025, 0.1, 0.2};
inline constexpr std::uint8_t kUnknownBeta = 0xff;
std::uint8_t beta_id(double beta);

struct BitstreamHeader {
  ArchitectureId arch = ArchitectureId::proposed_prelu;
  std::uint8_t beta = kUnknownBeta;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t padded_width = 0;
  std::uint32_t padded_height = 0;
};

// Entropy-coded payloads of one analysis/synthesis pair.
struct UnitPayload {
  std::vector<std::uint8_t> hyper;
  std::vector<std::uint8_t> latent;
};

struct Bitstream {
  BitstreamHeader header;
  std::vector<UnitPayload> units;

  std::vector<std::uint8_t> serialize() const;
  // Throws DataError on bad magic, version, unit layout or truncation.
  static Bitstream parse(std::span<const std::uint8_t> bytes);
  std::size_t payload_bytes() const;
};

struct CodecUnit {
  NetworkSpec spec;
  ModelWeights weights;
};

// One unit for the joint codecs; two (Y then UV) for separate coding.
class Codec {
 public:
  // `uv` is required exactly when `primary` is a separate-y model.
  static Codec from_weights(ModelWeights primary, std::optional<ModelWeights> uv = std::nullopt);
  static Codec load(const std::string& path, const std::string& uv_path = "");

  ArchitectureId arch() const { return units_.front().spec.arch; }
  std::string name() const;
  std::vector<CodecUnit>& units() { return units_; }

 private:
  std::vector<CodecUnit> units_;
};

struct EncodeResult {
  Bitstream bitstream;
  // What decode_frame() will produce from the bitstream.
  Yuv420Frame reconstruction;
  // Sum of -log2 p over all coded symbols under the floating-point model.
  double model_bits = 0.0;
  // Sum of code lengths under the 16-bit tables actually used.
  double table_bits = 0.0;
  std::size_t clamped = 0;
  // Quantized symbols, hyper then latent per unit, for audits.
  std::vector<std::vector<std::int32_t>> symbols;
};

EncodeResult encode_frame(const Yuv420Frame& frame, Codec& codec,
                          std::uint8_t beta = kUnknownBeta);
Yuv420Frame decode_frame(const Bitstream& bitstream, Codec& codec);
Yuv420Frame decode_frame(std::span<const std::uint8_t> bytes, Codec& codec);

// Bits per luma pixel of the original (unpadded) frame.
double bits_per_pixel(const Bitstream& bitstream);

}  // namespace ydlc
