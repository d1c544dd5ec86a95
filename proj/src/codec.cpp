#include "ydlc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ydlc/bytes.hpp"
#include "ydlc/entropy.hpp"
#include "ydlc/error.hpp"

namespace ydlc {

namespace {

constexpr int kPadMultiple = 64;
constexpr std::uint32_t kMaxExtent = 1u << 15;

int unit_count(ArchitectureId arch) { return arch == ArchitectureId::separate_y ? 2 : 1; }

int half_up(int v) { return (v + 1) / 2; }

// Extents of the first analysis input for a padded frame.
Shape first_input_shape(const NetworkSpec& spec, int padded_w, int padded_h) {
  const int c = spec.io_channels().front();
  if (spec.arch == ArchitectureId::separate_y || is_branched(spec.arch)) {
    return {1, c, padded_h, padded_w};
  }
  return {1, c, padded_h / 2, padded_w / 2};
}

Shape latent_shape(const NetworkSpec& spec, int padded_w, int padded_h) {
  const Shape in = first_input_shape(spec, padded_w, padded_h);
  const int stride = branch_strides(spec).front();
  return {1, spec.m, in.h / stride, in.w / stride};
}

Shape hyper_shape(const NetworkSpec& spec, const Shape& latent) {
  return {1, spec.n, half_up(half_up(latent.h)), half_up(half_up(latent.w))};
}

struct Tables {
  std::vector<CdfTable> tables;
  std::vector<std::uint32_t> map;
  // Floating-point parameters per symbol, for the model-rate audit.
  std::vector<float> mean;
  std::vector<float> scale;
};

Tables hyper_tables(CodecUnit& unit, const Shape& shape) {
  Graph g(false);
  const GaussianVars prior = hyper_prior(g, unit.weights, {1, unit.spec.n, 1, 1});
  Tables t;
  for (int c = 0; c < unit.spec.n; ++c) {
    t.tables.push_back(gaussian_cdf_table(prior.mean.value()[c], prior.scale.value()[c]));
  }
  const std::size_t plane = shape.plane();
  t.map.resize(shape.size());
  t.mean.resize(shape.size());
  t.scale.resize(shape.size());
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const auto c = static_cast<std::uint32_t>(i / plane);
    t.map[i] = c;
    t.mean[i] = prior.mean.value()[c];
    t.scale[i] = prior.scale.value()[c];
  }
  return t;
}

Tables latent_tables(CodecUnit& unit, const QuantizedLatents& hyper, const Shape& latent) {
  Graph g(false);
  const GaussianVars p =
      hyper_synthesis(g, unit.spec, unit.weights, g.input(dequantize(hyper)), latent);
  Tables t;
  const auto mean = p.mean.value().data();
  const auto scale = p.scale.value().data();
  t.tables.reserve(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    t.tables.push_back(gaussian_cdf_table(mean[i], scale[i]));
  }
  t.map = identity_table_map(mean.size());
  t.mean.assign(mean.begin(), mean.end());
  t.scale.assign(scale.begin(), scale.end());
  return t;
}

void audit(const Tables& t, std::span<const std::int32_t> values, EncodeResult& r) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    r.model_bits += rate_bits(values[i], t.mean[i], t.scale[i]);
    r.table_bits += t.tables[t.map[i]].cost_bits(values[i]);
  }
}

std::vector<Tensor> synthesize(CodecUnit& unit, const QuantizedLatents& latent) {
  Graph g(false);
  std::vector<Tensor> out;
  for (const Var& v : synthesis_forward(g, unit.spec, unit.weights, g.input(dequantize(latent)))) {
    out.push_back(v.value());
  }
  return out;
}

Yuv420Frame assemble(ArchitectureId arch, std::vector<std::vector<Tensor>> outputs,
                     const BitstreamHeader& h) {
  FrameTensors padded;
  if (arch == ArchitectureId::separate_y) {
    padded.y = std::move(outputs[0][0]);
    padded.uv = std::move(outputs[1][0]);
  } else if (arch == ArchitectureId::six_channel) {
    padded = unpack_six(outputs[0][0]);
  } else {
    padded.y = std::move(outputs[0][0]);
    padded.uv = std::move(outputs[0][1]);
  }
  return from_tensors(crop_back(padded, static_cast<int>(h.width), static_cast<int>(h.height)));
}

std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> payload, const Tables& t,
                                         std::size_t count) {
  return rans_decode(payload, t.tables, t.map, count);
}

}  // namespace

std::uint8_t beta_id(double beta) {
  for (std::size_t i = 0; i < std::size(kBetaLadder); ++i) {
    if (std::abs(kBetaLadder[i] - beta) <= 1e-9 * kBetaLadder[i]) return static_cast<std::uint8_t>(i);
  }
  return kUnknownBeta;
}

std::vector<std::uint8_t> Bitstream::serialize() const {
  ByteWriter out;
  out.bytes({reinterpret_cast<const std::uint8_t*>(kBitstreamMagic), 4});
  out.u16(kBitstreamVersion);
  out.u8(static_cast<std::uint8_t>(header.arch));
  out.u8(header.beta);
  out.u32(header.width);
  out.u32(header.height);
  out.u32(header.padded_width);
  out.u32(header.padded_height);
  for (const UnitPayload& u : units) {
    out.u32(static_cast<std::uint32_t>(u.hyper.size()));
    out.bytes(u.hyper);
    out.u32(static_cast<std::uint32_t>(u.latent.size()));
    out.bytes(u.latent);
  }
  return out.take();
}

Bitstream Bitstream::parse(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "bitstream");
  const auto magic = in.bytes(4);
  if (std::memcmp(magic.data(), kBitstreamMagic, 4) != 0) throw DataError("bitstream: bad magic");
  const std::uint16_t version = in.u16();
  if (version != kBitstreamVersion) {
    throw DataError("bitstream: unsupported version " + std::to_string(version));
  }
  Bitstream bs;
  BitstreamHeader& h = bs.header;
  h.arch = architecture_from_byte(in.u8());
  if (h.arch == ArchitectureId::separate_uv) {
    throw DataError("bitstream: separate-uv is not a standalone codec");
  }
  h.beta = in.u8();
  h.width = in.u32();
  h.height = in.u32();
  h.padded_width = in.u32();
  h.padded_height = in.u32();
  const auto bad_extent = [](std::uint32_t v, std::uint32_t padded) {
    return v == 0 || v % 2 != 0 || v > kMaxExtent || padded < v || padded % kPadMultiple != 0 ||
           padded - v >= kPadMultiple;
  };
  if (bad_extent(h.width, h.padded_width) || bad_extent(h.height, h.padded_height)) {
    throw DataError("bitstream: inconsistent frame extents " + std::to_string(h.width) + "x" +
                    std::to_string(h.height) + " padded " + std::to_string(h.padded_width) + "x" +
                    std::to_string(h.padded_height));
  }
  for (int i = 0; i < unit_count(h.arch); ++i) {
    UnitPayload u;
    const auto hyper = in.bytes(in.u32());
    u.hyper.assign(hyper.begin(), hyper.end());
    const auto latent = in.bytes(in.u32());
    u.latent.assign(latent.begin(), latent.end());
    bs.units.push_back(std::move(u));
  }
  if (in.remaining() != 0) throw DataError("bitstream: trailing bytes after the last payload");
  return bs;
}

std::size_t Bitstream::payload_bytes() const {
  std::size_t n = 0;
  for (const UnitPayload& u : units) n += u.hyper.size() + u.latent.size();
  return n;
}

Codec Codec::from_weights(ModelWeights primary, std::optional<ModelWeights> uv) {
  Codec c;
  const ArchitectureId arch = primary.arch();
  if (arch == ArchitectureId::separate_uv) {
    throw UsageError("separate coding takes the separate-y checkpoint first and the separate-uv "
                     "checkpoint as the chroma model");
  }
  if ((arch == ArchitectureId::separate_y) != uv.has_value()) {
    throw UsageError(arch == ArchitectureId::separate_y
                         ? "separate coding needs a separate-uv checkpoint for chroma"
                         : "a chroma checkpoint is only used with separate-y");
  }
  if (uv && uv->arch() != ArchitectureId::separate_uv) {
    throw DataError("chroma checkpoint is " + std::string(to_string(uv->arch())) +
                    ", expected separate-uv");
  }
  const auto add = [&c](ModelWeights w) {
    NetworkSpec spec = build_architecture(w.arch(), w.n(), w.m());
    validate_weights(spec, w);
    c.units_.push_back({std::move(spec), std::move(w)});
  };
  add(std::move(primary));
  if (uv) add(std::move(*uv));
  return c;
}

Codec Codec::load(const std::string& path, const std::string& uv_path) {
  ModelWeights primary = ModelWeights::load(path);
  std::optional<ModelWeights> uv;
  if (!uv_path.empty()) uv = ModelWeights::load(uv_path);
  return from_weights(std::move(primary), std::move(uv));
}

std::string Codec::name() const {
  return arch() == ArchitectureId::separate_y ? "separate" : std::string(to_string(arch()));
}

EncodeResult encode_frame(const Yuv420Frame& frame, Codec& codec, std::uint8_t beta) {
  frame.validate();
  const PaddedFrame padded = pad_to_multiple(to_tensors(frame), kPadMultiple);
  EncodeResult r;
  BitstreamHeader& h = r.bitstream.header;
  h.arch = codec.arch();
  h.beta = beta;
  h.width = static_cast<std::uint32_t>(frame.width);
  h.height = static_cast<std::uint32_t>(frame.height);
  h.padded_width = static_cast<std::uint32_t>(padded.tensors.y.shape().w);
  h.padded_height = static_cast<std::uint32_t>(padded.tensors.y.shape().h);

  std::vector<std::vector<Tensor>> outputs;
  for (CodecUnit& unit : codec.units()) {
    Graph g(false);
    std::vector<Var> inputs;
    for (Tensor& t : model_inputs(unit.spec.arch, padded.tensors)) inputs.push_back(g.input(std::move(t)));
    const Var y = analysis_forward(g, unit.spec, unit.weights, inputs);
    const Var z = hyper_analysis(g, unit.spec, unit.weights, y);
    const QuantizedLatents qz = quantize(z.value());
    const QuantizedLatents qy = quantize(y.value());
    r.clamped += qz.clamped + qy.clamped;

    const Tables ht = hyper_tables(unit, qz.shape);
    const Tables lt = latent_tables(unit, qz, qy.shape);
    UnitPayload payload;
    payload.hyper = rans_encode(qz.values, ht.tables, ht.map);
    payload.latent = rans_encode(qy.values, lt.tables, lt.map);
    audit(ht, qz.values, r);
    audit(lt, qy.values, r);
    r.bitstream.units.push_back(std::move(payload));
    r.symbols.push_back(qz.values);
    r.symbols.push_back(qy.values);
    outputs.push_back(synthesize(unit, qy));
  }
  r.reconstruction = assemble(h.arch, std::move(outputs), h);
  return r;
}

Yuv420Frame decode_frame(const Bitstream& bs, Codec& codec) {
  const BitstreamHeader& h = bs.header;
  if (h.arch != codec.arch()) {
    throw DataError("bitstream was coded with " + std::string(to_string(h.arch)) +
                    " but the checkpoint is " + std::string(to_string(codec.arch())));
  }
  if (bs.units.size() != codec.units().size()) throw DataError("bitstream: wrong unit count");
  std::vector<std::vector<Tensor>> outputs;
  for (std::size_t i = 0; i < bs.units.size(); ++i) {
    CodecUnit& unit = codec.units()[i];
    const Shape ls = latent_shape(unit.spec, static_cast<int>(h.padded_width),
                                  static_cast<int>(h.padded_height));
    QuantizedLatents qz{hyper_shape(unit.spec, ls), {}, 0};
    qz.values = decode_symbols(bs.units[i].hyper, hyper_tables(unit, qz.shape), qz.shape.size());
    QuantizedLatents qy{ls, {}, 0};
    qy.values = decode_symbols(bs.units[i].latent, latent_tables(unit, qz, ls), ls.size());
    outputs.push_back(synthesize(unit, qy));
  }
  return assemble(h.arch, std::move(outputs), h);
}

Yuv420Frame decode_frame(std::span<const std::uint8_t> bytes, Codec& codec) {
  return decode_frame(Bitstream::parse(bytes), codec);
}

double bits_per_pixel(const Bitstream& bs) {
  const double pixels = static_cast<double>(bs.header.width) * bs.header.height;
  return static_cast<double>(bs.serialize().size()) * 8.0 / pixels;
}

}  // namespace ydlc
