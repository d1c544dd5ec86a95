#include "ydlc/model.hpp"

#include <cmath>
#include <random>

#include "ydlc/bytes.hpp"
#include "ydlc/error.hpp"

namespace ydlc {
namespace {

constexpr char kCheckpointMagic[] = "YDLC";

struct ParamShape {
  std::string path;
  Shape shape;
};

std::vector<ParamShape> layer_params(const LayerSpec& l) {
  const int cin = l.in_channels, cout = l.out_channels, k = l.kernel;
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::conv1x1:
      return {{l.name + ".weight", {cout, cin, k, k}}, {l.name + ".bias", {1, cout, 1, 1}}};
    case LayerKind::tconv:
      return {{l.name + ".weight", {cin, cout, k, k}}, {l.name + ".bias", {1, cout, 1, 1}}};
    case LayerKind::gdn:
    case LayerKind::igdn:
      return {{l.name + ".beta", {1, cin, 1, 1}}, {l.name + ".gamma", {cin, cin, 1, 1}}};
    case LayerKind::prelu: return {{l.name + ".slope", {1, cin, 1, 1}}};
  }
  return {};
}

template <class F>
void for_each_layer(const NetworkSpec& spec, F&& f) {
  for (const auto& b : spec.analysis.branches)
    for (const auto& l : b) f(l);
  for (const auto& l : spec.analysis.trunk) f(l);
  for (const auto& l : spec.synthesis.trunk) f(l);
  for (const auto& b : spec.synthesis.branches)
    for (const auto& l : b) f(l);
  for (const auto& l : spec.hyper_analysis) f(l);
  for (const auto& l : spec.hyper_synthesis) f(l);
}

std::vector<ParamShape> expected_params(const NetworkSpec& spec) {
  std::vector<ParamShape> out;
  for_each_layer(spec, [&out](const LayerSpec& l) {
    for (auto& p : layer_params(l)) out.push_back(std::move(p));
  });
  out.push_back({"prior.mean", {1, spec.n, 1, 1}});
  out.push_back({"prior.scale", {1, spec.n, 1, 1}});
  return out;
}

// softplus^-1(1 - 0.11): a unit hyper-latent scale at initialization.
const float kUnitScaleRaw = static_cast<float>(std::log(std::expm1(1.0 - kScaleFloor)));

Var layer_forward(Graph& g, const LayerSpec& l, ModelWeights& w, Var x) {
  switch (l.kind) {
    case LayerKind::conv:
      return conv2d(x, g.param(w.at(l.name + ".weight")), g.param(w.at(l.name + ".bias")),
                    l.stride, l.kernel / 2);
    case LayerKind::conv1x1:
      return conv2d(x, g.param(w.at(l.name + ".weight")), g.param(w.at(l.name + ".bias")), 1, 0);
    case LayerKind::tconv:
      return tconv2d(x, g.param(w.at(l.name + ".weight")), g.param(w.at(l.name + ".bias")),
                     l.stride);
    case LayerKind::gdn:
    case LayerKind::igdn: {
      Var beta = lower_bound(square(g.param(w.at(l.name + ".beta"))), 1e-6f);
      Var gamma = square(g.param(w.at(l.name + ".gamma")));
      return gdn(x, beta, gamma, l.kind == LayerKind::igdn);
    }
    case LayerKind::prelu: return prelu(x, g.param(w.at(l.name + ".slope")));
  }
  throw InvariantError("unhandled layer kind");
}

int stack_stride(const LayerStack& s) {
  int total = 1;
  for (const auto& l : s) total *= l.stride;
  return total;
}

}  // namespace

ModelWeights ModelWeights::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  ModelWeights w(spec.arch, spec.n, spec.m);
  std::mt19937_64 rng(seed);
  for_each_layer(spec, [&](const LayerSpec& l) {
    for (const ParamShape& p : layer_params(l)) {
      Tensor t(p.shape);
      const std::string role = p.path.substr(p.path.rfind('.') + 1);
      if (role == "weight") {
        // Number of taps feeding one output sample.
        double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
        if (l.kind == LayerKind::tconv) fan_in /= static_cast<double>(l.stride) * l.stride;
        std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
        for (float& v : t.data()) v = dist(rng);
      } else if (role == "beta") {
        t.fill(1.0f);
      } else if (role == "gamma") {
        // Off-diagonals start slightly above zero so the squared
        // parameterization can move them.
        const int c = p.shape.n;
        for (int i = 0; i < c; ++i)
          for (int j = 0; j < c; ++j) t.at(i, j, 0, 0) = i == j ? std::sqrt(0.1f) : 0.01f;
      } else if (role == "slope") {
        t.fill(0.25f);
      }
      w.insert(p.path, std::move(t));
    }
  });
  w.insert("prior.mean", Tensor({1, spec.n, 1, 1}, 0.0f));
  w.insert("prior.scale", Tensor({1, spec.n, 1, 1}, kUnitScaleRaw));
  return w;
}

Param& ModelWeights::at(const std::string& path) {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw InvariantError("missing weight entry '" + path + "'");
  return it->second;
}

const Param& ModelWeights::at(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw InvariantError("missing weight entry '" + path + "'");
  return it->second;
}

void ModelWeights::insert(const std::string& path, Tensor value) {
  entries_.insert_or_assign(path, Param(std::move(value)));
}

std::vector<Param*> ModelWeights::params() {
  std::vector<Param*> out;
  for (auto& [path, p] : entries_) out.push_back(&p);
  return out;
}

std::size_t ModelWeights::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [path, p] : entries_) total += p.value.size();
  return total;
}

std::vector<std::uint8_t> ModelWeights::serialize() const {
  ByteWriter out;
  out.text(std::string_view(kCheckpointMagic, 4));
  out.u16(kCheckpointVersion);
  out.u8(static_cast<std::uint8_t>(arch_));
  out.u32(static_cast<std::uint32_t>(n_));
  out.u32(static_cast<std::uint32_t>(m_));
  out.u32(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [path, p] : entries_) {
    out.u16(static_cast<std::uint16_t>(path.size()));
    out.text(path);
    const Shape& s = p.value.shape();
    for (int e : {s.n, s.c, s.h, s.w}) out.u32(static_cast<std::uint32_t>(e));
    for (float v : p.value.data()) out.f32(v);
  }
  return out.take();
}

ModelWeights ModelWeights::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "checkpoint");
  if (in.text(4) != std::string_view(kCheckpointMagic, 4)) {
    throw DataError("checkpoint: bad magic (expected YDLC)");
  }
  const std::uint16_t version = in.u16();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const ArchitectureId arch = architecture_from_byte(in.u8());
  const auto n = static_cast<int>(in.u32());
  const auto m = static_cast<int>(in.u32());
  ModelWeights w(arch, n, m);
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string path = in.text(in.u16());
    Shape s;
    s.n = static_cast<int>(in.u32());
    s.c = static_cast<int>(in.u32());
    s.h = static_cast<int>(in.u32());
    s.w = static_cast<int>(in.u32());
    if (s.size() * 4 > in.remaining()) throw DataError("checkpoint: truncated entry '" + path + "'");
    Tensor t(s);
    for (float& v : t.data()) v = in.f32();
    w.insert(path, std::move(t));
  }
  if (in.remaining() != 0) throw DataError("checkpoint: trailing bytes");
  return w;
}

void ModelWeights::save(const std::string& path) const { write_file(path, serialize()); }

ModelWeights ModelWeights::load(const std::string& path) { return deserialize(read_file(path)); }

void validate_weights(const NetworkSpec& spec, const ModelWeights& weights) {
  if (weights.arch() != spec.arch || weights.n() != spec.n || weights.m() != spec.m) {
    throw DataError("checkpoint is " + std::string(to_string(weights.arch())) + " N=" +
                    std::to_string(weights.n()) + " M=" + std::to_string(weights.m()) +
                    ", expected " + std::string(to_string(spec.arch)) + " N=" +
                    std::to_string(spec.n) + " M=" + std::to_string(spec.m));
  }
  const auto expected = expected_params(spec);
  if (expected.size() != weights.entries().size()) {
    throw DataError("checkpoint has " + std::to_string(weights.entries().size()) +
                    " entries, expected " + std::to_string(expected.size()));
  }
  for (const auto& p : expected) {
    if (!weights.contains(p.path)) throw DataError("checkpoint lacks entry '" + p.path + "'");
    if (weights.at(p.path).value.shape() != p.shape) {
      throw DataError("checkpoint entry '" + p.path + "' has shape " +
                      weights.at(p.path).value.shape().str() + ", expected " + p.shape.str());
    }
  }
}

Var run_stack(Graph& g, const LayerStack& stack, ModelWeights& weights, Var x) {
  for (const LayerSpec& l : stack) x = layer_forward(g, l, weights, x);
  return x;
}

std::vector<Tensor> model_inputs(ArchitectureId arch, const FrameTensors& frame) {
  switch (arch) {
    case ArchitectureId::separate_y:
      return {frame.y};
    case ArchitectureId::separate_uv:
      return {frame.uv};
    case ArchitectureId::six_channel:
      return {pack_six(frame)};
    default:
      return {frame.y, frame.uv};
  }
}

std::vector<int> branch_strides(const NetworkSpec& spec) {
  const int trunk = stack_stride(spec.analysis.trunk);
  std::vector<int> out;
  for (const auto& b : spec.analysis.branches) out.push_back(stack_stride(b) * trunk);
  return out;
}

Var analysis_forward(Graph& g, const NetworkSpec& spec, ModelWeights& weights,
                     std::span<const Var> inputs) {
  const auto& branches = spec.analysis.branches;
  if (inputs.size() != branches.size()) {
    throw ShapeError(std::string(to_string(spec.arch)) + " analysis takes " +
                     std::to_string(branches.size()) + " input(s), got " +
                     std::to_string(inputs.size()));
  }
  const auto strides = branch_strides(spec);
  std::vector<Var> outs;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const Shape& s = inputs[i].shape();
    const int want = branches[i].front().in_channels;
    if (s.c != want) {
      throw ShapeError("analysis input " + std::to_string(i) + ": channel axis is " +
                       std::to_string(s.c) + ", expected " + std::to_string(want));
    }
    if (s.h % strides[i] != 0 || s.w % strides[i] != 0) {
      throw ShapeError("analysis input " + std::to_string(i) + " extent " + std::to_string(s.w) +
                       "x" + std::to_string(s.h) + " is not divisible by " +
                       std::to_string(strides[i]) + "; pad the frame (multiple of 64) first");
    }
    outs.push_back(run_stack(g, branches[i], weights, inputs[i]));
  }
  Var x = outs.size() == 1 ? outs[0] : concat_channels(outs);
  return run_stack(g, spec.analysis.trunk, weights, x);
}

std::vector<Var> synthesis_forward(Graph& g, const NetworkSpec& spec, ModelWeights& weights,
                                   Var latent) {
  if (latent.shape().c != spec.m) {
    throw ShapeError("synthesis: latent has " + std::to_string(latent.shape().c) +
                     " channels, expected M=" + std::to_string(spec.m));
  }
  Var x = run_stack(g, spec.synthesis.trunk, weights, latent);
  const auto& branches = spec.synthesis.branches;
  std::vector<Var> parts;
  if (branches.size() == 1) {
    parts.push_back(x);
  } else {
    std::vector<int> sizes;
    for (const auto& b : branches) sizes.push_back(b.front().in_channels);
    parts = split_channels(x, sizes);
  }
  std::vector<Var> outs;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    outs.push_back(run_stack(g, branches[i], weights, parts[i]));
  }
  return outs;
}

Var hyper_analysis(Graph& g, const NetworkSpec& spec, ModelWeights& weights, Var latent) {
  return run_stack(g, spec.hyper_analysis, weights, latent);
}

GaussianVars hyper_synthesis(Graph& g, const NetworkSpec& spec, ModelWeights& weights, Var hyper,
                             const Shape& latent_shape) {
  Var out = run_stack(g, spec.hyper_synthesis, weights, hyper);
  if (out.shape().h != latent_shape.h || out.shape().w != latent_shape.w) {
    out = crop(out, latent_shape.h, latent_shape.w);
  }
  const int sizes[] = {spec.m, spec.m};
  auto parts = split_channels(out, sizes);
  return {parts[0], add_scalar(softplus(parts[1]), kScaleFloor)};
}

GaussianVars hyper_prior(Graph& g, ModelWeights& weights, const Shape& shape) {
  Var mean = broadcast_channels(g.param(weights.at("prior.mean")), shape);
  Var scale =
      add_scalar(softplus(broadcast_channels(g.param(weights.at("prior.scale")), shape)),
                 kScaleFloor);
  return {mean, scale};
}

}  // namespace ydlc
