#include "ydlc/network.hpp"

#include "ydlc/error.hpp"

namespace ydlc {

std::string_view to_string(ArchitectureId id) {
  switch (id) {
    case ArchitectureId::separate_y: return "separate-y";
    case ArchitectureId::separate_uv: return "separate-uv";
    case ArchitectureId::six_channel: return "six-channel";
    case ArchitectureId::proposed_gdn: return "proposed-gdn";
    case ArchitectureId::proposed_mixed: return "proposed-mixed";
    case ArchitectureId::proposed_prelu: return "proposed-prelu";
  }
  throw InvariantError("unhandled architecture id");
}

ArchitectureId parse_architecture(std::string_view name) {
  for (ArchitectureId id : kAllArchitectures) {
    if (to_string(id) == name) return id;
  }
  throw UsageError("unknown architecture '" + std::string(name) + "'");
}

ArchitectureId architecture_from_byte(std::uint8_t value) {
  if (value > static_cast<std::uint8_t>(ArchitectureId::proposed_prelu)) {
    throw DataError("unknown architecture id byte " + std::to_string(value));
  }
  return static_cast<ArchitectureId>(value);
}

bool is_branched(ArchitectureId id) {
  return id == ArchitectureId::proposed_gdn || id == ArchitectureId::proposed_mixed ||
         id == ArchitectureId::proposed_prelu;
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::tconv: return "tconv";
    case LayerKind::conv1x1: return "conv1x1";
    case LayerKind::gdn: return "gdn";
    case LayerKind::igdn: return "igdn";
    case LayerKind::prelu: return "prelu";
  }
  return "?";
}

std::vector<int> NetworkSpec::io_channels() const {
  std::vector<int> out;
  for (const LayerStack& b : analysis.branches) out.push_back(b.front().in_channels);
  return out;
}

namespace {

LayerSpec conv(std::string name, int cin, int cout, int k, int s) {
  return {LayerKind::conv, cin, cout, k, s, std::move(name)};
}
LayerSpec tconv(std::string name, int cin, int cout, int k, int s) {
  return {LayerKind::tconv, cin, cout, k, s, std::move(name)};
}
LayerSpec conv1x1(std::string name, int cin, int cout) {
  return {LayerKind::conv1x1, cin, cout, 1, 1, std::move(name)};
}
LayerSpec act(LayerKind kind, std::string name, int c) { return {kind, c, c, 1, 1, std::move(name)}; }

// Analysis trunk T_a^r: N->N 5x5/2, act, N->N 5x5/2, act, N->M 5x5/2.
void append_analysis_trunk(LayerStack& s, int n, int m, LayerKind a) {
  s.push_back(conv("analysis.trunk.conv1", n, n, 5, 2));
  s.push_back(act(a, "analysis.trunk.act1", n));
  s.push_back(conv("analysis.trunk.conv2", n, n, 5, 2));
  s.push_back(act(a, "analysis.trunk.act2", n));
  s.push_back(conv("analysis.trunk.conv3", n, m, 5, 2));
}

// Synthesis trunk T_s^r: M->N 5x5/2, act, N->N 5x5/2, act, N->N 5x5/2.
void append_synthesis_trunk(LayerStack& s, int n, int m, LayerKind a) {
  s.push_back(tconv("synthesis.trunk.tconv1", m, n, 5, 2));
  s.push_back(act(a, "synthesis.trunk.act1", n));
  s.push_back(tconv("synthesis.trunk.tconv2", n, n, 5, 2));
  s.push_back(act(a, "synthesis.trunk.act2", n));
  s.push_back(tconv("synthesis.trunk.tconv3", n, n, 5, 2));
}

// Channel-aligned nets: the trunk of the RGB-style transform with the outer
// layer widened (and for chroma, shrunk to 3x3).
void build_aligned(NetworkSpec& spec, int channels, int kernel) {
  const int n = spec.n, m = spec.m;
  spec.analysis.branches = {{
      conv("analysis.input.conv0", channels, n, kernel, 2),
      act(LayerKind::gdn, "analysis.input.act0", n),
  }};
  append_analysis_trunk(spec.analysis.trunk, n, m, LayerKind::gdn);

  append_synthesis_trunk(spec.synthesis.trunk, n, m, LayerKind::igdn);
  spec.synthesis.trunk.push_back(act(LayerKind::igdn, "synthesis.trunk.act3", n));
  spec.synthesis.branches = {{tconv("synthesis.output.tconv0", n, channels, kernel, 2)}};
}

// Branched nets. `outer` is used everywhere except the two sites adjacent to
// the 1x1 layers, which use `mix`.
void build_branched(NetworkSpec& spec, LayerKind outer_a, LayerKind outer_s, LayerKind mix_a,
                    LayerKind mix_s) {
  const int n = spec.n, m = spec.m;
  spec.analysis.branches = {
      {conv("analysis.luma.conv", 1, n, 5, 2), act(outer_a, "analysis.luma.act", n)},
      {conv("analysis.chroma.conv", 2, n, 3, 1), act(outer_a, "analysis.chroma.act", n)},
  };
  spec.analysis.trunk.push_back(conv1x1("analysis.mix.conv1x1", 2 * n, n));
  spec.analysis.trunk.push_back(act(mix_a, "analysis.mix.act", n));
  append_analysis_trunk(spec.analysis.trunk, n, m, outer_a);

  append_synthesis_trunk(spec.synthesis.trunk, n, m, outer_s);
  spec.synthesis.trunk.push_back(act(mix_s, "synthesis.mix.act", n));
  spec.synthesis.trunk.push_back(conv1x1("synthesis.mix.conv1x1", n, 2 * n));
  spec.synthesis.branches = {
      {act(outer_s, "synthesis.luma.act", n), tconv("synthesis.luma.tconv", n, 1, 5, 2)},
      {act(outer_s, "synthesis.chroma.act", n), tconv("synthesis.chroma.tconv", n, 2, 3, 1)},
  };
}

void build_hyperprior(NetworkSpec& spec) {
  const int n = spec.n, m = spec.m;
  spec.hyper_analysis = {
      conv("hyper_analysis.conv1", m, n, 3, 1),
      act(LayerKind::prelu, "hyper_analysis.act1", n),
      conv("hyper_analysis.conv2", n, n, 5, 2),
      act(LayerKind::prelu, "hyper_analysis.act2", n),
      conv("hyper_analysis.conv3", n, n, 5, 2),
  };
  spec.hyper_synthesis = {
      tconv("hyper_synthesis.tconv1", n, n, 5, 2),
      act(LayerKind::prelu, "hyper_synthesis.act1", n),
      tconv("hyper_synthesis.tconv2", n, n, 5, 2),
      act(LayerKind::prelu, "hyper_synthesis.act2", n),
      tconv("hyper_synthesis.tconv3", n, 2 * m, 3, 1),
  };
}

void validate(const LayerSpec& l) {
  if (l.kind == LayerKind::conv1x1 && (l.kernel != 1 || l.stride != 1)) {
    throw InvariantError(l.name + ": conv1x1 must have kernel 1 and stride 1");
  }
  if (l.is_activation() && l.in_channels != l.out_channels) {
    throw InvariantError(l.name + ": activation must preserve channel count");
  }
}

void validate(const NetworkSpec& spec) {
  auto each = [](const LayerStack& s) {
    for (const LayerSpec& l : s) validate(l);
  };
  for (const auto& b : spec.analysis.branches) each(b);
  for (const auto& b : spec.synthesis.branches) each(b);
  each(spec.analysis.trunk);
  each(spec.synthesis.trunk);
  each(spec.hyper_analysis);
  each(spec.hyper_synthesis);
  if (spec.analysis.trunk.back().out_channels != spec.m) {
    throw InvariantError("analysis output width differs from M");
  }
  if (spec.synthesis.trunk.front().in_channels != spec.m) {
    throw InvariantError("synthesis input width differs from M");
  }
}

}  // namespace

NetworkSpec build_architecture(ArchitectureId id, int n, int m) {
  if (n < 1 || m < 1) throw UsageError("N and M must be >= 1");
  NetworkSpec spec{id, n, m, {}, {}, {}, {}};
  switch (id) {
    case ArchitectureId::separate_y: build_aligned(spec, 1, 5); break;
    case ArchitectureId::separate_uv: build_aligned(spec, 2, 3); break;
    case ArchitectureId::six_channel: build_aligned(spec, 6, 5); break;
    case ArchitectureId::proposed_gdn:
      build_branched(spec, LayerKind::gdn, LayerKind::igdn, LayerKind::gdn, LayerKind::igdn);
      break;
    case ArchitectureId::proposed_mixed:
      build_branched(spec, LayerKind::gdn, LayerKind::igdn, LayerKind::prelu, LayerKind::prelu);
      break;
    case ArchitectureId::proposed_prelu:
      build_branched(spec, LayerKind::prelu, LayerKind::prelu, LayerKind::prelu,
                     LayerKind::prelu);
      break;
    default: throw UsageError("unknown architecture id");
  }
  build_hyperprior(spec);
  validate(spec);
  return spec;
}

long long count_params(const LayerSpec& l) {
  const long long cin = l.in_channels, cout = l.out_channels, k = l.kernel;
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::tconv:
    case LayerKind::conv1x1: return cin * cout * k * k + cout;
    case LayerKind::gdn:
    case LayerKind::igdn: return cin * cin + cin;
    case LayerKind::prelu: return cin;
  }
  return 0;
}

long long count_params(const LayerStack& stack) {
  long long total = 0;
  for (const LayerSpec& l : stack) total += count_params(l);
  return total;
}

long long count_params(const NetworkSpec& spec) {
  long long total = count_params(spec.analysis.trunk) + count_params(spec.synthesis.trunk);
  for (const auto& b : spec.analysis.branches) total += count_params(b);
  for (const auto& b : spec.synthesis.branches) total += count_params(b);
  return total;
}

long long count_entropy_model_params(const NetworkSpec& spec) {
  return count_params(spec.hyper_analysis) + count_params(spec.hyper_synthesis) + 2LL * spec.n;
}

std::vector<const LayerSpec*> activation_sites(const NetworkSpec& spec) {
  std::vector<const LayerSpec*> out;
  auto each = [&out](const LayerStack& s) {
    for (const LayerSpec& l : s)
      if (l.is_activation()) out.push_back(&l);
  };
  for (const auto& b : spec.analysis.branches) each(b);
  each(spec.analysis.trunk);
  each(spec.synthesis.trunk);
  for (const auto& b : spec.synthesis.branches) each(b);
  return out;
}

}  // namespace ydlc
