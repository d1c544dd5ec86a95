#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ydlc {

// Numeric values are part of the checkpoint and bitstream formats.
enum class ArchitectureId : std::uint8_t {
  separate_y = 0,
  separate_uv = 1,
  six_channel = 2,
  proposed_gdn = 3,
  proposed_mixed = 4,
  proposed_prelu = 5,
};

inline constexpr ArchitectureId kAllArchitectures[] = {
    ArchitectureId::separate_y,   ArchitectureId::separate_uv,    ArchitectureId::six_channel,
    ArchitectureId::proposed_gdn, ArchitectureId::proposed_mixed, ArchitectureId::proposed_prelu,
};

std::string_view to_string(ArchitectureId id);
// Throws UsageError for unknown names.
ArchitectureId parse_architecture(std::string_view name);
ArchitectureId architecture_from_byte(std::uint8_t value);
bool is_branched(ArchitectureId id);

enum class LayerKind { conv, tconv, conv1x1, gdn, igdn, prelu };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind;
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
  // Stable path; parameter names are derived from it.
  std::string name;

  bool is_activation() const {
    return kind == LayerKind::gdn || kind == LayerKind::igdn || kind == LayerKind::prelu;
  }
};

using LayerStack = std::vector<LayerSpec>;

// Analysis: every branch runs on its own input, outputs are concatenated
// (when there are two), then the trunk runs. Synthesis: the trunk runs, its
// output is split by branch input width, then each branch runs.
struct TransformSpec {
  std::vector<LayerStack> branches;
  LayerStack trunk;
};

struct NetworkSpec {
  ArchitectureId arch;
  int n;
  int m;
  TransformSpec analysis;
  TransformSpec synthesis;
  LayerStack hyper_analysis;
  LayerStack hyper_synthesis;

  // Channel count of each analysis input (and synthesis output).
  std::vector<int> io_channels() const;
};

// Throws UsageError when n or m is < 1.
NetworkSpec build_architecture(ArchitectureId id, int n, int m);

long long count_params(const LayerSpec& layer);
long long count_params(const LayerStack& stack);
// Transform networks only (analysis + synthesis), the quantity audited by the
// parameter table.
long long count_params(const NetworkSpec& spec);
// Hyperprior stacks plus the per-channel hyper-latent prior.
long long count_entropy_model_params(const NetworkSpec& spec);

// Activation sites of the transform networks, in analysis-then-synthesis order.
std::vector<const LayerSpec*> activation_sites(const NetworkSpec& spec);

}  // namespace ydlc
