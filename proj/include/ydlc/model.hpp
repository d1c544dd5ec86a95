#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ydlc/autograd.hpp"
#include "ydlc/color.hpp"
#include "ydlc/network.hpp"

namespace ydlc {

// Trainable parameters of one network, keyed by "<layer path>.<role>".
// Roles: weight/bias (convolutions), beta/gamma (GDN, stored unconstrained),
// slope (PReLU), and prior.mean / prior.scale for the hyper-latent prior.
class ModelWeights {
 public:
  ModelWeights() = default;
  ModelWeights(ArchitectureId arch, int n, int m) : arch_(arch), n_(n), m_(m) {}

  // Convolutions ~ N(0, 2 / fan_in), biases 0, GDN beta 1 and gamma 0.1 on
  // the diagonal, PReLU slopes 0.25.
  static ModelWeights initialize(const NetworkSpec& spec, std::uint64_t seed);

  ArchitectureId arch() const { return arch_; }
  int n() const { return n_; }
  int m() const { return m_; }

  Param& at(const std::string& path);
  const Param& at(const std::string& path) const;
  bool contains(const std::string& path) const { return entries_.count(path) != 0; }
  void insert(const std::string& path, Tensor value);

  const std::map<std::string, Param>& entries() const { return entries_; }
  std::vector<Param*> params();
  std::size_t scalar_count() const;

  // Checkpoint container ("YDLC"). Adam moments are not stored.
  std::vector<std::uint8_t> serialize() const;
  static ModelWeights deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static ModelWeights load(const std::string& path);

 private:
  ArchitectureId arch_ = ArchitectureId::proposed_prelu;
  int n_ = 0;
  int m_ = 0;
  std::map<std::string, Param> entries_;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Checks the weights carry exactly one entry set per layer of `spec`.
void validate_weights(const NetworkSpec& spec, const ModelWeights& weights);

Var run_stack(Graph& g, const LayerStack& stack, ModelWeights& weights, Var x);

// Inputs in analysis-branch order: {Y, UV} for branched nets, a single tensor
// otherwise. Spatial extents must be divisible by each branch's total stride.
Var analysis_forward(Graph& g, const NetworkSpec& spec, ModelWeights& weights,
                     std::span<const Var> inputs);
std::vector<Var> synthesis_forward(Graph& g, const NetworkSpec& spec, ModelWeights& weights,
                                   Var latent);

struct GaussianVars {
  Var mean;
  Var scale;
};

Var hyper_analysis(Graph& g, const NetworkSpec& spec, ModelWeights& weights, Var latent);
// (mean, scale) per latent element; scale = softplus(raw) + 0.11. Outputs are
// cropped to `latent_shape` when the hyper ladder overshoots.
GaussianVars hyper_synthesis(Graph& g, const NetworkSpec& spec, ModelWeights& weights, Var hyper,
                             const Shape& latent_shape);
// Per-channel learned Gaussian for the hyper-latent, broadcast to `shape`.
GaussianVars hyper_prior(Graph& g, ModelWeights& weights, const Shape& shape);

// Analysis inputs of `arch` for a (padded) frame: {Y} for separate-y, {UV}
// for separate-uv, the six-channel pack, or {Y, UV} for branched nets.
std::vector<Tensor> model_inputs(ArchitectureId arch, const FrameTensors& frame);

// Total stride of each analysis branch (16 for the luma path, 8 for chroma of
// branched nets).
std::vector<int> branch_strides(const NetworkSpec& spec);

}  // namespace ydlc
