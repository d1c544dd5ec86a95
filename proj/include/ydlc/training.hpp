#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ydlc/autograd.hpp"
#include "ydlc/color.hpp"
#include "ydlc/model.hpp"

namespace ydlc {

struct DistortionWeights {
  double y = 8.0;
  double u = 2.0;
  double v = 2.0;

  double total() const { return y + u + v; }
  static DistortionWeights luma_heavy() { return {8.0, 2.0, 2.0}; }
  static DistortionWeights chroma_boosted() { return {6.0, 3.0, 3.0}; }
};

// (w_Y MSE_Y + w_U MSE_U + w_V MSE_V) / (w_Y + w_U + w_V), with MSE measured
// on the 8-bit sample scale.
double weighted_distortion(const PlaneQuality& mse, const DistortionWeights& w);

struct TrainConfig {
  ArchitectureId arch = ArchitectureId::proposed_prelu;
  int n = 32;
  int m = 48;
  double beta = 0.01;
  DistortionWeights weights = DistortionWeights::luma_heavy();
  long steps = 10000;
  int batch = 8;
  int patch = 64;
  double lr = 1e-4;
  // -1 means steps / 2.
  long lr_drop_step = -1;
  double lr_dropped = 1e-5;
  std::uint64_t seed = 1;
  long log_every = 100;
  long checkpoint_every = 0;
  std::string checkpoint;
  std::string log;
  // Empty for the built-in synthetic set, otherwise a raw I420 file.
  std::string data;
  int data_width = 0;
  int data_height = 0;
  int synthetic_frames = 64;
  int synthetic_size = 128;

  long drop_step() const { return lr_drop_step < 0 ? steps / 2 : lr_drop_step; }
  double lr_at(long step) const { return step < drop_step() ? lr : lr_dropped; }
  // Throws UsageError naming the offending field.
  void validate() const;
};

// "key = value" lines; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& config);

struct Dataset {
  std::vector<Yuv420Frame> frames;
};

// Procedural RGB scenes (gradients, shapes, stripes, sensor noise) converted
// to 4:2:0. Same seed, same frames.
Dataset synthetic_dataset(int count, int width, int height, std::uint64_t seed);
Dataset load_dataset(const TrainConfig& config);

// Batch of random patches at even offsets.
FrameTensors sample_patches(const Dataset& data, int batch, int patch, std::mt19937_64& rng);

Tensor uniform_noise(const Shape& shape, std::mt19937_64& rng);

// Differentiable weighted distortion between reconstruction and target
// components, each given as (prediction, target) with a weight.
struct ComponentPair {
  Var prediction;
  Var target;
  double weight;
};
Var weighted_distortion(std::span<const ComponentPair> components);

// Bits of the noisy latent and hyper-latent per luma pixel.
Var rate_term(Var latent, const GaussianVars& latent_model, Var hyper, const GaussianVars& hyper_model,
              double luma_pixels);

struct RdTerms {
  Var loss;
  Var rate;
  Var distortion;
};

// Training-path forward: analysis, additive uniform noise on both latents,
// hyperprior, synthesis and L = R + beta * D.
RdTerms rd_forward(Graph& g, const NetworkSpec& spec, ModelWeights& weights,
                   const FrameTensors& batch, double beta, const DistortionWeights& dw,
                   std::mt19937_64& noise_rng);

struct TrainRecord {
  long step = 0;
  double rate = 0.0;
  double distortion = 0.0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  // One record per log interval, holding interval means.
  std::vector<TrainRecord> log;
  // Loss of every step.
  std::vector<double> losses;
};

using TrainCallback = std::function<void(const TrainRecord&)>;

TrainResult train(const TrainConfig& config, const Dataset& data, const TrainCallback& on_log = {});

std::string train_log_csv(const std::vector<TrainRecord>& log);

// Trailing moving average over `window` values.
std::vector<double> smooth(std::span<const double> values, std::size_t window);

}  // namespace ydlc
