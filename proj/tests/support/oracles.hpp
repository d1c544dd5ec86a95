#pragma once

// Double-precision reference implementations used as test oracles. They are
// written directly from the mathematical definitions and share no code with
// the library's kernels.

#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ydlc/model.hpp"
#include "ydlc/tensor.hpp"

namespace oracle {

using ydlc::Shape;

// Extended precision: central differences of an O(100) loss must resolve
// gradients near 1e-7.
using real = long double;

struct DTensor {
  Shape s;
  std::vector<real> v;

  DTensor() = default;
  explicit DTensor(Shape shape, real fill = 0.0) : s(shape), v(shape.size(), fill) {}
  explicit DTensor(const ydlc::Tensor& t) : s(t.shape()), v(t.data().begin(), t.data().end()) {}

  real& at(int n, int c, int y, int x) { return v[idx(n, c, y, x)]; }
  real at(int n, int c, int y, int x) const { return v[idx(n, c, y, x)]; }
  std::size_t idx(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
  }
  ydlc::Tensor to_float() const;
};

// Cross-correlation with zero padding K/2; bias has Cout entries.
DTensor conv_direct(const DTensor& x, const DTensor& w, const DTensor& b, int stride);
// Zero-insertion upsampling by `stride`, then a direct convolution with the
// spatially flipped kernel. weight: [Cin, Cout, K, K].
DTensor tconv_zero_insert(const DTensor& x, const DTensor& w, const DTensor& b, int stride);
DTensor gdn(const DTensor& x, const DTensor& beta, const DTensor& gamma, bool inverse);
DTensor prelu(const DTensor& x, const DTensor& slope);
DTensor concat(const std::vector<DTensor>& parts);
std::vector<DTensor> split(const DTensor& x, const std::vector<int>& sizes);

real normal_cdf(real x);
// Unfloored Gaussian mass of [v - 0.5, v + 0.5].
real bin_probability(real v, real mean, real scale);
// Sum of -log2 max(p, 2^-16).
real rate_bits(const DTensor& v, const DTensor& mean, const DTensor& scale);
real softplus(real x);

real mse(const DTensor& a, const DTensor& b);

// While a sink is installed, every piecewise function above appends the branch
// it took per element (PReLU sign, probability floor, GDN beta floor). Two
// evaluations with equal traces lie in the same smooth piece.
void trace_regimes(std::vector<bool>* sink);

// Full training-path loss of a model, re-derived from the layer specs.
struct RdOracle {
  real loss = 0.0;
  real rate = 0.0;
  real distortion = 0.0;
};
RdOracle rd_loss(const ydlc::NetworkSpec& spec, const std::map<std::string, DTensor>& params,
                 const std::vector<DTensor>& inputs, const DTensor& hyper_noise,
                 const DTensor& latent_noise, double beta, const double weights[3]);

// BD-rate by exact cubic interpolation through 4 points per curve
// (Lagrange form) and a fine trapezoid over the PSNR overlap.
double bd_rate_lagrange(std::span<const double> anchor_rate, std::span<const double> anchor_psnr,
                        std::span<const double> test_rate, std::span<const double> test_psnr,
                        int samples = 10000);

}  // namespace oracle

namespace gradcheck {

using oracle::real;

struct Stats {
  std::size_t total = 0;
  std::size_t passed = 0;
  // Sampled coordinates whose difference stencil crossed a kink.
  std::size_t crossings = 0;
  double worst = 0.0;
  double fraction() const { return total == 0 ? 1.0 : static_cast<double>(passed) / total; }
};

inline constexpr double kStep = 1e-3;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kMinFraction = 0.99;

// rel = |a - n| / max(|a|, |n|, floor) per coordinate.
void compare(std::span<const float> analytic, std::span<const real> numeric, real floor,
             Stats& stats);

// Central differences of `f` at `x` for the given coordinates.
std::vector<real> central_difference(const std::function<real(std::vector<real>&)>& f,
                                       std::vector<real> x, std::span<const std::size_t> coords,
                                       real h = kStep);

struct Case {
  std::string name;
  std::vector<ydlc::Tensor> leaves;
  // Analytic float gradients of the loss w.r.t. each leaf.
  std::function<std::vector<ydlc::Tensor>(const std::vector<ydlc::Tensor>&)> gradients;
  // Double loss from (perturbed) leaf values.
  std::function<real(const std::vector<oracle::DTensor>&)> reference;
  // Coordinates checked per leaf; 0 means all. Coordinates whose stencil
  // crosses a kink are replaced by further samples.
  std::size_t max_coords = 0;
};

using Builder = std::function<ydlc::Var(ydlc::Graph&, const std::vector<ydlc::Var>&)>;
// Gradients of a graph-built loss whose leaves are graph inputs.
std::function<std::vector<ydlc::Tensor>(const std::vector<ydlc::Tensor>&)> via_graph(Builder b);

Stats run(const Case& c, std::uint64_t seed = 1);

// Every layer kind and both loss terms, plus a composed model.
std::vector<Case> standard_cases(std::uint64_t seed);

ydlc::Tensor random_tensor(ydlc::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

}  // namespace gradcheck
