#pragma once

#include <span>

#include "ydlc/autograd.hpp"

namespace ydlc {

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// One bias-corrected Adam update per parameter, then clears the gradients.
void adam_step(std::span<Param* const> params, const AdamOptions& opts);

}  // namespace ydlc
