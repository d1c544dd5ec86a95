#include "ydlc/optim.hpp"

#include <cmath>

namespace ydlc {

void adam_step(std::span<Param* const> params, const AdamOptions& opts) {
  for (Param* p : params) {
    ++p->step;
    const double c1 = 1.0 - std::pow(static_cast<double>(opts.beta1), p->step);
    const double c2 = 1.0 - std::pow(static_cast<double>(opts.beta2), p->step);
    const float step_size = static_cast<float>(opts.lr / c1);
    const float root_c2 = static_cast<float>(std::sqrt(c2));
    float* value = p->value.raw();
    float* grad = p->grad.raw();
    float* m = p->m.raw();
    float* v = p->v.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0f - opts.beta1) * grad[i];
      v[i] = opts.beta2 * v[i] + (1.0f - opts.beta2) * grad[i] * grad[i];
      value[i] -= step_size * m[i] / (std::sqrt(v[i]) / root_c2 + opts.eps);
      grad[i] = 0.0f;
    }
  }
}

}  // namespace ydlc
