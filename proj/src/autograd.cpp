#include "ydlc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include "ydlc/error.hpp"
#include "ydlc/gaussian.hpp"

namespace ydlc {

Param::Param(Tensor init)
    : value(std::move(init)),
      grad(value.shape()),
      m(value.shape()),
      v(value.shape()) {}

const Tensor& Var::value() const { return graph_->value(id_); }
Shape Var::shape() const { return graph_->value(id_).shape(); }

Var Graph::input(Tensor value, bool requires_grad) {
  Node node;
  node.kind = "input";
  node.value = std::move(value);
  node.needs_grad = requires_grad && record_;
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Param& p) {
  Node node;
  node.kind = "param";
  node.value = p.value;
  node.param = &p;
  node.needs_grad = record_;
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(std::string_view kind, Tensor value, std::vector<int> inputs, BackwardFn fn) {
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  if (record_) {
    node.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](int i) { return nodes_[i].needs_grad; });
    if (node.needs_grad) node.backward = std::move(fn);
  }
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_of(int id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value.shape() || node.grad.empty() != node.value.empty()) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

const Tensor& Graph::grad(Var v) { return grad_of(v.id()); }

void Graph::backward(Var loss) {
  if (loss.id() < 0 || static_cast<std::size_t>(loss.id()) >= nodes_.size()) {
    throw ShapeError("backward: loss node does not belong to this graph");
  }
  if (!value(loss).shape().scalar()) {
    throw ShapeError("backward: loss must be scalar [1,1,1,1], got " + value(loss).shape().str());
  }
  if (!record_) throw InvariantError("backward: graph was built without gradient recording");
  for (Node& node : nodes_) node.grad = Tensor();
  visits_ = 0;
  grad_of(loss.id()).fill(1.0f);
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.empty()) continue;
    ++visits_;
    if (node.backward) node.backward(*this, id);
    if (node.param != nullptr) node.param->grad.accumulate(nodes_[id].grad);
  }
}

namespace {

Graph& graph_of(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ShapeError("operands belong to different graphs");
  return a.graph();
}

void require_same_shape(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return;
  const char* axis = a.n != b.n ? "batch" : a.c != b.c ? "channel" : a.h != b.h ? "height" : "width";
  throw ShapeError(std::string(op) + ": " + axis + " mismatch " + a.str() + " vs " + b.str());
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx.
template <class F, class D>
Var unary(std::string_view kind, Var a, F f, D deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id();
  return a.graph().record(kind, std::move(y), {ia}, [ia, deriv](Graph& g, int self) {
    if (!g.needs_grad(ia)) return;
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_of(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("add", a.shape(), b.shape());
  Tensor y = a.value();
  y.accumulate(b.value());
  const int ia = a.id(), ib = b.id();
  return g.record("add", std::move(y), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    if (g.needs_grad(ia)) g.grad_of(ia).accumulate(gy);
    if (g.needs_grad(ib)) g.grad_of(ib).accumulate(gy);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("sub", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  const int ia = a.id(), ib = b.id();
  return g.record("sub", std::move(y), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    if (g.needs_grad(ia)) g.grad_of(ia).accumulate(gy);
    if (g.needs_grad(ib)) {
      Tensor& gb = g.grad_of(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("mul", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  const int ia = a.id(), ib = b.id();
  return g.record("mul", std::move(y), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Tensor& x = g.value(ia);
    const Tensor& z = g.value(ib);
    if (g.needs_grad(ia)) {
      Tensor& ga = g.grad_of(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * z[i];
    }
    if (g.needs_grad(ib)) {
      Tensor& gb = g.grad_of(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * x[i];
    }
  });
}

Var div(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape("div", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] / z[i];
  const int ia = a.id(), ib = b.id();
  return g.record("div", std::move(y), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Tensor& z = g.value(ib);
    const Tensor& y = g.value(self);
    if (g.needs_grad(ia)) {
      Tensor& ga = g.grad_of(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] / z[i];
    }
    if (g.needs_grad(ib)) {
      Tensor& gb = g.grad_of(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i] * y[i] / z[i];
    }
  });
}

Var square(Var a) {
  return unary(
      "square", a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

Var sqrt(Var a) {
  for (float x : a.value().data()) {
    if (!(x >= 0.0f)) throw InvariantError("sqrt: negative input " + std::to_string(x));
  }
  return unary(
      "sqrt", a, [](float x) { return std::sqrt(x); },
      [](float, float y) { return 0.5f / y; });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](float x) { return std::abs(x); },
      [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Var scale(Var a, float s) {
  return unary(
      "scale", a, [s](float x) { return s * x; }, [s](float, float) { return s; });
}

Var add_scalar(Var a, float s) {
  return unary(
      "add_scalar", a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Var softplus(Var a) {
  return unary(
      "softplus", a,
      [](float x) { return x > 20.0f ? x : std::log1p(std::exp(x)); },
      [](float x, float) { return 1.0f / (1.0f + std::exp(-x)); });
}

Var lower_bound(Var a, float bound) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(x[i], bound);
  const int ia = a.id();
  return a.graph().record("lower_bound", std::move(y), {ia}, [ia, bound](Graph& g, int self) {
    if (!g.needs_grad(ia)) return;
    const Tensor& x = g.value(ia);
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_of(ia);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] >= bound || gy[i] < 0.0f) gx[i] += gy[i];
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Graph& g = parts[0].graph();
  Shape out = parts[0].shape();
  out.c = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw ShapeError("concat_channels: operands belong to different graphs");
    const Shape& s = p.shape();
    if (s.n != out.n) throw ShapeError("concat_channels: batch mismatch " + s.str());
    if (s.h != out.h) throw ShapeError("concat_channels: height mismatch " + s.str());
    if (s.w != out.w) throw ShapeError("concat_channels: width mismatch " + s.str());
    out.c += s.c;
    ids.push_back(p.id());
  }
  Tensor y(out);
  const std::size_t plane = out.plane();
  for (int n = 0; n < out.n; ++n) {
    int c0 = 0;
    for (const Var& p : parts) {
      const Tensor& x = p.value();
      std::copy_n(x.plane(n, 0), plane * x.shape().c, y.plane(n, c0));
      c0 += x.shape().c;
    }
  }
  return g.record("concat", std::move(y), ids, [ids](Graph& g, int self) {
    const Tensor& gy = g.grad_of(self);
    const Shape& s = gy.shape();
    const std::size_t plane = s.plane();
    int c0 = 0;
    for (int id : ids) {
      const int c = g.value(id).shape().c;
      if (g.needs_grad(id)) {
        Tensor& gx = g.grad_of(id);
        for (int n = 0; n < s.n; ++n) {
          const float* src = gy.plane(n, c0);
          float* dst = gx.plane(n, 0);
          for (std::size_t i = 0; i < plane * c; ++i) dst[i] += src[i];
        }
      }
      c0 += c;
    }
  });
}

std::vector<Var> split_channels(Var a, std::span<const int> sizes) {
  const Shape s = a.shape();
  if (std::accumulate(sizes.begin(), sizes.end(), 0) != s.c) {
    throw ShapeError("split_channels: channel partition does not sum to " + std::to_string(s.c));
  }
  std::vector<Var> out;
  const std::size_t plane = s.plane();
  const int ia = a.id();
  int c0 = 0;
  for (int c : sizes) {
    Tensor y({s.n, c, s.h, s.w});
    for (int n = 0; n < s.n; ++n) std::copy_n(a.value().plane(n, c0), plane * c, y.plane(n, 0));
    out.push_back(a.graph().record("split", std::move(y), {ia}, [ia, c0](Graph& g, int self) {
      if (!g.needs_grad(ia)) return;
      const Tensor& gy = g.grad_of(self);
      Tensor& gx = g.grad_of(ia);
      const std::size_t count = gy.shape().plane() * gy.shape().c;
      for (int n = 0; n < gy.shape().n; ++n) {
        const float* src = gy.plane(n, 0);
        float* dst = gx.plane(n, c0);
        for (std::size_t i = 0; i < count; ++i) dst[i] += src[i];
      }
    }));
    c0 += c;
  }
  return out;
}

Var crop(Var a, int h, int w) {
  const Shape s = a.shape();
  if (h > s.h || w > s.w || h < 0 || w < 0) {
    throw ShapeError("crop: window " + std::to_string(h) + "x" + std::to_string(w) +
                     " exceeds " + s.str());
  }
  Tensor y({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int yy = 0; yy < h; ++yy)
        std::copy_n(a.value().plane(n, c) + static_cast<std::size_t>(yy) * s.w, w,
                    y.plane(n, c) + static_cast<std::size_t>(yy) * w);
  const int ia = a.id();
  return a.graph().record("crop", std::move(y), {ia}, [ia](Graph& g, int self) {
    if (!g.needs_grad(ia)) return;
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_of(ia);
    const Shape& o = gy.shape();
    const int wx = gx.shape().w;
    for (int n = 0; n < o.n; ++n)
      for (int c = 0; c < o.c; ++c)
        for (int yy = 0; yy < o.h; ++yy) {
          const float* src = gy.plane(n, c) + static_cast<std::size_t>(yy) * o.w;
          float* dst = gx.plane(n, c) + static_cast<std::size_t>(yy) * wx;
          for (int x = 0; x < o.w; ++x) dst[x] += src[x];
        }
  });
}

Var broadcast_channels(Var a, Shape target) {
  const Shape s = a.shape();
  if (s.n != 1 || s.h != 1 || s.w != 1 || s.c != target.c) {
    throw ShapeError("broadcast_channels: expected [1," + std::to_string(target.c) + ",1,1], got " +
                     s.str());
  }
  Tensor y(target);
  const std::size_t plane = target.plane();
  for (int n = 0; n < target.n; ++n)
    for (int c = 0; c < target.c; ++c) std::fill_n(y.plane(n, c), plane, a.value()[c]);
  const int ia = a.id();
  return a.graph().record("broadcast", std::move(y), {ia}, [ia](Graph& g, int self) {
    if (!g.needs_grad(ia)) return;
    const Tensor& gy = g.grad_of(self);
    Tensor& gx = g.grad_of(ia);
    const Shape& t = gy.shape();
    for (int n = 0; n < t.n; ++n)
      for (int c = 0; c < t.c; ++c) {
        const float* p = gy.plane(n, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < t.plane(); ++i) acc += p[i];
        gx[c] += static_cast<float>(acc);
      }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (float x : a.value().data()) acc += x;
  const int ia = a.id();
  return a.graph().record("sum", Tensor::scalar(static_cast<float>(acc)), {ia},
                          [ia](Graph& g, int self) {
                            if (!g.needs_grad(ia)) return;
                            const float gy = g.grad_of(self)[0];
                            for (float& v : g.grad_of(ia).data()) v += gy;
                          });
}

Var mean(Var a) {
  const std::size_t count = a.value().size();
  if (count == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (float x : a.value().data()) acc += x;
  const int ia = a.id();
  return a.graph().record("mean", Tensor::scalar(static_cast<float>(acc / count)), {ia},
                          [ia, count](Graph& g, int self) {
                            if (!g.needs_grad(ia)) return;
                            const float gy = g.grad_of(self)[0] / static_cast<float>(count);
                            for (float& v : g.grad_of(ia).data()) v += gy;
                          });
}

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

Var prelu(Var x, Var slope) {
  Graph& g = graph_of(x, slope);
  const Shape s = x.shape();
  if (slope.shape() != Shape{1, s.c, 1, 1}) {
    throw ShapeError("prelu: slope must be [1," + std::to_string(s.c) + ",1,1], got " +
                     slope.shape().str());
  }
  const Tensor& in = x.value();
  const Tensor& a = slope.value();
  Tensor y(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const float* src = in.plane(n, c);
      float* dst = y.plane(n, c);
      const float ac = a[c];
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] >= 0.0f ? src[i] : ac * src[i];
    }
  const int ix = x.id(), ia = slope.id();
  return g.record("prelu", std::move(y), {ix, ia}, [ix, ia](Graph& g, int self) {
    const Tensor& in = g.value(ix);
    const Tensor& a = g.value(ia);
    const Tensor& gy = g.grad_of(self);
    const Shape& s = in.shape();
    const std::size_t plane = s.plane();
    const bool want_x = g.needs_grad(ix), want_a = g.needs_grad(ia);
    Tensor* gx = want_x ? &g.grad_of(ix) : nullptr;
    Tensor* ga = want_a ? &g.grad_of(ia) : nullptr;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const float* src = in.plane(n, c);
        const float* gp = gy.plane(n, c);
        const float ac = a[c];
        if (gx) {
          float* dst = gx->plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i] < 0.0f ? ac * gp[i] : gp[i];
        }
        if (ga) {
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            if (src[i] < 0.0f) acc += static_cast<double>(gp[i]) * src[i];
          }
          (*ga)[c] += static_cast<float>(acc);
        }
      }
  });
}

Var gdn(Var x, Var beta, Var gamma, bool inverse) {
  const int c = x.shape().c;
  if (beta.shape() != Shape{1, c, 1, 1}) throw ShapeError("gdn: beta shape " + beta.shape().str());
  if (gamma.shape() != Shape{c, c, 1, 1}) {
    throw ShapeError("gdn: gamma shape " + gamma.shape().str());
  }
  for (float b : beta.value().data()) {
    if (!(b >= 1e-6f)) throw InvariantError("gdn: beta below 1e-6 (" + std::to_string(b) + ")");
  }
  for (float v : gamma.value().data()) {
    if (!(v >= 0.0f)) throw InvariantError("gdn: negative gamma (" + std::to_string(v) + ")");
  }
  Var norm = sqrt(conv2d(square(x), gamma, beta, 1, 0));
  return inverse ? mul(x, norm) : div(x, norm);
}

Var gaussian_rate_bits(Var value, Var mean, Var scale) {
  Graph& g = graph_of(value, mean);
  graph_of(value, scale);
  require_same_shape("gaussian_rate_bits", value.shape(), mean.shape());
  require_same_shape("gaussian_rate_bits", value.shape(), scale.shape());
  const Tensor& v = value.value();
  const Tensor& mu = mean.value();
  const Tensor& sigma = scale.value();
  // The forward pass keeps d(-log2 p)/dd and d(-log2 p)/dsigma per element.
  const bool record = g.recording();
  auto dd = std::make_shared<std::vector<float>>(record ? v.size() : 0);
  auto ds = std::make_shared<std::vector<float>>(record ? v.size() : 0);
  double bits = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = sigma[i];
    if (!(s >= kScaleFloor)) {
      throw InvariantError("gaussian_rate_bits: scale below floor (" + std::to_string(sigma[i]) +
                           ")");
    }
    const double p = std::max(interval_probability(v[i], mu[i], s), kLikelihoodFloor);
    bits -= std::log2(p);
    if (!record) continue;
    const double d = static_cast<double>(v[i]) - mu[i];
    const double hi = (d + 0.5) / s;
    const double lo = (d - 0.5) / s;
    const double ph = normal_pdf(hi), pl = normal_pdf(lo);
    // d(-log2 p)/dp; the floor passes gradient since it always points upward.
    const double dl_dp = -1.0 / (p * std::numbers::ln2);
    (*dd)[i] = static_cast<float>(dl_dp * (ph - pl) / s);
    (*ds)[i] = static_cast<float>(dl_dp * (lo * pl - hi * ph) / s);
  }
  const int iv = value.id(), im = mean.id(), is = scale.id();
  return g.record("gaussian_rate", Tensor::scalar(static_cast<float>(bits)), {iv, im, is},
                  [iv, im, is, dd, ds](Graph& g, int self) {
    const float gy = g.grad_of(self)[0];
    const std::size_t n = dd->size();
    if (g.needs_grad(iv)) {
      float* gv = g.grad_of(iv).raw();
      for (std::size_t i = 0; i < n; ++i) gv[i] += gy * (*dd)[i];
    }
    if (g.needs_grad(im)) {
      float* gm = g.grad_of(im).raw();
      for (std::size_t i = 0; i < n; ++i) gm[i] -= gy * (*dd)[i];
    }
    if (g.needs_grad(is)) {
      float* gs = g.grad_of(is).raw();
      for (std::size_t i = 0; i < n; ++i) gs[i] += gy * (*ds)[i];
    }
  });
}

}  // namespace ydlc
