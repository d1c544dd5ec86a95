// Convolution kernels: im2col + GEMM, with transposed convolution expressed
// as the adjoint of the strided convolution.
#include <Eigen/Core>
#include <algorithm>

#include "ydlc/autograd.hpp"
#include "ydlc/error.hpp"

namespace ydlc {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

// Geometry of a "same"-padded strided correlation. `in_*` is the dense side,
// `out_*` the (possibly) decimated side.
struct ConvGeometry {
  int channels;
  int in_h, in_w;
  int out_h, out_w;
  int kernel, stride, pad;

  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h * out_w; }
};

// col[(c*K + ky)*K + kx, oy*out_w + ox] = in[c, oy*s + ky - p, ox*s + kx - p]
// Output columns [lo, hi) whose input tap at kernel column kx is inside the plane.
std::pair<int, int> valid_columns(const ConvGeometry& g, int kx) {
  const int off = kx - g.pad;
  const int lo = std::min(off >= 0 ? 0 : (-off + g.stride - 1) / g.stride, g.out_w);
  const int last = g.in_w - 1 - off;
  const int hi = last < 0 ? lo : std::clamp(last / g.stride + 1, lo, g.out_w);
  return {lo, hi};
}

void im2col(const ConvGeometry& g, const float* in, float* col) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    const float* plane = in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          float* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill_n(dst, g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.in_w + kx - g.pad;
          const auto [lo, hi] = valid_columns(g, kx);
          std::fill(dst, dst + lo, 0.0f);
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.out_w, 0.0f);
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back onto the dense plane.
void col2im(const ConvGeometry& g, const float* col, float* in) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    float* plane = in + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          const float* src = row + static_cast<std::size_t>(oy) * g.out_w;
          float* dst = plane + static_cast<std::size_t>(iy) * g.in_w + kx - g.pad;
          const auto [lo, hi] = valid_columns(g, kx);
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

void check_bias(std::string_view op, const Shape& bias, int cout) {
  if (bias != Shape{1, cout, 1, 1}) {
    throw ShapeError(std::string(op) + ": bias must be [1," + std::to_string(cout) + ",1,1], got " +
                     bias.str());
  }
}

void check_stride(std::string_view op, int stride) {
  if (stride != 1 && stride != 2) {
    throw ShapeError(std::string(op) + ": stride must be 1 or 2, got " + std::to_string(stride));
  }
}

void add_bias(float* out, const float* bias, int cout, int cols) {
  for (int co = 0; co < cout; ++co) {
    float* row = out + static_cast<std::size_t>(co) * cols;
    const float b = bias[co];
    for (int i = 0; i < cols; ++i) row[i] += b;
  }
}

void accumulate_bias_grad(const float* gout, float* gbias, int cout, int cols) {
  for (int co = 0; co < cout; ++co) {
    const float* row = gout + static_cast<std::size_t>(co) * cols;
    double acc = 0.0;
    for (int i = 0; i < cols; ++i) acc += row[i];
    gbias[co] += static_cast<float>(acc);
  }
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias, int stride, int padding) {
  Graph& graph = input.graph();
  if (&weight.graph() != &graph || &bias.graph() != &graph) {
    throw ShapeError("conv2d: operands belong to different graphs");
  }
  const Shape in = input.shape();
  const Shape w = weight.shape();
  check_stride("conv2d", stride);
  if (w.h != w.w) throw ShapeError("conv2d: kernel must be square, got " + w.str());
  if (w.w % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + w.str());
  if (padding != w.h / 2) {
    throw ShapeError("conv2d: padding must be floor(K/2)=" + std::to_string(w.h / 2));
  }
  if (in.c != w.c) {
    throw ShapeError("conv2d: channel axis mismatch, input has " + std::to_string(in.c) +
                     ", weight expects " + std::to_string(w.c));
  }
  check_bias("conv2d", bias.shape(), w.n);

  ConvGeometry g{in.c, in.h, in.w, 0, 0, w.h, stride, padding};
  g.out_h = (in.h + 2 * padding - w.h) / stride + 1;
  g.out_w = (in.w + 2 * padding - w.w) / stride + 1;
  const int cout = w.n;
  Tensor out({in.n, cout, g.out_h, g.out_w});

  const CMapR wm(weight.value().raw(), cout, g.rows());
  MatR col(g.rows(), g.cols());
  for (int n = 0; n < in.n; ++n) {
    const float* src = input.value().plane(n, 0);
    MapR om(out.plane(n, 0), cout, g.cols());
    if (is_pointwise(g)) {
      om.noalias() = wm * CMapR(src, g.rows(), g.cols());
    } else {
      im2col(g, src, col.data());
      om.noalias() = wm * col;
    }
    add_bias(out.plane(n, 0), bias.value().raw(), cout, g.cols());
  }

  const int ii = input.id(), iw = weight.id(), ib = bias.id();
  return graph.record("conv2d", std::move(out), {ii, iw, ib},
                      [ii, iw, ib, g, cout](Graph& graph, int self) {
    const Tensor& x = graph.value(ii);
    const Tensor& gy = graph.grad_of(self);
    const CMapR wm(graph.value(iw).raw(), cout, g.rows());
    const bool want_x = graph.needs_grad(ii), want_w = graph.needs_grad(iw);
    MatR col(g.rows(), g.cols());
    MatR gcol;
    for (int n = 0; n < x.shape().n; ++n) {
      const CMapR gm(gy.plane(n, 0), cout, g.cols());
      if (want_w) {
        MapR gw(graph.grad_of(iw).raw(), cout, g.rows());
        if (is_pointwise(g)) {
          gw.noalias() += gm * CMapR(x.plane(n, 0), g.rows(), g.cols()).transpose();
        } else {
          im2col(g, x.plane(n, 0), col.data());
          gw.noalias() += gm * col.transpose();
        }
      }
      if (graph.needs_grad(ib)) {
        accumulate_bias_grad(gy.plane(n, 0), graph.grad_of(ib).raw(), cout, g.cols());
      }
      if (want_x) {
        float* gx = graph.grad_of(ii).plane(n, 0);
        if (is_pointwise(g)) {
          MapR(gx, g.rows(), g.cols()).noalias() += wm.transpose() * gm;
        } else {
          gcol.noalias() = wm.transpose() * gm;
          col2im(g, gcol.data(), gx);
        }
      }
    }
  });
}

Var tconv2d(Var input, Var weight, Var bias, int stride) {
  Graph& graph = input.graph();
  if (&weight.graph() != &graph || &bias.graph() != &graph) {
    throw ShapeError("tconv2d: operands belong to different graphs");
  }
  const Shape in = input.shape();
  const Shape w = weight.shape();
  check_stride("tconv2d", stride);
  if (w.h != w.w || w.w % 2 == 0) throw ShapeError("tconv2d: kernel must be square and odd");
  if (in.c != w.n) {
    throw ShapeError("tconv2d: channel axis mismatch, input has " + std::to_string(in.c) +
                     ", weight expects " + std::to_string(w.n));
  }
  const int cin = w.n, cout = w.c;
  check_bias("tconv2d", bias.shape(), cout);

  // The output plays the role of the dense input of a strided correlation
  // whose decimated side is the tconv input.
  ConvGeometry g{cout, in.h * stride, in.w * stride, in.h, in.w, w.h, stride, w.h / 2};
  Tensor out({in.n, cout, g.in_h, g.in_w});
  const CMapR wm(weight.value().raw(), cin, g.rows());
  MatR col(g.rows(), g.cols());
  for (int n = 0; n < in.n; ++n) {
    const CMapR xm(input.value().plane(n, 0), cin, g.cols());
    if (is_pointwise(g)) {
      MapR(out.plane(n, 0), cout, g.cols()).noalias() = wm.transpose() * xm;
    } else {
      col.noalias() = wm.transpose() * xm;
      col2im(g, col.data(), out.plane(n, 0));
    }
    add_bias(out.plane(n, 0), bias.value().raw(), cout, g.in_h * g.in_w);
  }

  const int ii = input.id(), iw = weight.id(), ib = bias.id();
  return graph.record("tconv2d", std::move(out), {ii, iw, ib},
                      [ii, iw, ib, g, cin, cout](Graph& graph, int self) {
    const Tensor& x = graph.value(ii);
    const Tensor& gy = graph.grad_of(self);
    const CMapR wm(graph.value(iw).raw(), cin, g.rows());
    const bool want_x = graph.needs_grad(ii), want_w = graph.needs_grad(iw);
    MatR col(g.rows(), g.cols());
    for (int n = 0; n < x.shape().n; ++n) {
      const float* gout = gy.plane(n, 0);
      if (graph.needs_grad(ib)) {
        accumulate_bias_grad(gout, graph.grad_of(ib).raw(), cout, g.in_h * g.in_w);
      }
      if (!want_x && !want_w) continue;
      if (is_pointwise(g)) {
        const CMapR gm(gout, g.rows(), g.cols());
        if (want_w) {
          MapR(graph.grad_of(iw).raw(), cin, g.rows()).noalias() +=
              CMapR(x.plane(n, 0), cin, g.cols()) * gm.transpose();
        }
        if (want_x) {
          MapR(graph.grad_of(ii).plane(n, 0), cin, g.cols()).noalias() += wm * gm;
        }
        continue;
      }
      im2col(g, gout, col.data());
      if (want_w) {
        MapR(graph.grad_of(iw).raw(), cin, g.rows()).noalias() +=
            CMapR(x.plane(n, 0), cin, g.cols()) * col.transpose();
      }
      if (want_x) {
        MapR(graph.grad_of(ii).plane(n, 0), cin, g.cols()).noalias() += wm * col;
      }
    }
  });
}

}  // namespace ydlc
