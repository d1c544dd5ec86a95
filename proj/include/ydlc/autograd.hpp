#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "ydlc/tensor.hpp"

namespace ydlc {

// Trainable parameter with its gradient and Adam moments.
struct Param {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  long step = 0;

  Param() = default;
  explicit Param(Tensor init);
  void zero_grad() { grad.fill(0.0f); }
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  const Tensor& value() const;
  // By value: node storage moves as the graph grows.
  Shape shape() const;
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Define-by-run tape. Nodes are appended in execution order, so the node list
// is topologically sorted by construction.
class Graph {
 public:
  // Signature of a node's backward step: reads the node's output gradient and
  // accumulates into the gradients of its inputs.
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool record_gradients = true) : record_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value, bool requires_grad = false);
  Var param(Param& p);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  // Gradient of the last backward() w.r.t. a node; zero tensor when unreached.
  const Tensor& grad(Var v);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::string_view kind(int id) const { return nodes_[id].kind; }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  // Appends an operation node. `fn` may be empty for non-differentiable ops.
  Var record(std::string_view kind, Tensor value, std::vector<int> inputs, BackwardFn fn);

  // Lazily allocated gradient buffer of a node.
  Tensor& grad_of(int id);
  std::vector<int> inputs(int id) const { return nodes_[id].inputs; }

  // Reverse pass from a scalar node. Parameter gradients are accumulated into
  // Param::grad, so repeated calls add up until the grads are cleared.
  void backward(Var loss);

  // Number of node visits performed by the last backward().
  std::size_t last_backward_visits() const { return visits_; }

 private:
  struct Node {
    std::string_view kind;
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Param* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool record_;
  std::size_t visits_ = 0;
};

// ---- operations ----------------------------------------------------------
// Every op takes Vars from one graph and returns a new node on that graph.

// Cross-correlation. weight: [Cout, Cin, K, K], bias: [1, Cout, 1, 1].
// padding must equal K / 2.
Var conv2d(Var input, Var weight, Var bias, int stride, int padding);
// Transposed convolution. weight: [Cin, Cout, K, K], bias: [1, Cout, 1, 1].
// Output extents are exactly stride * input extents.
Var tconv2d(Var input, Var weight, Var bias, int stride);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var square(Var a);
Var sqrt(Var a);
Var abs(Var a);
Var scale(Var a, float s);
Var add_scalar(Var a, float s);
Var softplus(Var a);
// max(a, bound) with the gradient passed through when it pushes a upward.
Var lower_bound(Var a, float bound);

Var concat_channels(std::span<const Var> parts);
std::vector<Var> split_channels(Var a, std::span<const int> sizes);
// Keeps the top-left h x w window.
Var crop(Var a, int h, int w);
// Repeats a [1, C, 1, 1] tensor over the given shape.
Var broadcast_channels(Var a, Shape target);

Var mean(Var a);
Var sum(Var a);
Var mse(Var a, Var b);

// y = x where x >= 0, slope[c] * x otherwise. slope: [1, C, 1, 1].
Var prelu(Var x, Var slope);
// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), or times for the inverse.
// beta: [1, C, 1, 1] (>= 1e-6), gamma: [C, C, 1, 1] (>= 0).
Var gdn(Var x, Var beta, Var gamma, bool inverse);

// Sum over elements of -log2 P(value) for a Gaussian(mean, scale) integrated
// over [value - 0.5, value + 0.5], with P floored at 2^-16.
Var gaussian_rate_bits(Var value, Var mean, Var scale);

constexpr double kLikelihoodFloor = 1.0 / 65536.0;
constexpr float kScaleFloor = 0.11f;

}  // namespace ydlc
