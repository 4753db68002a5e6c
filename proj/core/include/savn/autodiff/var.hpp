#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "savn/autodiff/tensor.hpp"

namespace savn::ad {

/// Primitive operation kinds. Every adjoint rule is itself written with these
/// kinds, so gradients of gradients come out of the same machinery.
enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Matmul,
  Transpose,
  Reshape,
  Conv1d,
  Conv1dInputGrad,
  Conv1dWeightGrad,
  Relu,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Reciprocal,
  Softmax,
  LogSoftmax,
  Sum,
  Mean,
  Expand,
  BroadcastCols,
  RowSum,
  L2Norm,
  Concat,
  Slice,
  Pad,
  Clamp,
};

std::string_view op_name(Op op);

/// Raised when an operation produces NaN or Inf. Carries the op that did it.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(Op op, std::uint64_t node_id);
  Op op() const noexcept { return op_; }
  std::uint64_t node_id() const noexcept { return node_id_; }

 private:
  Op op_;
  std::uint64_t node_id_;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct OpAttrs {
  double a = 0.0;
  double b = 0.0;
  std::vector<std::size_t> ints;
};

class Var;

struct Node : std::enable_shared_from_this<Node> {
  Op op = Op::Leaf;
  Tensor value;
  std::vector<std::shared_ptr<Node>> inputs;
  OpAttrs attrs;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string name;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  ~Node();
};

/// Handle to a node of a dynamically built expression graph. Values are
/// computed eagerly; the graph is retained only for nodes that require
/// gradients and only while recording is enabled.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value, std::string name = {});
  static Var scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Op op() const { return node_->op; }
  std::uint64_t id() const { return node_->id; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// True while graph recording is on for the calling thread.
bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise, same shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);

/// [m,n]x[n,p] -> [m,p] or [m,n]x[n] -> [m].
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

/// Valid-mode temporal convolution: x [C,T], w [O,C,W] -> [O,T-W+1].
Var conv1d(const Var& x, const Var& w);
/// Adjoint of conv1d w.r.t. its input: g [O,T'], w [O,C,W] -> [C,T'+W-1].
Var conv1d_input_grad(const Var& g, const Var& w);
/// Adjoint of conv1d w.r.t. its weight: x [C,T], g [O,T-W+1] -> [O,C,W].
Var conv1d_weight_grad(const Var& x, const Var& g, std::size_t width);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var reciprocal(const Var& a);
Var clamp(const Var& a, double lo, double hi);

/// Over a rank-1 tensor.
Var softmax(const Var& a);
Var log_softmax(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// One-element tensor broadcast to `shape`.
Var expand(const Var& a, Shape shape);
/// v [C] -> [C,T], every column equal to v.
Var broadcast_cols(const Var& v, std::size_t cols);
/// X [C,T] -> [C], sum over columns.
Var row_sum(const Var& a);
/// Euclidean norm of all entries. The gradient at zero is taken as zero.
Var l2_norm(const Var& a);

/// Concatenates flattened inputs into one rank-1 tensor.
Var concat(std::span<const Var> parts);
/// Contiguous flat range [offset, offset+length) as a rank-1 tensor.
Var slice(const Var& a, std::size_t offset, std::size_t length);
/// Places a rank-1 tensor into zeros of length `total` at `offset`.
Var pad(const Var& a, std::size_t offset, std::size_t total);

// Composites.
Var dot(const Var& a, const Var& b);
/// Scalar entry `i` of the flattened tensor.
Var index(const Var& a, std::size_t i);
Var linear(const Var& w, const Var& b, const Var& x);

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM cell step with gates ordered (input, forget, cell, output).
/// w_ih [4H,I], w_hh [4H,H], bias [4H].
LstmState lstm_cell(const Var& x, const LstmState& state, const Var& w_ih, const Var& w_hh,
                    const Var& bias);

/// Binary cross-entropy -(y log p + (1-y) log(1-p)) with p clamped to [eps, 1-eps].
Var binary_cross_entropy(const Var& p, double label, double eps = 1e-12);

struct GradOptions {
  /// Build the returned gradients as differentiable graph expressions.
  bool create_graph = false;
  /// Return zeros instead of throwing for inputs the root does not depend on.
  bool allow_unused = false;
};

/// Reverse-mode gradient of a one-element `root` with respect to each of `wrt`
/// (leaves or intermediate nodes).
std::vector<Var> grad(const Var& root, std::span<const Var> wrt, GradOptions options = {});
Var grad(const Var& root, const Var& wrt, GradOptions options = {});

/// Shared kernel used by eager evaluation and graph replay.
Tensor evaluate(Op op, std::span<const Tensor* const> inputs, const OpAttrs& attrs);

}  // namespace savn::ad
